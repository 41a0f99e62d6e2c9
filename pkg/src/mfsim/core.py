"""Shared domain types for population decision simulation.

Everything here is an immutable value type: profiles, rendered agent states,
actions, the evolving population summary (mean field), events, run
configuration, and trajectories. Validation returns violations as data so
callers can decide whether to fail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Union


DEFAULT_MEAN_FIELD_WORD_CAP = 200
DEFAULT_BATCH_SIZE = 16


class Gender(str, Enum):
    male = "male"
    female = "female"
    unspecified = "unspecified"


class FriendsLevel(str, Enum):
    very_few = "very_few"
    few = "few"
    moderate = "moderate"
    many = "many"
    very_many = "very_many"


class InfluenceLevel(str, Enum):
    very_low = "very_low"
    low = "low"
    moderate = "moderate"
    high = "high"
    very_high = "very_high"


class ActivityLevel(str, Enum):
    inactive = "inactive"
    moderately_active = "moderately_active"
    highly_active = "highly_active"


class Provenance(str, Enum):
    ground_truth = "ground_truth"
    generated = "generated"
    injected = "injected"


class DomainTag(str, Enum):
    crime = "crime"
    culture = "culture"
    health = "health"
    news = "news"
    politics = "politics"
    sports = "sports"
    technology = "technology"
    synthetic = "synthetic"


class ContextStrategy(str, Enum):
    mean_field = "mean_field"
    state_only = "state_only"
    recent_k = "recent_k"
    popular_k = "popular_k"
    sft = "sft"


@dataclass(frozen=True)
class AgentProfile:
    """One user's attribute bucket set, as exposed to the generative models."""

    location: str
    description: str
    gender: Gender
    friends_level: FriendsLevel
    influence_level: InfluenceLevel
    activity_level: ActivityLevel
    verified: bool
    verification_type: Optional[int] = None


_FRIENDS_TEXT = {
    FriendsLevel.very_few: "very few",
    FriendsLevel.few: "few",
    FriendsLevel.moderate: "moderate",
    FriendsLevel.many: "many",
    FriendsLevel.very_many: "very many",
}

_INFLUENCE_TEXT = {
    InfluenceLevel.very_low: "very low",
    InfluenceLevel.low: "low",
    InfluenceLevel.moderate: "moderate",
    InfluenceLevel.high: "high",
    InfluenceLevel.very_high: "very high",
}

_ACTIVITY_TEXT = {
    ActivityLevel.inactive: "inactive",
    ActivityLevel.moderately_active: "moderately active",
    ActivityLevel.highly_active: "highly active",
}


def render_profile_sentence(profile: AgentProfile) -> str:
    """Render the one-paragraph user description fed to the policy model.

    Deterministic: equal profiles render to byte-identical text.
    """
    if profile.verified:
        if profile.verification_type is not None:
            verified_status = f"verified (type {profile.verification_type})"
        else:
            verified_status = "verified"
    else:
        verified_status = "not verified"
    return (
        f"A user from {profile.location}, described as {profile.description}, "
        f"identified as {profile.gender.value}, with a "
        f"{_FRIENDS_TEXT[profile.friends_level]} number of friends and a "
        f"{_INFLUENCE_TEXT[profile.influence_level]} level of influence based on "
        f"followers. The user is {_ACTIVITY_TEXT[profile.activity_level]} in terms "
        f"of interactions, and the account is {verified_status}."
    )


@dataclass(frozen=True)
class AgentState:
    """An agent's textual state: profile plus topic, with the rendered paragraph."""

    profile: AgentProfile
    topic: str
    rendered_state: str

    @classmethod
    def build(cls, profile: AgentProfile, topic: str) -> "AgentState":
        return cls(profile=profile, topic=topic, rendered_state=render_profile_sentence(profile))


@dataclass(frozen=True)
class ActionText:
    """A single action (post/comment) with its position and origin."""

    text: str
    author_index: int
    step: int
    provenance: Provenance

    def is_blank(self) -> bool:
        return not self.text.strip()


# Toy runs use a small categorical summary alphabet; text runs use free text.
MeanFieldContent = Union[str, int]


@dataclass(frozen=True)
class MeanFieldState:
    """The population summary at one step: free text, or a toy symbol index."""

    content: MeanFieldContent
    step: int

    @classmethod
    def initial(cls, toy: bool = False) -> "MeanFieldState":
        # Step-0 summary is empty; toy runs reserve symbol 0 as the empty summary.
        return cls(content=0 if toy else "", step=0)

    def is_toy(self) -> bool:
        return isinstance(self.content, int)


def truncate_words(text: str, cap: int = DEFAULT_MEAN_FIELD_WORD_CAP) -> str:
    words = text.split()
    if len(words) <= cap:
        return text
    return " ".join(words[:cap])


@dataclass(frozen=True)
class Event:
    """A topic plus its time-ordered stream of (profile, ground-truth action) pairs."""

    event_id: str
    topic: str
    domain_tag: DomainTag
    timeline: tuple[tuple[AgentProfile, ActionText], ...]


def validate_event(event: Event) -> list[str]:
    """Check all Event invariants; returns one violation string per breach.

    Violations are data, not failures; an empty list means the event is valid.
    """
    violations: list[str] = []
    if not event.event_id:
        violations.append("event: empty event_id")
    prev_step: Optional[int] = None
    for idx, entry in enumerate(event.timeline):
        if not isinstance(entry, tuple) or len(entry) != 2 or entry[0] is None:
            violations.append(f"step {idx}: timeline entry missing author profile")
            continue
        _, action = entry
        if action.is_blank():
            violations.append(f"step {action.step}: empty action text")
        if action.provenance is not Provenance.ground_truth:
            violations.append(f"step {action.step}: timeline provenance must be ground_truth")
        if action.author_index < 0:
            violations.append(f"step {action.step}: negative author_index")
        if prev_step is not None and action.step <= prev_step:
            violations.append(
                f"step {action.step}: timeline steps not strictly increasing "
                f"(follows step {prev_step})"
            )
        prev_step = action.step
    return violations


@dataclass(frozen=True)
class SimulationConfig:
    """Run parameters for one simulation.

    ``warmup_steps`` counts the replayed prefix: steps t < warmup_steps copy the
    event's real actions, steps t >= warmup_steps are generated. Defaults to
    ceil(0.2 * horizon) when not given.
    """

    horizon: int
    batch_size: int = DEFAULT_BATCH_SIZE
    warmup_steps: Optional[int] = None
    seed: int = 0
    context_strategy: ContextStrategy = ContextStrategy.mean_field
    k: int = 0
    temperature: float = 1.0
    mf_temperature: Optional[float] = None
    resample_states: bool = False

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.warmup_steps is None:
            object.__setattr__(self, "warmup_steps", math.ceil(0.2 * self.horizon))
        if self.warmup_steps < 0 or self.warmup_steps > self.horizon:
            raise ValueError("warmup_steps must lie in [0, horizon]")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if self.mf_temperature is not None and self.mf_temperature < 0:
            raise ValueError("mf_temperature must be non-negative")
        if self.k < 0:
            raise ValueError("k must be >= 0")
        if self.k != 0 and self.context_strategy not in (
            ContextStrategy.recent_k,
            ContextStrategy.popular_k,
        ):
            raise ValueError("k must be 0 unless strategy is recent_k or popular_k")

    def with_warmup(self, warmup_steps: int) -> "SimulationConfig":
        return replace(self, warmup_steps=warmup_steps)

    def summary_temperature(self) -> float:
        """Decode temperature for the summary model; defaults to the policy's."""
        return self.temperature if self.mf_temperature is None else self.mf_temperature


@dataclass(frozen=True)
class ContextText:
    """Peer context handed to the policy prompt: a summary, joined comments, or
    nothing, depending on the strategy.

    state_only/sft always carry an empty payload; mean_field may carry one only
    at the initial empty summary.
    """

    strategy: ContextStrategy
    payload: str

    def __post_init__(self) -> None:
        if self.strategy in (ContextStrategy.state_only, ContextStrategy.sft) and self.payload:
            raise ValueError(f"strategy {self.strategy.value} must carry an empty payload")


@dataclass(frozen=True)
class StepRecord:
    """One simulation step: the active states, their actions, and the summary
    that conditioned them."""

    states: tuple[AgentState, ...]
    actions: tuple[ActionText, ...]
    mean_field: MeanFieldState

    def population_actions(self) -> tuple[ActionText, ...]:
        # Broadcast injections are appended past the active-agent range; they feed
        # the next summary update but are not population behaviour.
        return tuple(a for a in self.actions if a.author_index < len(self.states))


@dataclass(frozen=True)
class Trajectory:
    """The full per-step record of one simulated (or replayed) run."""

    event_id: str
    steps: tuple[StepRecord, ...]
    config: SimulationConfig
    fork_step: Optional[int] = None

    def action_texts(self) -> list[str]:
        return [a.text for step in self.steps for a in step.population_actions()]
