"""Event corpora: JSONL ingest, splitting, state resampling, synthetic generation.

Corpus files carry raw friend/follower/interaction counts; ingest buckets them
into the categorical levels the models see. Synthetic corpora are produced by a
hidden population process whose latent mood is steered by the previous step's
majority action, giving a real feedback loop at desk scale.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from .core import (
    ActionText,
    ActivityLevel,
    AgentProfile,
    AgentState,
    DomainTag,
    Event,
    FriendsLevel,
    Gender,
    InfluenceLevel,
    Provenance,
    validate_event,
)
from .persistence import iter_jsonl


class CorpusValidationError(ValueError):
    """Raised when an ingested corpus breaks an invariant."""

    def __init__(self, violations: list[str]) -> None:
        self.violations = violations
        super().__init__("corpus validation failed:\n" + "\n".join(violations))


class CorpusSource(str, Enum):
    file = "file"
    synthetic = "synthetic"


@dataclass(frozen=True)
class Corpus:
    events: tuple[Event, ...]
    source: CorpusSource
    # Hidden latent sequences of synthetic events, keyed by event_id. Oracle-only:
    # simulators never see these.
    latents: dict[str, tuple[int, ...]] = field(default_factory=dict)

    def event_by_id(self, event_id: str) -> Event:
        for event in self.events:
            if event.event_id == event_id:
                return event
        raise KeyError(f"unknown event_id {event_id!r}")


def friends_level_from_count(count: int) -> FriendsLevel:
    if count < 10:
        return FriendsLevel.very_few
    if count <= 30:
        return FriendsLevel.few
    if count <= 1000:
        return FriendsLevel.moderate
    if count <= 3000:
        return FriendsLevel.many
    return FriendsLevel.very_many


def influence_level_from_count(count: int) -> InfluenceLevel:
    if count <= 100:
        return InfluenceLevel.very_low
    if count <= 500:
        return InfluenceLevel.low
    if count <= 1000:
        return InfluenceLevel.moderate
    if count <= 10000:
        return InfluenceLevel.high
    return InfluenceLevel.very_high


def activity_level_from_count(count: int) -> ActivityLevel:
    if count < 10:
        return ActivityLevel.inactive
    if count <= 100:
        return ActivityLevel.moderately_active
    return ActivityLevel.highly_active


# Written back on save; each value re-buckets to the level it represents.
_FRIENDS_REPRESENTATIVE = {
    FriendsLevel.very_few: 5,
    FriendsLevel.few: 20,
    FriendsLevel.moderate: 100,
    FriendsLevel.many: 2000,
    FriendsLevel.very_many: 5000,
}
_INFLUENCE_REPRESENTATIVE = {
    InfluenceLevel.very_low: 50,
    InfluenceLevel.low: 250,
    InfluenceLevel.moderate: 750,
    InfluenceLevel.high: 5000,
    InfluenceLevel.very_high: 20000,
}
_ACTIVITY_REPRESENTATIVE = {
    ActivityLevel.inactive: 5,
    ActivityLevel.moderately_active: 50,
    ActivityLevel.highly_active: 500,
}


def _profile_from_raw(raw: dict[str, Any], where: str) -> AgentProfile:
    try:
        gender = Gender(raw.get("gender", "unspecified"))
    except ValueError as exc:
        raise CorpusValidationError([f"{where}: unknown gender {raw.get('gender')!r}"]) from exc
    return AgentProfile(
        location=raw.get("location", ""),
        description=raw.get("description", ""),
        gender=gender,
        friends_level=friends_level_from_count(int(raw.get("friends_count", 0))),
        influence_level=influence_level_from_count(int(raw.get("followers_count", 0))),
        activity_level=activity_level_from_count(int(raw.get("interactions_count", 0))),
        verified=bool(raw.get("verified", False)),
        verification_type=raw.get("verification_type"),
    )


def _event_from_line(obj: dict[str, Any], line_number: int) -> tuple[Event, Optional[tuple[int, ...]]]:
    where = f"line {line_number}"
    try:
        timeline = []
        for idx, entry in enumerate(obj["timeline"]):
            profile = _profile_from_raw(entry["profile"], f"{where} entry {idx}")
            action = ActionText(
                text=entry["text"],
                author_index=idx,
                step=int(entry["step"]),
                provenance=Provenance.ground_truth,
            )
            timeline.append((profile, action))
        event = Event(
            event_id=obj["event_id"],
            topic=obj["topic"],
            domain_tag=DomainTag(obj.get("domain_tag", "synthetic")),
            timeline=tuple(timeline),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, CorpusValidationError):
            raise
        raise CorpusValidationError([f"{where}: bad event object ({exc})"]) from exc
    latents = tuple(obj["latents"]) if "latents" in obj else None
    return event, latents


def load_corpus(path: Union[str, Path]) -> Corpus:
    """Load and validate a JSONL corpus; raw counts are bucketed on ingest."""
    events: list[Event] = []
    latents: dict[str, tuple[int, ...]] = {}
    violations: list[str] = []
    seen_ids: set[str] = set()
    for line_number, obj in iter_jsonl(path):
        event, event_latents = _event_from_line(obj, line_number)
        if event.event_id in seen_ids:
            violations.append(f"line {line_number}: duplicate event_id {event.event_id!r}")
        seen_ids.add(event.event_id)
        for violation in validate_event(event):
            violations.append(f"event {event.event_id}: {violation}")
        events.append(event)
        if event_latents is not None:
            latents[event.event_id] = event_latents
    if violations:
        raise CorpusValidationError(violations)
    source = CorpusSource.synthetic if latents else CorpusSource.file
    return Corpus(events=tuple(events), source=source, latents=latents)


def _profile_to_raw(profile: AgentProfile) -> dict[str, Any]:
    return {
        "location": profile.location,
        "description": profile.description,
        "gender": profile.gender.value,
        "friends_count": _FRIENDS_REPRESENTATIVE[profile.friends_level],
        "followers_count": _INFLUENCE_REPRESENTATIVE[profile.influence_level],
        "interactions_count": _ACTIVITY_REPRESENTATIVE[profile.activity_level],
        "verified": profile.verified,
        "verification_type": profile.verification_type,
    }


def save_corpus(corpus: Corpus, path: Union[str, Path]) -> None:
    lines = []
    for event in corpus.events:
        obj: dict[str, Any] = {
            "event_id": event.event_id,
            "topic": event.topic,
            "domain_tag": event.domain_tag.value,
            "timeline": [
                {"step": action.step, "profile": _profile_to_raw(profile), "text": action.text}
                for profile, action in event.timeline
            ],
        }
        if event.event_id in corpus.latents:
            obj["latents"] = list(corpus.latents[event.event_id])
        lines.append(json.dumps(obj, ensure_ascii=False))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def split_corpus(corpus: Corpus, train_fraction: float, seed: int) -> tuple[Corpus, Corpus]:
    """Deterministic disjoint split; |train| = round(train_fraction * N)."""
    if not corpus.events:
        raise ValueError("cannot split an empty corpus")
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly inside (0, 1)")
    n = len(corpus.events)
    n_train = round(train_fraction * n)
    order = np.random.default_rng(seed & 0xFFFFFFFFFFFFFFFF).permutation(n)
    train_idx = set(order[:n_train].tolist())
    train_events = tuple(e for i, e in enumerate(corpus.events) if i in train_idx)
    test_events = tuple(e for i, e in enumerate(corpus.events) if i not in train_idx)

    def pick(events: tuple[Event, ...]) -> Corpus:
        return Corpus(
            events=events,
            source=corpus.source,
            latents={e.event_id: corpus.latents[e.event_id]
                     for e in events if e.event_id in corpus.latents},
        )

    return pick(train_events), pick(test_events)


def resample_states(event: Event, count: int, seed: int) -> list[AgentState]:
    """Draw agent states i.i.d. with replacement from the event's empirical
    profile distribution (the whole timeline, not a window)."""
    if count < 0:
        raise ValueError("count must be >= 0")
    if count == 0:
        return []
    if not event.timeline:
        raise ValueError("cannot resample states from an event with an empty timeline")
    rng = np.random.default_rng(seed & 0xFFFFFFFFFFFFFFFF)
    picks = rng.integers(0, len(event.timeline), size=count)
    return [AgentState.build(event.timeline[int(i)][0], event.topic) for i in picks]


# --- synthetic population process ------------------------------------------


def toy_profile(state_symbol: int) -> AgentProfile:
    """Profile encoding a toy state symbol; the description carries the symbol."""
    return AgentProfile(
        location="synthetic",
        description=f"state:{state_symbol}",
        gender=Gender.unspecified,
        friends_level=FriendsLevel.moderate,
        influence_level=InfluenceLevel.moderate,
        activity_level=ActivityLevel.moderately_active,
        verified=False,
        verification_type=None,
    )


def toy_state_symbol(state: Union[AgentState, AgentProfile]) -> int:
    profile = state.profile if isinstance(state, AgentState) else state
    if not profile.description.startswith("state:"):
        raise ValueError(f"profile is not a toy profile: {profile.description!r}")
    return int(profile.description.split(":", 1)[1])


def toy_action_symbol(text: str) -> int:
    try:
        return int(text.strip())
    except ValueError as exc:
        raise ValueError(f"action text is not a toy symbol: {text!r}") from exc


def _check_row_stochastic(name: str, matrix: np.ndarray, tol: float = 1e-12) -> None:
    if np.any(matrix < 0):
        raise ValueError(f"{name} has negative entries")
    sums = matrix.sum(axis=-1)
    if not np.allclose(sums, 1.0, atol=tol, rtol=0.0):
        raise ValueError(f"{name} rows must sum to 1 within {tol}")


@dataclass(frozen=True)
class SyntheticGenConfig:
    """Parameters of the hidden population process.

    ``latent_transition`` has shape (latent, action, latent): the next mood
    given the current mood and the previous step's majority action.
    ``emission`` has shape (state, latent, action). ``agents_per_step`` is the
    number of actions emitted per population step.
    """

    num_events: int
    steps_per_event: int
    state_alphabet_size: int = 6
    action_alphabet_size: int = 4
    latent_alphabet_size: int = 8
    agents_per_step: int = 16
    latent_transition: Optional[np.ndarray] = None
    emission: Optional[np.ndarray] = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_events < 1 or self.steps_per_event < 1 or self.agents_per_step < 1:
            raise ValueError("num_events, steps_per_event, agents_per_step must be >= 1")
        if min(self.state_alphabet_size, self.action_alphabet_size,
               self.latent_alphabet_size) < 2:
            raise ValueError("alphabet sizes must be >= 2")
        if self.latent_transition is None:
            uniform = np.full(
                (self.latent_alphabet_size, self.action_alphabet_size,
                 self.latent_alphabet_size),
                1.0 / self.latent_alphabet_size,
            )
            object.__setattr__(self, "latent_transition", uniform)
        if self.emission is None:
            uniform = np.full(
                (self.state_alphabet_size, self.latent_alphabet_size,
                 self.action_alphabet_size),
                1.0 / self.action_alphabet_size,
            )
            object.__setattr__(self, "emission", uniform)
        expected_t = (self.latent_alphabet_size, self.action_alphabet_size,
                      self.latent_alphabet_size)
        expected_e = (self.state_alphabet_size, self.latent_alphabet_size,
                      self.action_alphabet_size)
        if self.latent_transition.shape != expected_t:
            raise ValueError(f"latent_transition must have shape {expected_t}")
        if self.emission.shape != expected_e:
            raise ValueError(f"emission must have shape {expected_e}")
        _check_row_stochastic("latent_transition", self.latent_transition)
        _check_row_stochastic("emission", self.emission)


def _sample_row(rng: np.random.Generator, row: np.ndarray) -> int:
    return int(np.searchsorted(np.cumsum(row), rng.random(), side="right"))


def majority_action(actions: list[int]) -> int:
    """Most frequent action symbol; ties broken toward the lowest index."""
    counts = np.bincount(np.asarray(actions, dtype=int))
    return int(np.argmax(counts))


def generate_synthetic(cfg: SyntheticGenConfig) -> Corpus:
    """Roll out the hidden process for each event; byte-identical per (cfg, seed)."""
    events: list[Event] = []
    latents: dict[str, tuple[int, ...]] = {}
    for event_index in range(cfg.num_events):
        rng = np.random.default_rng(
            np.random.SeedSequence(cfg.seed & 0xFFFFFFFFFFFFFFFF, spawn_key=(event_index,))
        )
        z = int(rng.integers(cfg.latent_alphabet_size))
        timeline: list[tuple[AgentProfile, ActionText]] = []
        z_sequence: list[int] = []
        entry_index = 0
        for _ in range(cfg.steps_per_event):
            z_sequence.append(z)
            step_actions: list[int] = []
            for _ in range(cfg.agents_per_step):
                s = int(rng.integers(cfg.state_alphabet_size))
                a = _sample_row(rng, cfg.emission[s, z])
                step_actions.append(a)
                timeline.append((
                    toy_profile(s),
                    ActionText(
                        text=str(a),
                        author_index=entry_index,
                        step=entry_index,
                        provenance=Provenance.ground_truth,
                    ),
                ))
                entry_index += 1
            z = _sample_row(rng, cfg.latent_transition[z, majority_action(step_actions)])
        event_id = f"syn-{cfg.seed}-{event_index:04d}"
        events.append(Event(
            event_id=event_id,
            topic=f"synthetic topic {event_index}",
            domain_tag=DomainTag.synthetic,
            timeline=tuple(timeline),
        ))
        latents[event_id] = tuple(z_sequence)
    return Corpus(events=tuple(events), source=CorpusSource.synthetic, latents=latents)


def self_exciting_config(
    seed: int,
    num_events: int = 8,
    steps_per_event: int = 24,
    agents_per_step: int = 16,
    stickiness: float = 0.97,
    emission_focus: float = 0.7,
    num_states: int = 4,
    num_actions: int = 4,
) -> SyntheticGenConfig:
    """A population whose mood locks onto the majority action.

    The latent alphabet equals the action alphabet: the next mood lands on the
    majority action with probability ``stickiness``. Each mood emits only two
    actions, its own symbol (``emission_focus`` for even states, an even split
    for odd states) and a companion, action 0, that every mood leaks toward, so
    the feedback loop gradually funnels the population into the anchor regime
    while agent states carry signal of their own.
    """
    n_lat = num_actions
    transition = np.empty((n_lat, num_actions, n_lat))
    for z in range(n_lat):
        for a in range(num_actions):
            transition[z, a, :] = (1.0 - stickiness) / (n_lat - 1)
            transition[z, a, a] = stickiness
    if not 0.5 < emission_focus < 1.0:
        raise ValueError("emission_focus must lie in (0.5, 1)")
    emission = np.zeros((num_states, n_lat, num_actions))
    for s in range(num_states):
        for z in range(n_lat):
            companion = 0 if z != 0 else 1
            focus = emission_focus if s % 2 == 0 else 0.5
            emission[s, z, z] = focus
            emission[s, z, companion] = 1.0 - focus
    return SyntheticGenConfig(
        num_events=num_events,
        steps_per_event=steps_per_event,
        state_alphabet_size=num_states,
        action_alphabet_size=num_actions,
        latent_alphabet_size=n_lat,
        agents_per_step=agents_per_step,
        latent_transition=transition,
        emission=emission,
        seed=seed,
    )


def no_feedback_ablation(cfg: SyntheticGenConfig) -> SyntheticGenConfig:
    """Same process with the majority-action conditioning averaged out."""
    averaged = cfg.latent_transition.mean(axis=1, keepdims=True)
    transition = np.repeat(averaged, cfg.action_alphabet_size, axis=1)
    return replace(cfg, latent_transition=transition)
