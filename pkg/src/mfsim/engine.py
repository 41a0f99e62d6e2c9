"""The simulation loop: warm-up replay, per-step policy fan-out, summary
updates, state transitions, baselines, interventions, and forecasting forks.

Steps t < warmup_steps replay the event's real actions; afterwards each active
agent samples an action from the policy conditioned on its state and the
current population summary. Per-(step, agent) derived seeds make runs
reproducible and independent of fan-out order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Union

import numpy as np

from .backends import (
    STREAM_MEAN_FIELD,
    STREAM_POLICY,
    STREAM_STATES,
    ToyMeanFieldBackend,
    ToyPolicyBackend,
    derive_seed,
)
from .core import (
    ActionText,
    AgentState,
    ContextStrategy,
    ContextText,
    DEFAULT_MEAN_FIELD_WORD_CAP,
    Event,
    InfluenceLevel,
    MeanFieldState,
    Provenance,
    SimulationConfig,
    StepRecord,
    Trajectory,
    truncate_words,
    validate_event,
)
from .corpus import majority_action, resample_states, toy_action_symbol, toy_state_symbol
from .prompts import render_meanfield_prompt, render_policy_prompt


class HorizonError(RuntimeError):
    """The event timeline ran out and resampling was disabled."""


class SimulationAborted(RuntimeError):
    """A backend failed mid-run; carries the completed prefix."""

    def __init__(self, partial: Trajectory, cause: Exception) -> None:
        self.partial = partial
        self.cause = cause
        super().__init__(f"simulation aborted at step {len(partial.steps)}: {cause}")


class InterventionKind(str, Enum):
    seed_agents = "seed_agents"
    broadcast = "broadcast"


@dataclass(frozen=True)
class InterventionEntry:
    step: int
    kind: InterventionKind
    actions: tuple[str, ...]
    count: int = 0

    def __post_init__(self) -> None:
        if not self.actions:
            raise ValueError("intervention entry needs at least one action text")
        if self.kind is InterventionKind.seed_agents and self.count < 1:
            raise ValueError("seed_agents needs count >= 1")


@dataclass(frozen=True)
class InterventionSchedule:
    entries: tuple[InterventionEntry, ...]

    def validate(self, config: SimulationConfig) -> None:
        for entry in self.entries:
            if not 0 <= entry.step < config.horizon:
                raise ValueError(f"intervention step {entry.step} outside horizon "
                                 f"[0, {config.horizon})")
            if entry.kind is InterventionKind.seed_agents and entry.count > config.batch_size:
                raise ValueError(f"seed_agents count {entry.count} exceeds batch size "
                                 f"{config.batch_size}")

    def at(self, step: int) -> list[InterventionEntry]:
        return [e for e in self.entries if e.step == step]


@dataclass(frozen=True)
class PopularityScore:
    followers_weight: float = 1.0
    replies_weight: float = 1.0
    likes_weight: float = 1.0

    def __post_init__(self) -> None:
        weights = (self.followers_weight, self.replies_weight, self.likes_weight)
        if any(w < 0 for w in weights) or not any(w > 0 for w in weights):
            raise ValueError("popularity weights must be non-negative with at least one > 0")


@dataclass(frozen=True)
class HistoryItem:
    """An already-taken action plus the popularity signals attached to it."""

    action: ActionText
    followers: float = 0.0
    replies: float = 0.0
    likes: float = 0.0


_INFLUENCE_ORDINAL = {
    InfluenceLevel.very_low: 0.0,
    InfluenceLevel.low: 1.0,
    InfluenceLevel.moderate: 2.0,
    InfluenceLevel.high: 3.0,
    InfluenceLevel.very_high: 4.0,
}


def build_context(strategy: ContextStrategy, history: list[HistoryItem],
                  mean_field: MeanFieldState, k: int,
                  score: Optional[PopularityScore] = None) -> ContextText:
    """Assemble the peer context a strategy exposes to the policy.

    recent_k takes the last k actions chronologically; popular_k the top k by
    weighted popularity with ties broken toward recency (selected comments are
    presented in chronological order). k larger than the history degrades to
    the whole history.
    """
    if strategy in (ContextStrategy.state_only, ContextStrategy.sft):
        return ContextText(strategy=strategy, payload="")
    if strategy is ContextStrategy.mean_field:
        return ContextText(strategy=strategy, payload=str(mean_field.content))
    if strategy is ContextStrategy.recent_k:
        chosen = history[-k:] if k else []
        return ContextText(strategy=strategy,
                           payload="\n".join(item.action.text for item in chosen))
    if strategy is ContextStrategy.popular_k:
        score = score or PopularityScore()

        def weighted(item: HistoryItem) -> float:
            return (score.followers_weight * item.followers
                    + score.replies_weight * item.replies
                    + score.likes_weight * item.likes)

        ranked = sorted(
            range(len(history)),
            key=lambda i: (weighted(history[i]), i),
            reverse=True,
        )
        chosen_idx = sorted(ranked[:k]) if k else []
        return ContextText(strategy=strategy,
                           payload="\n".join(history[i].action.text for i in chosen_idx))
    raise ValueError(f"unknown strategy {strategy!r}")


def update_mean_field(prev: MeanFieldState, states: list[AgentState],
                      actions: list[ActionText], mf_backend,
                      *, seed: int = 0, temperature: float = 0.0, topic: str = "",
                      word_cap: int = DEFAULT_MEAN_FIELD_WORD_CAP) -> MeanFieldState:
    """Advance the population summary one step from the latest batch of actions."""
    if not actions:
        raise ValueError("mean-field update needs at least one action")
    if isinstance(mf_backend, ToyMeanFieldBackend):
        symbols = [toy_action_symbol(a.text) for a in actions]
        next_symbol = mf_backend.sample_symbol(
            int(prev.content), majority_action(symbols), seed, temperature
        )
        return MeanFieldState(content=next_symbol, step=prev.step + 1)
    prompt = render_meanfield_prompt(topic, prev, list(actions))
    completion = mf_backend.generate(prompt.text, seed=seed, temperature=temperature)
    return MeanFieldState(content=truncate_words(completion, word_cap), step=prev.step + 1)


def _timeline_block(event: Event, t: int, batch_size: int):
    return event.timeline[t * batch_size:(t + 1) * batch_size]


def advance_states(event: Event, t: int, config: SimulationConfig) -> list[AgentState]:
    """States for step t+1: the next corpus block, or resampled profiles when
    resampling is enabled (long-horizon mode)."""
    block = _timeline_block(event, t + 1, config.batch_size)
    if block and not config.resample_states:
        return [AgentState.build(profile, event.topic) for profile, _ in block]
    if config.resample_states:
        return resample_states(event, config.batch_size,
                               derive_seed(config.seed, STREAM_STATES, t + 1))
    raise HorizonError(
        f"timeline exhausted at step {t + 1} and state resampling is disabled"
    )


def apply_interventions(schedule: Optional[InterventionSchedule], t: int,
                        generated: list[ActionText]) -> list[ActionText]:
    """Overlay the step's scheduled interventions onto the generated actions.

    seed_agents replaces the first ``count`` actions (they become observed
    population behaviour); broadcast appends texts past the active-agent range,
    so they reach the next summary update but never the metric windows.
    """
    if schedule is None:
        return list(generated)
    actions = list(generated)
    n_population = len(generated)
    for entry in schedule.at(t):
        if entry.kind is InterventionKind.seed_agents:
            if entry.count > n_population:
                raise ValueError(f"seed_agents count {entry.count} exceeds the "
                                 f"{n_population} active agents at step {t}")
            for i in range(entry.count):
                actions[i] = ActionText(
                    text=entry.actions[i % len(entry.actions)],
                    author_index=i,
                    step=t,
                    provenance=Provenance.injected,
                )
        else:
            for text in entry.actions:
                actions.append(ActionText(
                    text=text,
                    author_index=len(actions),
                    step=t,
                    provenance=Provenance.injected,
                ))
    return actions


def _toy_mf_symbol(mean_field: MeanFieldState, strategy: ContextStrategy) -> int:
    # Only the mean_field strategy feeds the summary to the policy; baselines
    # see the constant empty symbol.
    if strategy is ContextStrategy.mean_field:
        return int(mean_field.content)
    return 0


def _history_items(record: StepRecord) -> list[HistoryItem]:
    items = []
    for action in record.population_actions():
        profile = record.states[action.author_index].profile
        items.append(HistoryItem(
            action=action,
            followers=_INFLUENCE_ORDINAL[profile.influence_level],
        ))
    return items


def _simulate(event: Event, config: SimulationConfig, policy_backend, mf_backend,
              schedule: Optional[InterventionSchedule],
              *, prefix: tuple[StepRecord, ...] = (),
              fork_step: Optional[int] = None,
              max_workers: int = 1,
              sink: Optional[Callable[[StepRecord], None]] = None) -> Trajectory:
    violations = validate_event(event)
    if violations:
        raise ValueError("event failed validation: " + "; ".join(violations))
    if schedule is not None:
        schedule.validate(config)
    toy_policy = isinstance(policy_backend, ToyPolicyBackend)
    toy_mf = isinstance(mf_backend, ToyMeanFieldBackend)

    steps: list[StepRecord] = list(prefix)
    history: list[HistoryItem] = []
    for record in prefix:
        if sink is not None:
            sink(record)
        history.extend(_history_items(record))

    def advance_mean_field(current: MeanFieldState, record: StepRecord, t: int) -> MeanFieldState:
        if mf_backend is None:
            return MeanFieldState(content=0 if toy_mf else "", step=t + 1)
        return update_mean_field(
            current, list(record.states), list(record.actions), mf_backend,
            seed=derive_seed(config.seed, STREAM_MEAN_FIELD, t),
            temperature=config.summary_temperature(),
            topic=event.topic,
        )

    start = len(prefix)
    if start == 0:
        mean_field = MeanFieldState.initial(toy=toy_mf)
        block = _timeline_block(event, 0, config.batch_size)
        if not block:
            raise HorizonError("event timeline is empty")
        states = [AgentState.build(profile, event.topic) for profile, _ in block]
    else:
        mean_field = advance_mean_field(prefix[-1].mean_field, prefix[-1], start - 1)
        states = advance_states(event, start - 1, config)

    def generate_one(t: int, i: int, state: AgentState, context: ContextText) -> ActionText:
        seed_i = derive_seed(config.seed, STREAM_POLICY, t, i)
        if toy_policy:
            symbol = policy_backend.sample_action(
                toy_state_symbol(state), _toy_mf_symbol(mean_field, config.context_strategy),
                seed_i, config.temperature,
            )
            text = str(symbol)
        else:
            prompt = render_policy_prompt(state, context, config.context_strategy)
            text = policy_backend.generate(prompt.text, seed=seed_i,
                                           temperature=config.temperature)
        return ActionText(text=text, author_index=i, step=t,
                          provenance=Provenance.generated)

    for t in range(start, config.horizon):
        try:
            if t < config.warmup_steps:
                block = _timeline_block(event, t, config.batch_size)
                if not block:
                    raise HorizonError(f"warm-up step {t} has no timeline entries")
                actions = [
                    ActionText(text=action.text, author_index=i, step=t,
                               provenance=Provenance.ground_truth)
                    for i, (_, action) in enumerate(block)
                ]
            else:
                if policy_backend is None:
                    raise ValueError("policy backend required once warm-up ends")
                context = build_context(config.context_strategy, history, mean_field,
                                        config.k)
                if max_workers > 1 and len(states) > 1:
                    with ThreadPoolExecutor(max_workers=max_workers) as pool:
                        actions = list(pool.map(
                            lambda i: generate_one(t, i, states[i], context),
                            range(len(states)),
                        ))
                else:
                    actions = [generate_one(t, i, states[i], context)
                               for i in range(len(states))]
            actions = apply_interventions(schedule, t, actions)
            record = StepRecord(states=tuple(states), actions=tuple(actions),
                                mean_field=mean_field)
            steps.append(record)
            if sink is not None:
                sink(record)
            history.extend(_history_items(record))
            if t + 1 < config.horizon:
                mean_field = advance_mean_field(mean_field, record, t)
                states = advance_states(event, t, config)
        except (ValueError, HorizonError):
            raise
        except Exception as exc:
            partial = Trajectory(event_id=event.event_id, steps=tuple(steps),
                                 config=config, fork_step=fork_step)
            raise SimulationAborted(partial, exc) from exc

    return Trajectory(event_id=event.event_id, steps=tuple(steps), config=config,
                      fork_step=fork_step)


def run_simulation(event: Event, config: SimulationConfig, policy_backend=None,
                   mf_backend=None, schedule: Optional[InterventionSchedule] = None,
                   *, max_workers: int = 1,
                   sink: Optional[Callable[[StepRecord], None]] = None) -> Trajectory:
    """Run the full loop over ``config.horizon`` steps and return the trajectory.

    The result is a deterministic function of (event, config, schedule, seeds):
    all randomness flows through per-(stream, step, agent) derived seeds.
    """
    return _simulate(event, config, policy_backend, mf_backend, schedule,
                     max_workers=max_workers, sink=sink)


def ground_truth_trajectory(event: Event, config: SimulationConfig) -> Trajectory:
    """Pure replay: every step re-emits the event's own actions."""
    return run_simulation(event, config.with_warmup(config.horizon))


def event_from_trajectory(trajectory: Trajectory, topic: Optional[str] = None) -> Event:
    """Flatten a trajectory back into an event so it can seed further forks."""
    if topic is None:
        topic = trajectory.steps[0].states[0].topic if trajectory.steps else ""
    timeline = []
    index = 0
    for record in trajectory.steps:
        for action in record.population_actions():
            timeline.append((
                record.states[action.author_index].profile,
                ActionText(text=action.text, author_index=index, step=index,
                           provenance=Provenance.ground_truth),
            ))
            index += 1
    from .core import DomainTag  # local import to keep module top uncluttered
    return Event(event_id=trajectory.event_id, topic=topic,
                 domain_tag=DomainTag.synthetic, timeline=tuple(timeline))


def fork_trajectory(source: Union[Event, Trajectory], start_step: int,
                    config: SimulationConfig, policy_backend, mf_backend,
                    schedule: Optional[InterventionSchedule] = None,
                    *, max_workers: int = 1,
                    sink: Optional[Callable[[StepRecord], None]] = None) -> Trajectory:
    """Restart a run from a prefix at ``start_step``; the prefix is replayed
    (event source) or copied verbatim (trajectory source), the suffix generated.
    """
    if not 0 <= start_step <= config.horizon:
        raise ValueError(f"start_step {start_step} outside [0, {config.horizon}]")
    if isinstance(source, Event):
        trajectory = _simulate(source, config.with_warmup(start_step), policy_backend,
                               mf_backend, schedule, fork_step=start_step,
                               max_workers=max_workers, sink=sink)
        return trajectory
    parent = source
    if start_step > len(parent.steps):
        raise ValueError(f"parent trajectory has only {len(parent.steps)} steps; "
                         f"cannot fork at {start_step}")
    pseudo_event = event_from_trajectory(parent)
    return _simulate(pseudo_event, config.with_warmup(start_step), policy_backend,
                     mf_backend, schedule, prefix=parent.steps[:start_step],
                     fork_step=start_step, max_workers=max_workers, sink=sink)


def forecast_error(reference: Trajectory, generated: Trajectory, n_actions: int,
                   window: int = 16, start: Optional[int] = None) -> float:
    """Mean L1 distance between windowed toy-action distributions, over the
    generated trajectory's evaluated steps."""
    if start is None:
        start = generated.fork_step if generated.fork_step is not None \
            else generated.config.warmup_steps
    horizon = min(len(reference.steps), len(generated.steps))
    if start >= horizon:
        raise ValueError("no steps to compare beyond the start step")

    def window_dist(trajectory: Trajectory, t: int) -> np.ndarray:
        symbols: list[int] = []
        for record in trajectory.steps[:t + 1]:
            symbols.extend(toy_action_symbol(a.text) for a in record.population_actions())
        recent = symbols[-window:]
        counts = np.bincount(np.asarray(recent, dtype=int), minlength=n_actions)
        return counts / counts.sum()

    errors = [
        float(np.abs(window_dist(reference, t) - window_dist(generated, t)).sum())
        for t in range(start, horizon)
    ]
    return float(np.mean(errors))
