"""JSON codecs for the domain types and the trajectory run format.

Trajectories persist as JSONL: a header line carrying the config and fork
metadata, then one line per step. The format is append-only so an aborted run
still leaves a readable prefix on disk.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, IO, Iterable, Optional, Union

from .core import (
    ActionText,
    AgentProfile,
    AgentState,
    ActivityLevel,
    ContextStrategy,
    DomainTag,
    Event,
    FriendsLevel,
    Gender,
    InfluenceLevel,
    MeanFieldState,
    Provenance,
    SimulationConfig,
    StepRecord,
    Trajectory,
)


def profile_to_dict(profile: AgentProfile) -> dict[str, Any]:
    return {
        "location": profile.location,
        "description": profile.description,
        "gender": profile.gender.value,
        "friends_level": profile.friends_level.value,
        "influence_level": profile.influence_level.value,
        "activity_level": profile.activity_level.value,
        "verified": profile.verified,
        "verification_type": profile.verification_type,
    }


def profile_from_dict(data: dict[str, Any]) -> AgentProfile:
    return AgentProfile(
        location=data["location"],
        description=data["description"],
        gender=Gender(data["gender"]),
        friends_level=FriendsLevel(data["friends_level"]),
        influence_level=InfluenceLevel(data["influence_level"]),
        activity_level=ActivityLevel(data["activity_level"]),
        verified=data["verified"],
        verification_type=data.get("verification_type"),
    )


def state_to_dict(state: AgentState) -> dict[str, Any]:
    return {
        "profile": profile_to_dict(state.profile),
        "topic": state.topic,
        "rendered_state": state.rendered_state,
    }


def state_from_dict(data: dict[str, Any]) -> AgentState:
    return AgentState(
        profile=profile_from_dict(data["profile"]),
        topic=data["topic"],
        rendered_state=data["rendered_state"],
    )


def action_to_dict(action: ActionText) -> dict[str, Any]:
    return {
        "text": action.text,
        "author_index": action.author_index,
        "step": action.step,
        "provenance": action.provenance.value,
    }


def action_from_dict(data: dict[str, Any]) -> ActionText:
    return ActionText(
        text=data["text"],
        author_index=data["author_index"],
        step=data["step"],
        provenance=Provenance(data["provenance"]),
    )


def mean_field_to_dict(mf: MeanFieldState) -> dict[str, Any]:
    return {"content": mf.content, "step": mf.step}


def mean_field_from_dict(data: dict[str, Any]) -> MeanFieldState:
    return MeanFieldState(content=data["content"], step=data["step"])


def config_to_dict(config: SimulationConfig) -> dict[str, Any]:
    return {
        "horizon": config.horizon,
        "batch_size": config.batch_size,
        "warmup_steps": config.warmup_steps,
        "seed": config.seed,
        "context_strategy": config.context_strategy.value,
        "k": config.k,
        "temperature": config.temperature,
        "mf_temperature": config.mf_temperature,
        "resample_states": config.resample_states,
    }


def config_from_dict(data: dict[str, Any]) -> SimulationConfig:
    return SimulationConfig(
        horizon=data["horizon"],
        batch_size=data.get("batch_size", 16),
        warmup_steps=data.get("warmup_steps"),
        seed=data.get("seed", 0),
        context_strategy=ContextStrategy(data.get("context_strategy", "mean_field")),
        k=data.get("k", 0),
        temperature=data.get("temperature", 1.0),
        mf_temperature=data.get("mf_temperature"),
        resample_states=data.get("resample_states", False),
    )


def step_to_dict(step: StepRecord) -> dict[str, Any]:
    return {
        "states": [state_to_dict(s) for s in step.states],
        "actions": [action_to_dict(a) for a in step.actions],
        "mean_field": mean_field_to_dict(step.mean_field),
    }


def step_from_dict(data: dict[str, Any]) -> StepRecord:
    return StepRecord(
        states=tuple(state_from_dict(s) for s in data["states"]),
        actions=tuple(action_from_dict(a) for a in data["actions"]),
        mean_field=mean_field_from_dict(data["mean_field"]),
    )


def event_to_dict(event: Event) -> dict[str, Any]:
    return {
        "event_id": event.event_id,
        "topic": event.topic,
        "domain_tag": event.domain_tag.value,
        "timeline": [
            {"profile": profile_to_dict(p), "action": action_to_dict(a)}
            for p, a in event.timeline
        ],
    }


def event_from_dict(data: dict[str, Any]) -> Event:
    return Event(
        event_id=data["event_id"],
        topic=data["topic"],
        domain_tag=DomainTag(data["domain_tag"]),
        timeline=tuple(
            (profile_from_dict(e["profile"]), action_from_dict(e["action"]))
            for e in data["timeline"]
        ),
    )


def dumps_canonical(data: dict[str, Any]) -> str:
    """Stable JSON encoding used wherever byte-identity is asserted."""
    return json.dumps(data, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def trajectory_header(trajectory: Trajectory) -> dict[str, Any]:
    return {
        "kind": "header",
        "event_id": trajectory.event_id,
        "config": config_to_dict(trajectory.config),
        "fork_step": trajectory.fork_step,
    }


def serialize_trajectory(trajectory: Trajectory) -> str:
    lines = [dumps_canonical(trajectory_header(trajectory))]
    for step in trajectory.steps:
        lines.append(dumps_canonical({"kind": "step", **step_to_dict(step)}))
    return "\n".join(lines) + "\n"


def save_trajectory(trajectory: Trajectory, path: Union[str, Path]) -> None:
    Path(path).write_text(serialize_trajectory(trajectory), encoding="utf-8")


class TrajectoryWriter:
    """Appends steps as they complete, so a crash leaves a valid partial file."""

    def __init__(self, path: Union[str, Path], event_id: str, config: SimulationConfig,
                 fork_step: Optional[int] = None) -> None:
        self.path = Path(path)
        self._handle: Optional[IO[str]] = self.path.open("w", encoding="utf-8")
        header = {
            "kind": "header",
            "event_id": event_id,
            "config": config_to_dict(config),
            "fork_step": fork_step,
        }
        self._write_line(dumps_canonical(header))

    def _write_line(self, line: str) -> None:
        assert self._handle is not None
        self._handle.write(line + "\n")
        self._handle.flush()

    def append_step(self, step: StepRecord) -> None:
        self._write_line(dumps_canonical({"kind": "step", **step_to_dict(step)}))

    def close(self) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None


def load_trajectory(path: Union[str, Path]) -> Trajectory:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"{path}: empty trajectory file")
    header = json.loads(lines[0])
    if header.get("kind") != "header":
        raise ValueError(f"{path}: first line is not a trajectory header")
    steps = []
    for line in lines[1:]:
        if not line.strip():
            continue
        record = json.loads(line)
        if record.get("kind") != "step":
            raise ValueError(f"{path}: unexpected record kind {record.get('kind')!r}")
        steps.append(step_from_dict(record))
    return Trajectory(
        event_id=header["event_id"],
        steps=tuple(steps),
        config=config_from_dict(header["config"]),
        fork_step=header.get("fork_step"),
    )


def iter_jsonl(path: Union[str, Path]) -> Iterable[tuple[int, dict[str, Any]]]:
    """Yield (line_number, parsed_object) pairs; raises with the line number on bad JSON."""
    with Path(path).open("r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                yield line_number, json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: malformed JSON on line {line_number}: {exc}") from exc
