"""Filesystem-backed run records: one directory per run, append-only trajectory
JSONL plus a small record file. Status transitions are serialized per store.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Any, Optional, Union

from .core import SimulationConfig
from .engine import InterventionEntry, InterventionKind, InterventionSchedule
from .persistence import config_from_dict, config_to_dict


class RunStatus(str, Enum):
    pending = "pending"
    running = "running"
    done = "done"
    failed = "failed"


def schedule_to_dict(schedule: Optional[InterventionSchedule]) -> Optional[dict[str, Any]]:
    if schedule is None:
        return None
    return {
        "entries": [
            {"step": e.step, "kind": e.kind.value, "actions": list(e.actions),
             "count": e.count}
            for e in schedule.entries
        ]
    }


def schedule_from_dict(data: Optional[dict[str, Any]]) -> Optional[InterventionSchedule]:
    if data is None:
        return None
    entries = tuple(
        InterventionEntry(
            step=int(e["step"]),
            kind=InterventionKind(e["kind"]),
            actions=tuple(e["actions"]),
            count=int(e.get("count", 0)),
        )
        for e in data.get("entries", [])
    )
    return InterventionSchedule(entries=entries)


@dataclass(frozen=True)
class RunRecord:
    run_id: str
    event_id: str
    config: SimulationConfig
    status: RunStatus
    trajectory_path: str
    parent_run: Optional[str] = None
    fork_step: Optional[int] = None
    schedule: Optional[InterventionSchedule] = None
    error: Optional[str] = None

    def __post_init__(self) -> None:
        if (self.fork_step is None) != (self.parent_run is None):
            raise ValueError("fork_step must be present exactly when parent_run is")

    def to_dict(self) -> dict[str, Any]:
        return {
            "run_id": self.run_id,
            "event_id": self.event_id,
            "config": config_to_dict(self.config),
            "status": self.status.value,
            "trajectory_path": self.trajectory_path,
            "parent_run": self.parent_run,
            "fork_step": self.fork_step,
            "schedule": schedule_to_dict(self.schedule),
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunRecord":
        return cls(
            run_id=data["run_id"],
            event_id=data["event_id"],
            config=config_from_dict(data["config"]),
            status=RunStatus(data["status"]),
            trajectory_path=data["trajectory_path"],
            parent_run=data.get("parent_run"),
            fork_step=data.get("fork_step"),
            schedule=schedule_from_dict(data.get("schedule")),
            error=data.get("error"),
        )


class RunStore:
    """Directory of runs keyed by run_id; done runs are never mutated, forks
    always mint fresh ids."""

    def __init__(self, root: Union[str, Path]) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _record_path(self, run_id: str) -> Path:
        return self.root / run_id / "record.json"

    def trajectory_path(self, run_id: str) -> Path:
        return self.root / run_id / "trajectory.jsonl"

    def create(self, event_id: str, config: SimulationConfig,
               schedule: Optional[InterventionSchedule] = None,
               parent_run: Optional[str] = None,
               fork_step: Optional[int] = None) -> RunRecord:
        run_id = uuid.uuid4().hex[:12]
        run_dir = self.root / run_id
        run_dir.mkdir(parents=True)
        record = RunRecord(
            run_id=run_id,
            event_id=event_id,
            config=config,
            status=RunStatus.pending,
            trajectory_path=str(self.trajectory_path(run_id)),
            parent_run=parent_run,
            fork_step=fork_step,
            schedule=schedule,
        )
        self._write(record)
        return record

    def _write(self, record: RunRecord) -> None:
        # atomic replace so concurrent polls never observe a half-written record
        path = self._record_path(record.run_id)
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(record.to_dict(), indent=2, sort_keys=True),
                       encoding="utf-8")
        tmp.replace(path)

    def get(self, run_id: str) -> RunRecord:
        path = self._record_path(run_id)
        if not path.exists():
            raise KeyError(f"unknown run_id {run_id!r}")
        return RunRecord.from_dict(json.loads(path.read_text(encoding="utf-8")))

    def list(self) -> list[RunRecord]:
        records = []
        for record_path in sorted(self.root.glob("*/record.json")):
            records.append(RunRecord.from_dict(
                json.loads(record_path.read_text(encoding="utf-8"))
            ))
        return records

    def transition(self, run_id: str, status: RunStatus,
                   error: Optional[str] = None) -> RunRecord:
        with self._lock:
            record = self.get(run_id)
            if record.status in (RunStatus.done, RunStatus.failed):
                raise ValueError(f"run {run_id} already finished as {record.status.value}")
            updated = replace(record, status=status, error=error)
            self._write(updated)
            return updated
