"""HTTP service for the intervention console: launch runs, poll status, fetch
trajectories and metrics, and fork what-if children with schedules.

Runs execute on a bounded in-process worker pool; every artifact lands in the
run store so the service itself stays stateless across restarts.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Optional

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse

from .backends import ToyMeanFieldBackend, ToyPolicyBackend, ToyModelParams
from .core import SimulationConfig
from .corpus import Corpus
from .engine import fork_trajectory, ground_truth_trajectory, run_simulation
from .judge import MockJudge
from .metrics import DEFAULT_SCHEMA, evaluate_run
from .persistence import (
    config_from_dict,
    config_to_dict,
    load_trajectory,
    step_to_dict,
    TrajectoryWriter,
)
from .runstore import RunStatus, RunStore, schedule_from_dict

BackendProvider = Callable[[SimulationConfig], tuple[Any, Any]]


def toy_backend_provider(params: ToyModelParams) -> BackendProvider:
    def provide(config: SimulationConfig):
        return ToyPolicyBackend(params), ToyMeanFieldBackend(params)
    return provide


def create_app(corpus: Corpus, store: RunStore, backend_provider: BackendProvider,
               max_workers: int = 2) -> FastAPI:
    app = FastAPI(title="mfsim service")
    executor = ThreadPoolExecutor(max_workers=max_workers)
    app.state.executor = executor

    def get_event(event_id: str):
        try:
            return corpus.event_by_id(event_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown event_id {event_id!r}")

    def get_record(run_id: str):
        try:
            return store.get(run_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown run_id {run_id!r}")

    def execute_run(run_id: str) -> None:
        record = store.get(run_id)
        store.transition(run_id, RunStatus.running)
        writer: Optional[TrajectoryWriter] = None
        try:
            event = corpus.event_by_id(record.event_id)
            policy_backend, mf_backend = backend_provider(record.config)
            writer = TrajectoryWriter(record.trajectory_path, record.event_id,
                                      record.config, fork_step=record.fork_step)
            if record.parent_run is not None:
                parent = load_trajectory(store.trajectory_path(record.parent_run))
                fork_trajectory(parent, record.fork_step, record.config,
                                policy_backend, mf_backend, record.schedule,
                                sink=writer.append_step)
            else:
                run_simulation(event, record.config, policy_backend, mf_backend,
                               record.schedule, sink=writer.append_step)
            store.transition(run_id, RunStatus.done)
        except Exception as exc:
            store.transition(run_id, RunStatus.failed, error=str(exc))
        finally:
            if writer is not None:
                writer.close()

    @app.get("/api/events")
    def list_events():
        return [
            {
                "event_id": event.event_id,
                "topic": event.topic,
                "domain_tag": event.domain_tag.value,
                "timeline_entries": len(event.timeline),
            }
            for event in corpus.events
        ]

    @app.get("/api/schema")
    def get_schema():
        return {
            "dimensions": [
                {"name": name, "labels": list(labels)}
                for name, labels in DEFAULT_SCHEMA.dimensions
            ]
        }

    @app.post("/api/runs")
    def create_run(body: dict):
        event_id = body.get("event_id")
        if not event_id:
            raise HTTPException(status_code=422, detail="event_id: required")
        get_event(event_id)
        try:
            config = config_from_dict(body.get("config", {}))
        except (KeyError, TypeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=f"config: {exc}")
        try:
            schedule = schedule_from_dict(body.get("schedule"))
            if schedule is not None:
                schedule.validate(config)
        except (KeyError, TypeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=f"schedule: {exc}")
        record = store.create(event_id, config, schedule=schedule)
        executor.submit(execute_run, record.run_id)
        return {"run_id": record.run_id}

    @app.get("/api/runs")
    def list_runs():
        return [record.to_dict() for record in store.list()]

    @app.get("/api/runs/{run_id}")
    def get_run(run_id: str):
        return get_record(run_id).to_dict()

    @app.get("/api/runs/{run_id}/trajectory")
    def get_run_trajectory(run_id: str):
        record = get_record(run_id)
        path = store.trajectory_path(run_id)
        if not path.exists():
            raise HTTPException(status_code=409,
                                detail=f"run {run_id} has no trajectory yet "
                                       f"(status {record.status.value})")
        trajectory = load_trajectory(path)
        return {
            "event_id": trajectory.event_id,
            "config": config_to_dict(trajectory.config),
            "fork_step": trajectory.fork_step,
            "steps": [step_to_dict(step) for step in trajectory.steps],
        }

    @app.get("/api/runs/{run_id}/metrics")
    def get_run_metrics(run_id: str, baseline: Optional[str] = None):
        record = get_record(run_id)
        if record.status is not RunStatus.done:
            return JSONResponse(
                status_code=409,
                content={"detail": f"run {run_id} is {record.status.value}, not done"},
            )
        generated = load_trajectory(store.trajectory_path(run_id))
        event = get_event(record.event_id)
        if baseline is None:
            reference = ground_truth_trajectory(event, record.config)
        else:
            base_record = get_record(baseline)
            if base_record.status is not RunStatus.done:
                return JSONResponse(
                    status_code=409,
                    content={"detail": f"baseline {baseline} is not done"},
                )
            reference = load_trajectory(store.trajectory_path(baseline))
        try:
            report = evaluate_run(reference, generated, MockJudge(), topic=event.topic)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return report.to_dict()

    @app.post("/api/runs/{run_id}/fork")
    def fork_run(run_id: str, body: dict):
        parent = get_record(run_id)
        if parent.status is not RunStatus.done:
            return JSONResponse(
                status_code=409,
                content={"detail": f"parent run {run_id} is {parent.status.value}, not done"},
            )
        if "start_step" not in body:
            raise HTTPException(status_code=422, detail="start_step: required")
        start_step = int(body["start_step"])
        overrides = body.get("config_overrides") or {}
        try:
            config = config_from_dict({**config_to_dict(parent.config), **overrides})
        except (KeyError, TypeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=f"config_overrides: {exc}")
        if not 0 <= start_step <= config.horizon:
            raise HTTPException(status_code=422,
                                detail=f"start_step: {start_step} outside [0, {config.horizon}]")
        try:
            schedule = schedule_from_dict(body.get("schedule"))
            if schedule is not None:
                schedule.validate(config)
        except (KeyError, TypeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=f"schedule: {exc}")
        record = store.create(parent.event_id, config, schedule=schedule,
                              parent_run=run_id, fork_step=start_step)
        executor.submit(execute_run, record.run_id)
        return {"run_id": record.run_id}

    return app


def serve(corpus: Corpus, store: RunStore, backend_provider: BackendProvider,
          host: str = "127.0.0.1", port: int = 8000, max_workers: int = 2) -> None:
    import uvicorn

    app = create_app(corpus, store, backend_provider, max_workers=max_workers)
    uvicorn.run(app, host=host, port=port, log_level="warning")
