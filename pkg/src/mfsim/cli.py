"""Command-line entry points.

Subcommands: gen-synthetic, train-toy, simulate, forecast, intervene, evaluate,
serve. Config precedence is CLI flag > config file > built-in default; the
effective config is echoed into every trajectory header.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Optional

from .backends import (
    ConstantBackend,
    RemoteBackendConfig,
    RemoteChatBackend,
    ScriptedBackend,
    ToyMeanFieldBackend,
    ToyPolicyBackend,
)
from .corpus import (
    generate_synthetic,
    load_corpus,
    save_corpus,
    self_exciting_config,
    SyntheticGenConfig,
)
from .engine import fork_trajectory, run_simulation
from .ibtune import IBHyper, load_toy_params, save_toy_params, train_toy
from .judge import LLMJudge, MockJudge
from .metrics import evaluate_run, proportion_series_csv
from .persistence import (
    config_from_dict,
    load_trajectory,
    save_trajectory,
)
from .runstore import RunStore, schedule_from_dict
from .service import serve as service_serve, toy_backend_provider


def _load_json(path: str) -> dict[str, Any]:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _build_backend(spec: Optional[dict[str, Any]], role: str):
    """Backend factory for run-spec files; role is 'policy' or 'mean_field'."""
    if spec is None:
        return None
    kind = spec.get("kind", "toy")
    if kind == "none":
        return None
    if kind == "toy":
        params = load_toy_params(spec["params_path"])
        return ToyPolicyBackend(params) if role == "policy" else ToyMeanFieldBackend(params)
    if kind == "constant":
        return ConstantBackend(text=spec.get("text", ""))
    if kind == "scripted":
        table = spec.get("table") or _load_json(spec["table_path"])
        return ScriptedBackend(table=table)
    if kind == "remote":
        config = RemoteBackendConfig(
            endpoint_url=spec["endpoint_url"],
            model=spec["model"],
            max_retries=spec.get("max_retries", 4),
            backoff_base=spec.get("backoff_base", 0.25),
            timeout=spec.get("timeout", 60.0),
            auth_token_env=spec.get("auth_token_env", "MFSIM_API_TOKEN"),
            max_in_flight=spec.get("max_in_flight", 8),
        )
        return RemoteChatBackend(config)
    raise ValueError(f"unknown backend kind {kind!r}")


def _resolve_event(args) -> tuple[Any, Any]:
    corpus = load_corpus(args.event)
    if getattr(args, "event_id", None):
        return corpus, corpus.event_by_id(args.event_id)
    return corpus, corpus.events[0]


def _load_run_spec(args) -> dict[str, Any]:
    spec = _load_json(args.config) if args.config else {}
    simulation = dict(spec.get("simulation", {}))
    if args.seed is not None:
        simulation["seed"] = args.seed
    spec["simulation"] = simulation
    return spec


def _make_judge(name: str, spec: dict[str, Any]):
    if name == "mock":
        return MockJudge()
    if name == "llm":
        backend = _build_backend(spec.get("judge_backend"), role="policy")
        if backend is None:
            raise ValueError("llm judge needs a judge_backend entry in the config file")
        return LLMJudge(backend=backend)
    raise ValueError(f"unknown judge {name!r}")


def cmd_gen_synthetic(args) -> int:
    if args.config:
        raw = _load_json(args.config)
        import numpy as np
        cfg = SyntheticGenConfig(
            num_events=raw["num_events"],
            steps_per_event=raw["steps_per_event"],
            state_alphabet_size=raw.get("state_alphabet_size", 6),
            action_alphabet_size=raw.get("action_alphabet_size", 4),
            latent_alphabet_size=raw.get("latent_alphabet_size", 8),
            agents_per_step=raw.get("agents_per_step", 16),
            latent_transition=(np.asarray(raw["latent_transition"], dtype=float)
                               if "latent_transition" in raw else None),
            emission=(np.asarray(raw["emission"], dtype=float)
                      if "emission" in raw else None),
            seed=args.seed if args.seed is not None else raw.get("seed", 0),
        )
    else:
        cfg = self_exciting_config(
            seed=args.seed if args.seed is not None else 0,
            num_events=args.events,
            steps_per_event=args.steps,
            agents_per_step=args.agents,
        )
    corpus = generate_synthetic(cfg)
    save_corpus(corpus, args.out)
    if args.verbose:
        print(f"wrote {len(corpus.events)} synthetic events to {args.out}")
    return 0


def cmd_train_toy(args) -> int:
    corpus = load_corpus(args.corpus)
    hyper = IBHyper(
        beta=args.beta,
        learning_rate=args.learning_rate,
        iterations=args.iterations,
        seed=args.seed if args.seed is not None else 0,
    )
    params, curves = train_toy(corpus, hyper, args.mode,
                               mf_alphabet=args.mf_alphabet,
                               block_size=args.block_size)
    save_toy_params(params, args.out)
    if args.curves:
        curves.save_csv(args.curves)
    if args.verbose:
        print(f"trained {args.mode} for {hyper.iterations} iterations -> {args.out}")
    return 0


def _simulate_common(args, start_step: Optional[int] = None) -> int:
    spec = _load_run_spec(args)
    _, event = _resolve_event(args)
    config = config_from_dict(spec["simulation"])
    policy_backend = _build_backend(spec.get("policy_backend"), role="policy")
    mf_backend = _build_backend(spec.get("mf_backend"), role="mean_field")
    schedule = None
    if getattr(args, "schedule", None):
        schedule = schedule_from_dict(_load_json(args.schedule))
        if schedule is not None:
            schedule.validate(config)
    if start_step is None:
        trajectory = run_simulation(event, config, policy_backend, mf_backend, schedule)
    else:
        trajectory = fork_trajectory(event, start_step, config, policy_backend,
                                     mf_backend, schedule)
    save_trajectory(trajectory, args.out)
    if args.verbose:
        print(f"wrote {len(trajectory.steps)}-step trajectory to {args.out}")
    return 0


def cmd_simulate(args) -> int:
    return _simulate_common(args)


def cmd_forecast(args) -> int:
    return _simulate_common(args, start_step=args.start_step)


def cmd_intervene(args) -> int:
    if not args.schedule:
        raise ValueError("intervene requires --schedule")
    return _simulate_common(args, start_step=args.start_step)


def cmd_evaluate(args) -> int:
    spec = _load_json(args.config) if args.config else {}
    real = load_trajectory(args.real)
    generated = load_trajectory(args.gen)
    judge = _make_judge(args.judge, spec)
    policy_backend = _build_backend(spec.get("policy_backend"), role="policy")
    report = evaluate_run(real, generated, judge, w=args.window,
                          policy_backend=policy_backend, topic=args.topic)
    report.save_json(args.out)
    if args.emit_series:
        proportion_series_csv(real, generated, judge, args.emit_series,
                              w=args.window, topic=args.topic)
    if args.csv:
        report.save_csv(args.csv)
    if args.verbose:
        print(json.dumps(report.aggregate, indent=2, sort_keys=True))
    return 0


def cmd_serve(args) -> int:
    corpus = load_corpus(args.corpus)
    store = RunStore(args.runs_dir)
    if args.params:
        provider = toy_backend_provider(load_toy_params(args.params))
    else:
        spec = _load_json(args.config) if args.config else {}

        def provider(config):
            return (_build_backend(spec.get("policy_backend"), role="policy"),
                    _build_backend(spec.get("mf_backend"), role="mean_field"))
    service_serve(corpus, store, provider, host=args.host, port=args.port,
                  max_workers=args.workers)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfsim",
                                     description="population decision simulator")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="run-spec JSON file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config file's seed")
        p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("gen-synthetic", help="write a synthetic corpus")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--events", type=int, default=8)
    p.add_argument("--steps", type=int, default=24)
    p.add_argument("--agents", type=int, default=16)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("train-toy", help="train the toy models on a synthetic corpus")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--mode", choices=("full_ibtune", "policy_only_sft", "no_meanfield"),
                   default="full_ibtune")
    p.add_argument("--out", required=True)
    p.add_argument("--curves", help="loss-curve CSV path")
    p.add_argument("--iterations", type=int, default=200)
    p.add_argument("--learning-rate", type=float, default=0.5)
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--mf-alphabet", type=int, default=8)
    p.add_argument("--block-size", type=int, default=16)
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("simulate", help="run one simulation")
    common(p)
    p.add_argument("--event", required=True, help="corpus JSONL")
    p.add_argument("--event-id")
    p.add_argument("--schedule", help="intervention schedule JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("forecast", help="fork from a ground-truth prefix")
    common(p)
    p.add_argument("--event", required=True)
    p.add_argument("--event-id")
    p.add_argument("--start-step", type=int, required=True)
    p.add_argument("--schedule")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("intervene", help="run with an intervention schedule")
    common(p)
    p.add_argument("--event", required=True)
    p.add_argument("--event-id")
    p.add_argument("--start-step", type=int, default=None)
    p.add_argument("--schedule", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_intervene)

    p = sub.add_parser("evaluate", help="score a generated run against a reference")
    common(p)
    p.add_argument("--real", required=True)
    p.add_argument("--gen", required=True)
    p.add_argument("--judge", choices=("mock", "llm"), default="mock")
    p.add_argument("--topic", default="")
    p.add_argument("--window", type=int, default=16)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", help="flat per-dimension CSV path")
    p.add_argument("--emit-series", help="per-label proportion series CSV path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", help="start the intervention-console service")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--params", help="toy params JSON (backends for every run)")
    p.add_argument("--runs-dir", default="runs")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--workers", type=int, default=2)
    p.set_defaults(func=cmd_serve)

    return parser


def cli_dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
