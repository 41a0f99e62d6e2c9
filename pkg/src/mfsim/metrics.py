"""Decision-dimension classification plumbing and the distribution metric suite.

Actions are labeled along eight dimensions, windowed into label distributions
(the w most recent actions, default 16), and compared with KL divergence,
Wasserstein-1, DTW, F1, and optionally the policy's negative log-likelihood of
the real actions.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .backends import ToyPolicyBackend
from .core import Provenance, Trajectory
from .corpus import toy_action_symbol, toy_state_symbol
from .engine import _history_items, _toy_mf_symbol, build_context
from .prompts import render_policy_prompt

UNKNOWN = "unknown"

DEFAULT_WINDOW = 16

METRIC_NAMES = ("kl", "wasserstein", "dtw", "macro_f1", "micro_f1")


@dataclass(frozen=True)
class DimensionSchema:
    """Ordered label axes; Wasserstein ground distance is unit spacing in each
    axis's declared label order."""

    dimensions: tuple[tuple[str, tuple[str, ...]], ...]

    def __post_init__(self) -> None:
        names = [name for name, _ in self.dimensions]
        if len(set(names)) != len(names):
            raise ValueError("dimension names must be unique")
        for name, labels in self.dimensions:
            if len(labels) < 2:
                raise ValueError(f"dimension {name} needs at least 2 labels")

    def names(self) -> list[str]:
        return [name for name, _ in self.dimensions]

    def labels(self, name: str) -> tuple[str, ...]:
        for dim_name, labels in self.dimensions:
            if dim_name == name:
                return labels
        raise KeyError(name)


DEFAULT_SCHEMA = DimensionSchema(dimensions=(
    ("rumor", ("spread", "counter")),
    ("sentiment", ("angry", "calm", "happy", "sad", "fear", "surprise")),
    ("attitude", ("positive", "negative", "neutral")),
    ("behavior", ("comment", "share")),
    ("stance", ("support", "oppose", "neutral")),
    ("belief", ("believe", "doubt")),
    ("subjectivity", ("subjective", "objective")),
    ("intent", ("question", "promotion", "opinion")),
))


@dataclass(frozen=True)
class LabelVector:
    """One action's classification: a label per dimension plus carried keywords
    (never scored)."""

    labels: dict[str, str]
    keywords: tuple[str, ...] = ()

    def get(self, dimension: str) -> str:
        return self.labels.get(dimension, UNKNOWN)


def unknown_labels(schema: DimensionSchema = DEFAULT_SCHEMA) -> LabelVector:
    return LabelVector(labels={name: UNKNOWN for name in schema.names()})


@dataclass(frozen=True)
class DistributionSeries:
    """Per dimension, one probability vector per action position; None marks a
    window whose labels were all unknown (skipped downstream)."""

    series: dict[str, list[Optional[np.ndarray]]]
    window: int


def classify_actions(actions: Sequence, judge, topic: str = "") -> list[LabelVector]:
    """Label each action with the judge, order preserved."""
    if not actions:
        raise ValueError("classify_actions needs at least one action")
    texts = [a.text if hasattr(a, "text") else str(a) for a in actions]
    return judge.classify(topic, texts)


def window_distribution(labels: Sequence[LabelVector], w: int,
                        schema: DimensionSchema = DEFAULT_SCHEMA) -> DistributionSeries:
    """Label histogram of the w most recent actions at each position, normalized;
    unknown labels drop out of both the counts and the normalizer."""
    if w < 1:
        raise ValueError("window must be >= 1")
    if not labels:
        raise ValueError("labels must be non-empty")
    series: dict[str, list[Optional[np.ndarray]]] = {}
    n = len(labels)
    for name in schema.names():
        dim_labels = schema.labels(name)
        index = {label: i for i, label in enumerate(dim_labels)}
        onehot = np.zeros((n, len(dim_labels)))
        for t, vector in enumerate(labels):
            code = index.get(vector.get(name))
            if code is not None:
                onehot[t, code] = 1.0
        prefix = np.vstack([np.zeros(len(dim_labels)), np.cumsum(onehot, axis=0)])
        starts = np.maximum(0, np.arange(n) - w + 1)
        counts = prefix[np.arange(1, n + 1)] - prefix[starts]
        totals = counts.sum(axis=1)
        rows: list[Optional[np.ndarray]] = [
            counts[t] / totals[t] if totals[t] > 0 else None for t in range(n)
        ]
        series[name] = rows
    return DistributionSeries(series=series, window=w)


def kl_divergence(p: Sequence[float], q: Sequence[float], eps: float = 1e-6) -> float:
    """KL(p || q) after additive eps smoothing and renormalization of both."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("p and q must have equal length")
    if np.any(p < 0) or np.any(q < 0):
        raise ValueError("probability entries must be non-negative")
    if eps > 0:
        p = (p + eps) / (p + eps).sum()
        q = (q + eps) / (q + eps).sum()
    mask = p > 0
    return float((p[mask] * (np.log(p[mask]) - np.log(q[mask]))).sum())


def wasserstein1(p: Sequence[float], q: Sequence[float]) -> float:
    """W1 between categorical distributions under unit spacing in label order:
    the summed absolute CDF difference."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("p and q must have equal length")
    return float(np.abs(np.cumsum(p - q)).sum())


def dtw_distance(a: Sequence[float], b: Sequence[float]) -> float:
    """Accumulated-cost DTW with |a_i - b_j| local cost and steps {down, right,
    diagonal}, normalized by len(a) + len(b).

    The DP sweeps anti-diagonals so each step is a vector op; cells outside a
    diagonal stay +inf, which also encodes the boundary conditions.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("series must be non-empty")
    n, m = a.size, b.size
    inf = np.inf
    prev2 = np.full(n, inf)
    prev1 = np.full(n, inf)
    for d in range(n + m - 1):
        lo = max(0, d - m + 1)
        hi = min(n - 1, d)
        i_idx = np.arange(lo, hi + 1)
        cost = np.abs(a[i_idx] - b[d - i_idx])
        cur = np.full(n, inf)
        if d == 0:
            cur[0] = cost[0]
        else:
            prev1_up = np.concatenate(([inf], prev1[:-1]))
            prev2_diag = np.concatenate(([inf], prev2[:-1]))
            best = np.minimum(np.minimum(prev1[i_idx], prev1_up[i_idx]),
                              prev2_diag[i_idx])
            cur[i_idx] = cost + best
        prev2, prev1 = prev1, cur
    return float(prev1[n - 1] / (n + m))


def f1_scores(real_labels: Sequence[Sequence[str]],
              gen_labels: Sequence[Sequence[str]]) -> tuple[float, float]:
    """(macro, micro) F1 between per-step label multisets of one dimension.

    Counts are matched per step: TP = min(real count, generated count); macro
    averages per-label F1 over labels with any support.
    """
    steps = min(len(real_labels), len(gen_labels))
    if steps == 0:
        raise ValueError("no overlapping steps")
    tp: Counter = Counter()
    fp: Counter = Counter()
    fn: Counter = Counter()
    for t in range(steps):
        real_counts = Counter(l for l in real_labels[t] if l != UNKNOWN)
        gen_counts = Counter(l for l in gen_labels[t] if l != UNKNOWN)
        for label in set(real_counts) | set(gen_counts):
            matched = min(real_counts[label], gen_counts[label])
            tp[label] += matched
            fp[label] += gen_counts[label] - matched
            fn[label] += real_counts[label] - matched

    def f1(tp_count: int, fp_count: int, fn_count: int) -> float:
        denom = 2 * tp_count + fp_count + fn_count
        return 2 * tp_count / denom if denom > 0 else 0.0

    labels = [l for l in set(tp) | set(fp) | set(fn)
              if tp[l] + fp[l] + fn[l] > 0]
    macro = float(np.mean([f1(tp[l], fp[l], fn[l]) for l in labels])) if labels else 0.0
    micro = f1(sum(tp.values()), sum(fp.values()), sum(fn.values()))
    return macro, float(micro)


@dataclass
class MetricReport:
    """Per-dimension and aggregate scores; nll is absent when the generating
    backend exposes no log-probabilities."""

    per_dimension: dict[str, dict[str, float]]
    aggregate: dict[str, float]
    nll: Optional[float] = None
    judge_failures: int = 0
    radar: Optional[dict[str, float]] = None

    def to_dict(self) -> dict:
        return {
            "per_dimension": self.per_dimension,
            "aggregate": self.aggregate,
            "nll": self.nll,
            "judge_failures": self.judge_failures,
            "radar": self.radar,
        }

    def save_json(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True),
                              encoding="utf-8")

    def save_csv(self, path: Union[str, Path]) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["dimension", "metric", "value"])
            for dim, metrics in self.per_dimension.items():
                for metric, value in metrics.items():
                    writer.writerow([dim, metric, f"{value:.10f}"])
            for metric, value in self.aggregate.items():
                writer.writerow(["aggregate", metric, f"{value:.10f}"])
            writer.writerow(["aggregate", "nll", "--" if self.nll is None
                             else f"{self.nll:.10f}"])


def _evaluated_range(real: Trajectory, generated: Trajectory) -> tuple[int, int]:
    if real.event_id != generated.event_id:
        raise ValueError(f"trajectories compare different events: "
                         f"{real.event_id!r} vs {generated.event_id!r}")
    start = generated.fork_step if generated.fork_step is not None \
        else generated.config.warmup_steps
    end = min(len(real.steps), len(generated.steps))
    if start >= end and all(
        a.provenance is Provenance.ground_truth
        for record in generated.steps for a in record.actions
    ):
        # a pure replay has no generated suffix to protect; compare it whole
        start = 0
    if start >= end:
        raise ValueError("zero evaluated steps after excluding the warm-up prefix")
    return start, end


def _flatten_actions(trajectory: Trajectory, start: int, end: int) -> list:
    return [a for record in trajectory.steps[start:end]
            for a in record.population_actions()]


def _per_step_labels(trajectory: Trajectory, labels: list[LabelVector],
                     start: int, end: int, dimension: str) -> list[list[str]]:
    out = []
    cursor = 0
    for record in trajectory.steps[start:end]:
        n = len(record.population_actions())
        out.append([v.get(dimension) for v in labels[cursor:cursor + n]])
        cursor += n
    return out


def _nll_of_real_actions(real: Trajectory, generated: Trajectory, policy_backend,
                         start: int, end: int) -> Optional[float]:
    if policy_backend is None or not getattr(policy_backend, "supports_logprob", False):
        return None
    strategy = generated.config.context_strategy
    values: list[float] = []
    if isinstance(policy_backend, ToyPolicyBackend):
        for t in range(start, end):
            gen_step = generated.steps[t]
            real_actions = real.steps[t].population_actions()
            mf_symbol = _toy_mf_symbol(gen_step.mean_field, strategy)
            for i in range(min(len(real_actions), len(gen_step.states))):
                values.append(-policy_backend.action_logprob(
                    toy_state_symbol(gen_step.states[i]),
                    mf_symbol,
                    toy_action_symbol(real_actions[i].text),
                ))
    else:
        history = []
        for t in range(end):
            gen_step = generated.steps[t]
            if t >= start:
                context = build_context(strategy, history, gen_step.mean_field,
                                        generated.config.k)
                real_actions = real.steps[t].population_actions()
                for i in range(min(len(real_actions), len(gen_step.states))):
                    prompt = render_policy_prompt(gen_step.states[i], context, strategy)
                    lp = policy_backend.logprob(real_actions[i].text, prompt.text)
                    if lp is not None:
                        values.append(-lp)
            history.extend(_history_items(gen_step))
    return float(np.mean(values)) if values else None


def evaluate_run(real: Trajectory, generated: Trajectory, judge,
                 schema: DimensionSchema = DEFAULT_SCHEMA, w: int = DEFAULT_WINDOW,
                 policy_backend=None, topic: str = "") -> MetricReport:
    """Classify both action streams, window them, and score every metric per
    dimension plus the cross-dimension aggregates."""
    start, end = _evaluated_range(real, generated)
    real_actions = _flatten_actions(real, start, end)
    gen_actions = _flatten_actions(generated, start, end)
    if not real_actions or not gen_actions:
        raise ValueError("no actions to evaluate in the compared range")
    real_labels = classify_actions(real_actions, judge, topic)
    gen_labels = classify_actions(gen_actions, judge, topic)
    n = min(len(real_labels), len(gen_labels))
    real_series = window_distribution(real_labels[:n], w, schema)
    gen_series = window_distribution(gen_labels[:n], w, schema)

    per_dimension: dict[str, dict[str, float]] = {}
    for name in schema.names():
        r_rows = real_series.series[name]
        g_rows = gen_series.series[name]
        valid = [t for t in range(n) if r_rows[t] is not None and g_rows[t] is not None]
        if valid:
            kl = float(np.mean([kl_divergence(r_rows[t], g_rows[t]) for t in valid]))
            w1 = float(np.mean([wasserstein1(r_rows[t], g_rows[t]) for t in valid]))
            labels = schema.labels(name)
            dtw_vals = []
            for j in range(len(labels)):
                r_curve = [r_rows[t][j] for t in valid]
                g_curve = [g_rows[t][j] for t in valid]
                dtw_vals.append(dtw_distance(r_curve, g_curve))
            dtw = float(np.mean(dtw_vals))
        else:
            kl = w1 = dtw = 0.0
        macro, micro = f1_scores(
            _per_step_labels(real, real_labels, start, end, name),
            _per_step_labels(generated, gen_labels, start, end, name),
        )
        per_dimension[name] = {"kl": kl, "wasserstein": w1, "dtw": dtw,
                               "macro_f1": macro, "micro_f1": micro}

    aggregate = {metric: float(np.mean([per_dimension[name][metric]
                                        for name in schema.names()]))
                 for metric in METRIC_NAMES}
    nll = _nll_of_real_actions(real, generated, policy_backend, start, end)
    failures = getattr(judge, "failures", 0)
    return MetricReport(per_dimension=per_dimension, aggregate=aggregate, nll=nll,
                        judge_failures=failures)


def radar_normalize(reports: dict[str, MetricReport]) -> dict[str, MetricReport]:
    """Fill each report's radar block: distances become (max - v) / (max - min)
    across the comparison set so larger is better; F1 passes through."""
    radars: dict[str, dict[str, float]] = {name: {} for name in reports}
    for metric in ("kl", "wasserstein", "dtw"):
        values = [r.aggregate[metric] for r in reports.values()]
        lo, hi = min(values), max(values)
        for name, report in reports.items():
            v = report.aggregate[metric]
            radars[name][metric] = 1.0 if hi - lo < 1e-12 else (hi - v) / (hi - lo)
    for name, report in reports.items():
        radars[name]["macro_f1"] = report.aggregate["macro_f1"]
        radars[name]["micro_f1"] = report.aggregate["micro_f1"]
    return {
        name: MetricReport(per_dimension=r.per_dimension, aggregate=r.aggregate,
                           nll=r.nll, judge_failures=r.judge_failures,
                           radar=radars[name])
        for name, r in reports.items()
    }


def proportion_series_csv(real: Trajectory, generated: Trajectory, judge,
                          path: Union[str, Path],
                          schema: DimensionSchema = DEFAULT_SCHEMA,
                          w: int = DEFAULT_WINDOW, topic: str = "") -> None:
    """Plot-ready export: per-label proportion time series for both streams."""
    start, end = _evaluated_range(real, generated)
    real_actions = _flatten_actions(real, start, end)
    gen_actions = _flatten_actions(generated, start, end)
    real_labels = classify_actions(real_actions, judge, topic)
    gen_labels = classify_actions(gen_actions, judge, topic)
    n = min(len(real_labels), len(gen_labels))
    real_series = window_distribution(real_labels[:n], w, schema)
    gen_series = window_distribution(gen_labels[:n], w, schema)
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["dimension", "label", "t", "real", "generated"])
        for name in schema.names():
            labels = schema.labels(name)
            for t in range(n):
                r = real_series.series[name][t]
                g = gen_series.series[name][t]
                for j, label in enumerate(labels):
                    writer.writerow([
                        name, label, t,
                        "" if r is None else f"{r[j]:.6f}",
                        "" if g is None else f"{g[j]:.6f}",
                    ])
