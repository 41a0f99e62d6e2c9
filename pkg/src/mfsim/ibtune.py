"""Bottleneck objectives at toy scale: exact losses, analytic gradients, and
brute-force oracles for mutual information and the variational bound.

The mean-field objective trades a compression term, KL between the learned
summary posterior and a frozen prior, against beta times the expected
log-likelihood of real actions under the policy. All expectations over the
summary alphabet are exact enumerations, never Monte Carlo, so gradient and
bound checks are sharp.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .backends import (
    ToyModelParams,
    ToyPolicyBackend,
    derive_seed,
    log_softmax,
    softmax,
    toy_logprob,
)
from .corpus import Corpus, majority_action, toy_action_symbol, toy_state_symbol


class TrainingError(RuntimeError):
    def __init__(self, iteration: int, message: str) -> None:
        self.iteration = iteration
        super().__init__(f"iteration {iteration}: {message}")


class CapabilityError(RuntimeError):
    """The backend cannot report log-probabilities."""


@dataclass(frozen=True)
class IBTriple:
    """One supervised example: context (previous summary symbol, majority
    action), agent state, observed action, and its weight."""

    prev_mf: int
    majority: int
    state: int
    action: int
    weight: float


@dataclass(frozen=True)
class IBBatch:
    triples: tuple[IBTriple, ...]

    def __post_init__(self) -> None:
        if not self.triples:
            raise ValueError("batch must be non-empty")
        total = sum(t.weight for t in self.triples)
        if any(t.weight <= 0 for t in self.triples):
            raise ValueError("weights must be positive")
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1 (got {total!r})")

    @classmethod
    def uniform(cls, triples: Sequence[tuple[int, int, int, int]]) -> "IBBatch":
        w = 1.0 / len(triples)
        return cls(tuple(IBTriple(pm, mj, s, a, w) for pm, mj, s, a in triples))


@dataclass(frozen=True)
class IBHyper:
    beta: float = 2.0
    learning_rate: float = 0.5
    iterations: int = 200
    seed: int = 0

    def __post_init__(self) -> None:
        if self.beta <= 0:
            raise ValueError("beta must be > 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")


@dataclass(frozen=True)
class JointTable:
    probabilities: np.ndarray

    def __post_init__(self) -> None:
        p = self.probabilities
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("joint table entries must be finite and non-negative")
        if abs(float(p.sum()) - 1.0) > 1e-12:
            raise ValueError("joint table must sum to 1 within 1e-12")


def _xlogx(p: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p)
    mask = p > 0
    out[mask] = p[mask] * np.log(p[mask])
    return out


def mutual_information(joint: Union[JointTable, np.ndarray]) -> float:
    """Exact mutual information between the first axis and the rest; 0*log 0 = 0."""
    p = joint.probabilities if isinstance(joint, JointTable) else np.asarray(joint, dtype=float)
    if abs(float(p.sum()) - 1.0) > 1e-9:
        raise ValueError("joint table must be normalized")
    if np.any(p < 0):
        raise ValueError("joint table entries must be non-negative")
    p2 = p.reshape(p.shape[0], -1)
    px = p2.sum(axis=1)
    pz = p2.sum(axis=0)
    mask = p2 > 0
    terms = p2[mask] * (np.log(p2[mask]) - np.log(np.outer(px, pz)[mask]))
    return max(0.0, float(terms.sum()))


def kl_categorical(p: np.ndarray, q: np.ndarray) -> float:
    mask = p > 0
    return float((p[mask] * (np.log(p[mask]) - np.log(q[mask]))).sum())


def _conditional_table(params: ToyModelParams) -> np.ndarray:
    """Summary posterior rows over the flattened context space (prev symbol,
    majority action) -> next symbol; shape (|M|*|A|, |M|)."""
    n_s, n_a, n_m = params.alphabets
    return softmax(params.meanfield_logits.reshape(n_m * n_a, n_m))


def kl_bound_check(mf: Union[ToyModelParams, np.ndarray],
                   prior: Union[ToyModelParams, np.ndarray],
                   p_x: np.ndarray) -> tuple[float, float]:
    """Return (I(summary; context), E_context KL(posterior || prior)).

    The first never exceeds the second (up to 1e-9); equality holds when the
    prior equals the induced summary marginal.
    """
    cond = mf if isinstance(mf, np.ndarray) else _conditional_table(mf)
    p_x = np.asarray(p_x, dtype=float)
    if abs(float(p_x.sum()) - 1.0) > 1e-9 or np.any(p_x < 0):
        raise ValueError("p_x must be a normalized distribution")
    if p_x.shape[0] != cond.shape[0]:
        raise ValueError(f"p_x has {p_x.shape[0]} entries but the posterior has "
                         f"{cond.shape[0]} context rows")
    if isinstance(prior, np.ndarray):
        r = np.asarray(prior, dtype=float)
    else:
        r = p_x @ _conditional_table(prior)
    joint = p_x[:, None] * cond
    lhs = mutual_information(joint)
    rhs = float(sum(p_x[x] * kl_categorical(cond[x], r) for x in range(len(p_x))
                    if p_x[x] > 0))
    return lhs, rhs


# --- losses -------------------------------------------------------------------


def _check_alphabets(*params: ToyModelParams) -> tuple[int, int, int]:
    first = params[0].alphabets
    for p in params[1:]:
        if p.alphabets != first:
            raise ValueError(f"alphabet mismatch: {p.alphabets} vs {first}")
    return first


def _batch_context_weights(batch: IBBatch, n_a: int, n_m: int) -> np.ndarray:
    weights = np.zeros((n_m, n_a))
    for t in batch.triples:
        weights[t.prev_mf, t.majority] += t.weight
    return weights


def prior_row(prior: ToyModelParams, batch: IBBatch) -> np.ndarray:
    """The fixed prior over summary symbols: the frozen model's conditional rows
    marginalized under the batch's context weights."""
    _, n_a, n_m = prior.alphabets
    weights = _batch_context_weights(batch, n_a, n_m)
    rows = softmax(prior.meanfield_logits)
    return np.einsum("pa,pam->m", weights, rows)


def _batch_arrays(batch: IBBatch) -> tuple[np.ndarray, ...]:
    pm = np.array([t.prev_mf for t in batch.triples])
    mj = np.array([t.majority for t in batch.triples])
    s = np.array([t.state for t in batch.triples])
    a = np.array([t.action for t in batch.triples])
    w = np.array([t.weight for t in batch.triples])
    return pm, mj, s, a, w


def _policy_loglik_rows(policy: ToyModelParams, batch: IBBatch) -> np.ndarray:
    """loglik[i, m] = log pi(observed action_i | state_i, summary m)."""
    pm, mj, s, a, w = _batch_arrays(batch)
    logp = log_softmax(policy.policy_logits)
    return logp[s, :, a]


def meanfield_loss(mf: ToyModelParams, prior: ToyModelParams, policy: ToyModelParams,
                   batch: IBBatch, beta: float) -> float:
    """Compression-vs-prediction objective, averaged per sample by the batch
    weights; the expectation over summaries is an exact enumeration."""
    _check_alphabets(mf, prior, policy)
    pm, mj, s, a, w = _batch_arrays(batch)
    rho = prior_row(prior, batch)
    loglik = _policy_loglik_rows(policy, batch)
    log_mu = log_softmax(mf.meanfield_logits)[pm, mj]
    mu = np.exp(log_mu)
    kl = (mu * (log_mu - np.log(rho)[None, :])).sum(axis=1)
    predictive = (mu * loglik).sum(axis=1)
    return float((w * (kl - beta * predictive)).sum())


def grad_meanfield_loss(mf: ToyModelParams, prior: ToyModelParams,
                        policy: ToyModelParams, batch: IBBatch,
                        beta: float) -> np.ndarray:
    """Analytic gradient of meanfield_loss over the summary-model logits."""
    _check_alphabets(mf, prior, policy)
    pm, mj, s, a, w = _batch_arrays(batch)
    rho = prior_row(prior, batch)
    loglik = _policy_loglik_rows(policy, batch)
    log_mu = log_softmax(mf.meanfield_logits)[pm, mj]
    mu = np.exp(log_mu)
    g = log_mu - np.log(rho)[None, :] - beta * loglik
    centered = g - (mu * g).sum(axis=1, keepdims=True)
    rows = w[:, None] * mu * centered
    grad = np.zeros_like(mf.meanfield_logits)
    np.add.at(grad, (pm, mj), rows)
    return grad


def expected_policy_nll(mf: ToyModelParams, policy: ToyModelParams,
                        batch: IBBatch) -> float:
    """-sum_i w_i E_{m ~ posterior(.|X_i)} log pi(a*_i | s_i, m), exact."""
    _check_alphabets(mf, policy)
    pm, mj, s, a, w = _batch_arrays(batch)
    loglik = _policy_loglik_rows(policy, batch)
    mu = softmax(mf.meanfield_logits)[pm, mj]
    return float(-(w * (mu * loglik).sum(axis=1)).sum())


def grad_policy_expected_nll(mf: ToyModelParams, policy: ToyModelParams,
                             batch: IBBatch) -> np.ndarray:
    """Analytic gradient of expected_policy_nll over the policy logits."""
    _check_alphabets(mf, policy)
    n_s, n_a, n_m = policy.alphabets
    pm, mj, s, a, w = _batch_arrays(batch)
    mu = softmax(mf.meanfield_logits)[pm, mj]
    weighted = w[:, None] * mu
    occupancy = np.zeros((n_s, n_m))
    np.add.at(occupancy, s, weighted)
    target = np.zeros((n_s, n_a, n_m))
    np.add.at(target, (s, a), weighted)
    probs = softmax(policy.policy_logits)
    return probs * occupancy[:, :, None] - np.transpose(target, (0, 2, 1))


def policy_nll(policy: Union[ToyModelParams, ToyPolicyBackend],
               data: Sequence[tuple[int, int, int]]) -> float:
    """Mean negative log-likelihood of observed actions given (state, summary)."""
    if not data:
        raise ValueError("data must be non-empty")
    if isinstance(policy, ToyModelParams):
        logprob = lambda s, m, a: toy_logprob(policy, "policy", (s, m), a)
    else:
        if not getattr(policy, "supports_logprob", False):
            raise CapabilityError("backend does not expose log-probabilities")
        logprob = policy.action_logprob
    total = sum(logprob(s, m, a) for s, m, a in data)
    return -total / len(data)


# --- training -----------------------------------------------------------------


TRAIN_MODES = ("full_ibtune", "policy_only_sft", "no_meanfield")


@dataclass(frozen=True)
class LossCurves:
    """Per-iteration losses; the mean-field column is None for modes that never
    touch the summary model."""

    rows: tuple[tuple[int, Optional[float], Optional[float]], ...]

    def save_csv(self, path: Union[str, Path]) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["iteration", "meanfield_loss", "policy_loss"])
            for iteration, mf_loss, pol_loss in self.rows:
                writer.writerow([
                    iteration,
                    "" if mf_loss is None else f"{mf_loss:.10f}",
                    "" if pol_loss is None else f"{pol_loss:.10f}",
                ])


def corpus_alphabets(corpus: Corpus) -> tuple[int, int]:
    """(state alphabet, action alphabet) sizes observed in a synthetic corpus."""
    max_s, max_a = 1, 1
    for event in corpus.events:
        for profile, action in event.timeline:
            max_s = max(max_s, toy_state_symbol(profile))
            max_a = max(max_a, toy_action_symbol(action.text))
    return max_s + 1, max_a + 1


def _event_blocks(event, block_size: int) -> list[list[tuple[int, int]]]:
    pairs = [(toy_state_symbol(p), toy_action_symbol(a.text)) for p, a in event.timeline]
    return [pairs[i:i + block_size] for i in range(0, len(pairs), block_size)]


class _TrainingData:
    """Per-corpus block structure precomputed once; only the summary-symbol
    chain depends on the evolving model."""

    def __init__(self, corpus: Corpus, block_size: int) -> None:
        self.segments: list[tuple[int, int, np.ndarray, np.ndarray]] = []
        # (event_index, previous-block majority, states, actions) per block t>=1
        self.event_count = 0
        for event_index, event in enumerate(corpus.events):
            blocks = _event_blocks(event, block_size)
            for t in range(1, len(blocks)):
                majority = majority_action([a for _, a in blocks[t - 1]])
                states = np.array([s for s, _ in blocks[t]])
                actions = np.array([a for _, a in blocks[t]])
                self.segments.append((event_index, majority, states, actions))
            self.event_count += 1
        if not self.segments:
            raise ValueError("corpus yields no training triples (too few steps per event)")
        self.seg_event = np.array([seg[0] for seg in self.segments])
        self.seg_major = np.array([seg[1] for seg in self.segments])
        self.seg_len = np.array([len(seg[2]) for seg in self.segments])
        self.s = np.concatenate([seg[2] for seg in self.segments])
        self.a = np.concatenate([seg[3] for seg in self.segments])
        self.n = int(self.s.size)
        self.w = np.full(self.n, 1.0 / self.n)
        self.mj = np.repeat(self.seg_major, self.seg_len)

    def contexts(self, meanfield_logits: np.ndarray,
                 rng: Optional[np.random.Generator] = None
                 ) -> tuple[np.ndarray, np.ndarray]:
        """Summary symbols per segment rolled out over the real action stream:
        each segment's conditioning symbol (drawn from the posterior, or its
        argmax when no rng is given) and the previous symbol forming its
        context."""
        prev = np.empty(len(self.segments), dtype=int)
        rolled = np.empty(len(self.segments), dtype=int)
        if rng is None:
            table = None
            argmax_table = np.argmax(meanfield_logits, axis=2)
        else:
            table = np.cumsum(softmax(meanfield_logits), axis=2)
            argmax_table = None
        m_hat = 0
        current_event = -1
        for i, (event_index, majority, _, _) in enumerate(self.segments):
            if event_index != current_event:
                m_hat = 0
                current_event = event_index
            prev[i] = m_hat
            if rng is None:
                m_hat = int(argmax_table[m_hat, majority])
            else:
                m_hat = int(np.searchsorted(table[m_hat, majority], rng.random(),
                                            side="right"))
            rolled[i] = m_hat
        return np.repeat(prev, self.seg_len), np.repeat(rolled, self.seg_len)


def build_ib_batch(corpus: Corpus, mf: ToyModelParams, block_size: int) -> IBBatch:
    """Training triples from a synthetic corpus.

    Contexts pair the previous step's majority action with the summary symbol
    from a temperature-0 rollout of the current summary model over the real
    action stream, so the batch tracks the model as training proceeds.
    """
    triples: list[tuple[int, int, int, int]] = []
    for event in corpus.events:
        blocks = _event_blocks(event, block_size)
        m_hat = 0
        for t in range(1, len(blocks)):
            majority = majority_action([a for _, a in blocks[t - 1]])
            context = (m_hat, majority)
            for s, a in blocks[t]:
                triples.append((context[0], context[1], s, a))
            m_hat = int(np.argmax(mf.meanfield_logits[context[0], context[1]]))
    if not triples:
        raise ValueError("corpus yields no training triples (too few steps per event)")
    return IBBatch.uniform(triples)


def rollout_symbols(batch: IBBatch, mf: ToyModelParams) -> np.ndarray:
    """The summary symbol each triple's policy call would condition on: the
    temperature-0 draw from the posterior at that triple's context."""
    pm, mj, s, a, w = _batch_arrays(batch)
    return np.argmax(mf.meanfield_logits, axis=2)[pm, mj]


def hard_policy_nll(policy: ToyModelParams, batch: IBBatch,
                    symbols: np.ndarray) -> float:
    """Batch-weighted NLL of observed actions at concrete summary symbols."""
    pm, mj, s, a, w = _batch_arrays(batch)
    logp = log_softmax(policy.policy_logits)
    return float(-(w * logp[s, symbols, a]).sum())


def grad_hard_policy_nll(policy: ToyModelParams, batch: IBBatch,
                         symbols: np.ndarray) -> np.ndarray:
    n_s, n_a, n_m = policy.alphabets
    pm, mj, s, a, w = _batch_arrays(batch)
    occupancy = np.zeros((n_s, n_m))
    np.add.at(occupancy, (s, symbols), w)
    target = np.zeros((n_s, n_m, n_a))
    np.add.at(target, (s, symbols, a), w)
    probs = softmax(policy.policy_logits)
    return probs * occupancy[:, :, None] - target


def _sft_pairs(corpus: Corpus) -> list[tuple[int, int]]:
    pairs = []
    for event in corpus.events:
        for profile, action in event.timeline:
            pairs.append((toy_state_symbol(profile), toy_action_symbol(action.text)))
    return pairs


def init_toy_params(n_states: int, n_actions: int, mf_alphabet: int, seed: int,
                    scale: float = 0.1) -> ToyModelParams:
    """Near-uniform seeded init; the noise breaks the symmetry across summary
    symbols that exact zeros would never escape."""
    rng = np.random.default_rng(seed & 0xFFFFFFFFFFFFFFFF)
    return ToyModelParams(
        policy_logits=rng.normal(0.0, scale, (n_states, mf_alphabet, n_actions)),
        meanfield_logits=rng.normal(0.0, scale, (mf_alphabet, n_actions, mf_alphabet)),
        alphabets=(n_states, n_actions, mf_alphabet),
    )


def train_toy(train_corpus: Corpus, hyper: IBHyper, mode: str,
              *, mf_alphabet: int = 8, block_size: int = 16,
              init_scale: float = 0.1,
              ) -> tuple[ToyModelParams, LossCurves]:
    """Full-batch gradient descent on the toy models.

    full_ibtune alternates one summary-model update with one policy update per
    iteration; policy_only_sft trains the policy on states alone (the summary
    input marginalized out and its logits never read); no_meanfield returns the
    untrained models.
    """
    if mode not in TRAIN_MODES:
        raise ValueError(f"mode must be one of {TRAIN_MODES}")
    n_states, n_actions = corpus_alphabets(train_corpus)
    params = init_toy_params(n_states, n_actions, mf_alphabet, hyper.seed, init_scale)
    if mode == "no_meanfield" or hyper.iterations == 0:
        return params, LossCurves(rows=())

    policy_logits = params.policy_logits.copy()
    meanfield_logits = params.meanfield_logits.copy()
    rows: list[tuple[int, Optional[float], Optional[float]]] = []

    if mode == "policy_only_sft":
        pairs = _sft_pairs(train_corpus)
        shared = np.zeros((n_states, n_actions))
        counts = np.zeros(n_states)
        onehots = np.zeros((n_states, n_actions))
        for s, a in pairs:
            counts[s] += 1
            onehots[s, a] += 1
        for iteration in range(hyper.iterations):
            logp = log_softmax(shared)
            loss = -float((onehots * logp).sum()) / len(pairs)
            if not np.isfinite(loss):
                raise TrainingError(iteration, "policy loss diverged")
            rows.append((iteration, None, loss))
            grad = (softmax(shared) * counts[:, None] - onehots) / len(pairs)
            shared -= hyper.learning_rate * grad
        policy_logits = np.repeat(shared[:, None, :], mf_alphabet, axis=1)
        trained = ToyModelParams(policy_logits=policy_logits,
                                 meanfield_logits=meanfield_logits,
                                 alphabets=(n_states, n_actions, mf_alphabet))
        return trained, LossCurves(rows=tuple(rows))

    # full_ibtune; the prior is a frozen copy of the summary model at init
    prior_rows_table = softmax(params.meanfield_logits)
    data = _TrainingData(train_corpus, block_size)
    for iteration in range(hyper.iterations):
        if not (np.all(np.isfinite(policy_logits))
                and np.all(np.isfinite(meanfield_logits))):
            raise TrainingError(iteration, "parameters diverged")
        # one sampled summary chain per iteration: the same draw forms the
        # contexts of the compression term and the symbols the policy epoch
        # conditions on, mirroring simulation-time sampling
        rng = np.random.default_rng(derive_seed(hyper.seed, 3, iteration))
        pm, symbols = data.contexts(meanfield_logits, rng)
        context_weights = np.zeros((mf_alphabet, n_actions))
        np.add.at(context_weights, (pm, data.mj), data.w)
        rho = np.einsum("pa,pam->m", context_weights, prior_rows_table)

        loglik = log_softmax(policy_logits)[data.s, :, data.a]
        log_mu = log_softmax(meanfield_logits)[pm, data.mj]
        mu = np.exp(log_mu)
        g = log_mu - np.log(rho)[None, :] - hyper.beta * loglik
        mf_loss = float((data.w * (mu * (log_mu - np.log(rho)[None, :])).sum(axis=1)).sum()
                        - hyper.beta * (data.w * (mu * loglik).sum(axis=1)).sum())
        if not np.isfinite(mf_loss):
            raise TrainingError(iteration, "mean-field loss diverged")
        centered = g - (mu * g).sum(axis=1, keepdims=True)
        mf_grad = np.zeros_like(meanfield_logits)
        np.add.at(mf_grad, (pm, data.mj), data.w[:, None] * mu * centered)
        with np.errstate(over="ignore"):
            meanfield_logits = meanfield_logits - hyper.learning_rate * mf_grad
        if not np.all(np.isfinite(meanfield_logits)):
            raise TrainingError(iteration, "summary-model update diverged")

        logp = log_softmax(policy_logits)
        pol_loss = float(-(data.w * logp[data.s, symbols, data.a]).sum())
        if not np.isfinite(pol_loss):
            raise TrainingError(iteration, "policy loss diverged")
        occupancy = np.zeros((n_states, mf_alphabet))
        np.add.at(occupancy, (data.s, symbols), data.w)
        target = np.zeros((n_states, mf_alphabet, n_actions))
        np.add.at(target, (data.s, symbols, data.a), data.w)
        pol_grad = np.exp(logp) * occupancy[:, :, None] - target
        policy_logits = policy_logits - hyper.learning_rate * pol_grad
        rows.append((iteration, float(mf_loss), float(pol_loss)))

    trained = ToyModelParams(policy_logits=policy_logits,
                             meanfield_logits=meanfield_logits,
                             alphabets=(n_states, n_actions, mf_alphabet))
    return trained, LossCurves(rows=tuple(rows))


# --- parameter files ------------------------------------------------------------


def save_toy_params(params: ToyModelParams, path: Union[str, Path]) -> None:
    payload = {
        "alphabets": list(params.alphabets),
        "policy_logits": params.policy_logits.tolist(),
        "meanfield_logits": params.meanfield_logits.tolist(),
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_toy_params(path: Union[str, Path]) -> ToyModelParams:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return ToyModelParams(
        policy_logits=np.asarray(payload["policy_logits"], dtype=float),
        meanfield_logits=np.asarray(payload["meanfield_logits"], dtype=float),
        alphabets=tuple(payload["alphabets"]),
    )
