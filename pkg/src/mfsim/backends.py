"""Generative backends: scripted replay, exact toy categorical models, and a
remote chat-completions client.

All backends are deterministic at temperature 0 or for a fixed seed. Toy
backends expose exact log-probabilities over their finite alphabets; the
remote client reports none (closed models print a dash in reports).
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Optional, Protocol, runtime_checkable

import httpx
import numpy as np


class BackendError(RuntimeError):
    """Transport or completion failure after retries."""


class ReplayMissError(KeyError):
    """A scripted backend saw a prompt it has no entry for."""


def derive_seed(root: int, *key: int) -> int:
    """Stable per-(stream, step, agent) seed so concurrent fan-out order never
    changes results."""
    ss = np.random.SeedSequence(
        root & 0xFFFFFFFFFFFFFFFF,
        spawn_key=tuple(k & 0xFFFFFFFF for k in key),
    )
    return int(ss.generate_state(1, dtype=np.uint64)[0])


# Stream ids for derive_seed
STREAM_POLICY = 0
STREAM_MEAN_FIELD = 1
STREAM_STATES = 2


@runtime_checkable
class TextBackend(Protocol):
    supports_logprob: bool

    def generate(self, prompt: str, seed: int, temperature: float) -> str: ...

    def logprob(self, output: str, prompt: str) -> Optional[float]: ...


@dataclass
class ScriptedBackend:
    """Replays a fixed prompt -> completion table; unknown prompts fail loudly."""

    table: dict[str, str]
    logprobs: dict[tuple[str, str], float] = field(default_factory=dict)
    supports_logprob: bool = False

    def generate(self, prompt: str, seed: int, temperature: float) -> str:
        if prompt not in self.table:
            raise ReplayMissError(f"no scripted completion for prompt: {prompt[:80]!r}")
        return self.table[prompt]

    def logprob(self, output: str, prompt: str) -> Optional[float]:
        if not self.supports_logprob:
            return None
        return self.logprobs.get((prompt, output))


@dataclass
class ConstantBackend:
    """Always answers with the same text; handy for baselines and tests."""

    text: str
    supports_logprob: bool = False

    def generate(self, prompt: str, seed: int, temperature: float) -> str:
        return self.text

    def logprob(self, output: str, prompt: str) -> Optional[float]:
        return None


# --- toy categorical models --------------------------------------------------


@dataclass(frozen=True)
class ToyModelParams:
    """Logit tables for the toy policy and toy mean-field model.

    policy_logits: (state, mean-field symbol, action)
    meanfield_logits: (previous mean-field symbol, majority action, next symbol)
    alphabets: (|S|, |A|, |M|)
    """

    policy_logits: np.ndarray
    meanfield_logits: np.ndarray
    alphabets: tuple[int, int, int]

    def __post_init__(self) -> None:
        n_s, n_a, n_m = self.alphabets
        if self.policy_logits.shape != (n_s, n_m, n_a):
            raise ValueError(f"policy_logits must have shape {(n_s, n_m, n_a)}")
        if self.meanfield_logits.shape != (n_m, n_a, n_m):
            raise ValueError(f"meanfield_logits must have shape {(n_m, n_a, n_m)}")
        if not (np.all(np.isfinite(self.policy_logits))
                and np.all(np.isfinite(self.meanfield_logits))):
            raise ValueError("logits must be finite")

    @classmethod
    def zeros(cls, n_states: int, n_actions: int, n_meanfield: int) -> "ToyModelParams":
        return cls(
            policy_logits=np.zeros((n_states, n_meanfield, n_actions)),
            meanfield_logits=np.zeros((n_meanfield, n_actions, n_meanfield)),
            alphabets=(n_states, n_actions, n_meanfield),
        )

    def copy(self) -> "ToyModelParams":
        return ToyModelParams(
            policy_logits=self.policy_logits.copy(),
            meanfield_logits=self.meanfield_logits.copy(),
            alphabets=self.alphabets,
        )


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def _toy_row(params: ToyModelParams, which: str, condition: tuple[int, ...]) -> np.ndarray:
    n_s, n_a, n_m = params.alphabets
    if which == "policy":
        s, m = condition
        if not (0 <= s < n_s and 0 <= m < n_m):
            raise ValueError(f"policy condition {condition} out of range for alphabets {params.alphabets}")
        return params.policy_logits[s, m]
    if which == "mean_field":
        prev_m, maj_a = condition
        if not (0 <= prev_m < n_m and 0 <= maj_a < n_a):
            raise ValueError(f"mean-field condition {condition} out of range for alphabets {params.alphabets}")
        return params.meanfield_logits[prev_m, maj_a]
    raise ValueError(f"unknown toy model {which!r}")


def toy_sample(params: ToyModelParams, which: str, condition: tuple[int, ...],
               seed: int, temperature: float) -> int:
    """Draw a symbol from softmax(logits / temperature) at the conditioned row.

    Temperature 0 means argmax with the lowest-index tie-break; a fixed seed
    gives a fixed draw.
    """
    logits = _toy_row(params, which, condition)
    if temperature == 0:
        return int(np.argmax(logits))
    probs = softmax(logits / temperature)
    rng = np.random.default_rng(seed & 0xFFFFFFFFFFFFFFFF)
    return int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))


def toy_logprob(params: ToyModelParams, which: str, condition: tuple[int, ...],
                symbol: int) -> float:
    logits = _toy_row(params, which, condition)
    if not 0 <= symbol < logits.shape[0]:
        raise ValueError(f"symbol {symbol} out of range for alphabet {logits.shape[0]}")
    return float(log_softmax(logits)[symbol])


@dataclass
class ToyPolicyBackend:
    """Policy over toy action symbols conditioned on (state symbol, summary symbol)."""

    params: ToyModelParams
    supports_logprob: bool = True

    def sample_action(self, state_symbol: int, mf_symbol: int, seed: int,
                      temperature: float) -> int:
        return toy_sample(self.params, "policy", (state_symbol, mf_symbol), seed, temperature)

    def action_logprob(self, state_symbol: int, mf_symbol: int, action_symbol: int) -> float:
        return toy_logprob(self.params, "policy", (state_symbol, mf_symbol), action_symbol)


@dataclass
class ToyMeanFieldBackend:
    """Next-summary-symbol model conditioned on (previous symbol, majority action)."""

    params: ToyModelParams
    supports_logprob: bool = True

    def sample_symbol(self, prev_symbol: int, majority_symbol: int, seed: int,
                      temperature: float) -> int:
        return toy_sample(self.params, "mean_field", (prev_symbol, majority_symbol),
                          seed, temperature)


# --- remote chat-completions client -------------------------------------------


_THINK_SPAN = re.compile(r"<think>.*?</think>", re.DOTALL)


def strip_reasoning(text: str) -> str:
    return _THINK_SPAN.sub("", text).strip()


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[dict[str, str], ...]
    temperature: float = 1.0
    seed: Optional[int] = None


@dataclass
class RemoteBackendConfig:
    endpoint_url: str
    model: str
    max_retries: int = 4
    backoff_base: float = 0.25
    timeout: float = 60.0
    auth_token_env: str = "MFSIM_API_TOKEN"
    max_in_flight: int = 8


def remote_complete(config: RemoteBackendConfig, request: ChatRequest) -> str:
    """POST a chat-completions request, retrying with exponential backoff up to
    ``max_retries`` attempts; reasoning spans are stripped from the reply."""
    body: dict = {
        "model": request.model,
        "messages": list(request.messages),
        "temperature": request.temperature,
    }
    if request.seed is not None:
        body["seed"] = request.seed
    headers = {"Content-Type": "application/json"}
    token = os.environ.get(config.auth_token_env, "")
    if token:
        headers["Authorization"] = f"Bearer {token}"

    last_error: Optional[Exception] = None
    for attempt in range(config.max_retries):
        if attempt > 0:
            time.sleep(config.backoff_base * (2 ** (attempt - 1)))
        try:
            response = httpx.post(config.endpoint_url, content=json.dumps(body),
                                  headers=headers, timeout=config.timeout)
            response.raise_for_status()
            content = response.json()["choices"][0]["message"]["content"]
        except (httpx.HTTPError, KeyError, IndexError, json.JSONDecodeError) as exc:
            last_error = exc
            continue
        text = strip_reasoning(content)
        if not text:
            raise BackendError(f"empty completion from {config.endpoint_url}")
        return text
    raise BackendError(
        f"chat completion failed after {config.max_retries} attempts: {last_error}"
    )


@dataclass
class RemoteChatBackend:
    """Text backend over a chat-completions endpoint; bounds in-flight requests."""

    config: RemoteBackendConfig
    supports_logprob: bool = False

    def __post_init__(self) -> None:
        self._gate = threading.Semaphore(self.config.max_in_flight)

    def generate(self, prompt: str, seed: int, temperature: float) -> str:
        request = ChatRequest(
            model=self.config.model,
            messages=({"role": "user", "content": prompt},),
            temperature=temperature,
            seed=seed,
        )
        with self._gate:
            return remote_complete(self.config, request)

    def logprob(self, output: str, prompt: str) -> Optional[float]:
        return None
