"""Action classifiers: a deterministic mock for toy/offline runs and a batch
LLM judge speaking the evaluation prompt wire format.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from .backends import BackendError, TextBackend
from .metrics import DEFAULT_SCHEMA, DimensionSchema, LabelVector, UNKNOWN, unknown_labels
from .prompts import render_judge_prompt


class ClassificationError(RuntimeError):
    def __init__(self, batch_index: int, message: str) -> None:
        self.batch_index = batch_index
        super().__init__(f"batch {batch_index}: {message}")


# Judge response keys -> canonical dimension names.
JUDGE_KEY_MAP = {
    "rumor": "rumor",
    "sentiment_state": "sentiment",
    "sentiment_tendency": "attitude",
    "behavior_type": "behavior",
    "stance": "stance",
    "belief_degree": "belief",
    "subjectivity": "subjectivity",
    "intent_classification": "intent",
}


@dataclass
class MockJudge:
    """Deterministic rules: toy symbol texts map by index into each dimension's
    labels; free text falls back to keyword cues."""

    schema: DimensionSchema = field(default_factory=lambda: DEFAULT_SCHEMA)
    failures: int = 0

    def classify(self, topic: str, texts: list[str]) -> list[LabelVector]:
        return [self._classify_one(text) for text in texts]

    def _classify_one(self, text: str) -> LabelVector:
        stripped = text.strip()
        if stripped.lstrip("-").isdigit():
            symbol = int(stripped)
            labels = {name: self.schema.labels(name)[symbol % len(self.schema.labels(name))]
                      for name in self.schema.names()}
            return LabelVector(labels=labels, keywords=(stripped,))
        return self._keyword_rules(stripped)

    def _keyword_rules(self, text: str) -> LabelVector:
        lower = text.lower()
        doubting = any(cue in lower for cue in ("fake", "rumor", "doubt", "really?", "is it true"))
        sharing = any(cue in lower for cue in ("repost", "share", "//@"))
        angry = "!" in text or "angry" in lower
        labels = {
            "rumor": "counter" if doubting else "spread",
            "sentiment": "angry" if angry else "calm",
            "attitude": "negative" if (doubting or angry) else "neutral",
            "behavior": "share" if sharing else "comment",
            "stance": "oppose" if doubting else "neutral",
            "belief": "doubt" if doubting else "believe",
            "subjectivity": "objective" if sharing else "subjective",
            "intent": "question" if "?" in text else ("promotion" if sharing else "opinion"),
        }
        keywords = tuple(lower.split()[:2]) if lower else ("",)
        return LabelVector(labels={name: labels.get(name, UNKNOWN)
                                   for name in self.schema.names()},
                           keywords=keywords)


def parse_judge_response(payload: str, expected: int,
                         schema: DimensionSchema = DEFAULT_SCHEMA) -> list[LabelVector]:
    """Parse the judge's bare JSON array; raises ValueError on any deviation."""
    data = json.loads(payload)
    if not isinstance(data, list) or len(data) != expected:
        raise ValueError(f"expected a JSON array of {expected} objects")
    vectors = []
    for obj in data:
        if not isinstance(obj, dict):
            raise ValueError("array entries must be objects")
        labels: dict[str, str] = {}
        for judge_key, dimension in JUDGE_KEY_MAP.items():
            value = obj.get(judge_key, UNKNOWN)
            allowed = schema.labels(dimension)
            labels[dimension] = value if value in allowed else UNKNOWN
        raw_keywords = obj.get("keywords", [])
        keywords = tuple(str(k) for k in raw_keywords) if isinstance(raw_keywords, list) else ()
        vectors.append(LabelVector(labels=labels, keywords=keywords))
    return vectors


@dataclass
class LLMJudge:
    """Batches comments through the evaluation prompt; malformed responses are
    retried up to ``max_parse_retries`` times, then the batch degrades to
    unknown labels and the failure counter ticks."""

    backend: TextBackend
    schema: DimensionSchema = field(default_factory=lambda: DEFAULT_SCHEMA)
    batch_size: int = 20
    max_parse_retries: int = 3
    failures: int = 0

    def classify(self, topic: str, texts: list[str]) -> list[LabelVector]:
        vectors: list[LabelVector] = []
        for batch_index, start in enumerate(range(0, len(texts), self.batch_size)):
            batch = texts[start:start + self.batch_size]
            vectors.extend(self._classify_batch(topic, batch, batch_index))
        return vectors

    def _classify_batch(self, topic: str, batch: list[str],
                        batch_index: int) -> list[LabelVector]:
        prompt = render_judge_prompt(topic, batch)
        last_parse_error: Optional[Exception] = None
        for attempt in range(self.max_parse_retries):
            try:
                response = self.backend.generate(prompt.text, seed=attempt, temperature=0.0)
            except BackendError as exc:
                raise ClassificationError(batch_index, f"judge transport failed: {exc}") from exc
            try:
                return parse_judge_response(response, len(batch), self.schema)
            except (ValueError, json.JSONDecodeError) as exc:
                last_parse_error = exc
        self.failures += 1
        del last_parse_error
        return [unknown_labels(self.schema) for _ in batch]
