"""Fitness evaluation: render inputs, score label words, aggregate.

A prompt's fitness on a dataset is either mean accuracy (argmax over the
task's label-word scores, ties to the earliest declared label) or mean
negative log-likelihood of the correct word after softmax-normalizing the
scores over the label-word set only. Results are cached by
(prompt text, example-set fingerprint, fitness kind) so re-scoring a
surviving individual costs zero target calls.
"""

from __future__ import annotations

import logging
import math
import time
from typing import Callable, Protocol, Sequence

from .data import LabeledExample, fingerprint_examples
from .engine import FitnessKind
from .errors import TargetUnavailable, TransportError
from .generation import RETRYABLE_STATUSES, RateLimiter, Transport, requests_transport
from .metaprompt import TaskSpec

logger = logging.getLogger(__name__)


def render_input(example: LabeledExample, prompt_text: str, task: TaskSpec) -> str:
    """Target-model input: example text, then the prompt, then the answer head.

    Single-segment examples contribute their text bare; multi-segment ones
    contribute one "name: text" line per segment.
    """
    if not prompt_text:
        raise ValueError("prompt_text must be non-empty")
    if len(example.segments) == 1:
        block = example.segments[0][1]
    else:
        block = task.interval.join(f"{name}: {text}" for name, text in example.segments)
    return f"{block}{task.interval}{prompt_text}{task.interval}{task.head}"


def _check_scores(scores: Sequence[float], task: TaskSpec) -> list[float]:
    scores = [float(s) for s in scores]
    if len(scores) != len(task.labels):
        raise TargetUnavailable(
            f"target returned {len(scores)} scores for {len(task.labels)} labels"
        )
    if any(math.isnan(s) or math.isinf(s) for s in scores):
        raise TargetUnavailable("target returned a non-finite score")
    return scores


def predict(scores: Sequence[float], task: TaskSpec) -> int:
    """Position of the highest-scoring label word; ties break to the earliest."""
    scores = _check_scores(scores, task)
    best = 0
    for position in range(1, len(scores)):
        if scores[position] > scores[best]:
            best = position
    return best


def label_loss(scores: Sequence[float], label_id: int, task: TaskSpec) -> float:
    """Negative log of the correct word's probability among the label words."""
    scores = _check_scores(scores, task)
    shift = max(scores)
    log_norm = shift + math.log(sum(math.exp(s - shift) for s in scores))
    return log_norm - scores[label_id]


class TargetLike(Protocol):
    def score(self, rendered: str, candidate_words: Sequence[str]) -> Sequence[float]:
        ...


class FitnessCache:
    """Exact-match fitness cache with hit/miss counters."""

    def __init__(self):
        self._entries: dict[tuple[str, str, str], float] = {}
        self.hits = 0
        self.misses = 0

    def __len__(self):
        return len(self._entries)

    def lookup(self, key: tuple[str, str, str]) -> float | None:
        if key in self._entries:
            self.hits += 1
            return self._entries[key]
        self.misses += 1
        return None

    def store(self, key: tuple[str, str, str], value: float):
        self._entries[key] = value

    def dump(self) -> list[list]:
        return [[list(key), value] for key, value in sorted(self._entries.items())]

    @classmethod
    def restore(cls, entries: list[list]) -> "FitnessCache":
        cache = cls()
        for key, value in entries:
            cache._entries[tuple(key)] = float(value)
        return cache


class Evaluator:
    """Scores prompts against a target model with caching.

    Any target failure aborts the whole evaluation; no partial averages
    are recorded or cached.
    """

    def __init__(
        self,
        task: TaskSpec,
        target: TargetLike,
        kind: FitnessKind = FitnessKind.ACCURACY,
        cache: FitnessCache | None = None,
    ):
        self.task = task
        self.target = target
        self.kind = kind
        self.cache = cache if cache is not None else FitnessCache()

    @property
    def cache_hits(self) -> int:
        return self.cache.hits

    @property
    def cache_misses(self) -> int:
        return self.cache.misses

    def fitness(self, prompt_text: str, examples: Sequence[LabeledExample]) -> float:
        if not examples:
            raise ValueError("cannot evaluate on an empty example set")
        key = (prompt_text, fingerprint_examples(examples), self.kind.value)
        cached = self.cache.lookup(key)
        if cached is not None:
            return cached
        words = self.task.label_words
        if self.kind is FitnessKind.ACCURACY:
            correct = 0
            for example in examples:
                scores = self.target.score(
                    render_input(example, prompt_text, self.task), words
                )
                if predict(scores, self.task) == example.label_id:
                    correct += 1
            value = correct / len(examples)
        else:
            total = 0.0
            for example in examples:
                scores = self.target.score(
                    render_input(example, prompt_text, self.task), words
                )
                total += label_loss(scores, example.label_id, self.task)
            value = total / len(examples)
        self.cache.store(key, value)
        return value


def build_scorer_payload(rendered: str, candidate_words: Sequence[str]) -> dict:
    return {"rendered_text": rendered, "candidate_words": list(candidate_words)}


def parse_scorer_response(payload: dict, expected: int) -> list[float]:
    try:
        log_probs = payload["log_probs"]
    except (KeyError, TypeError) as exc:
        raise TransportError(f"malformed scorer response: {exc!r}") from exc
    if not isinstance(log_probs, list) or len(log_probs) != expected:
        raise TransportError(
            f"scorer returned {log_probs!r}, expected {expected} log-probs"
        )
    return [float(value) for value in log_probs]


class RemoteScorer:
    """Log-prob scorer over HTTPS; same retry/backoff discipline as generation.

    The credential is held in memory and never logged. Exposes a call
    counter so tests can assert cache behavior end to end.
    """

    def __init__(
        self,
        endpoint: str,
        api_key: str = "",
        max_retries: int = 3,
        backoff_base: float = 0.5,
        requests_per_minute: int = 0,
        transport: Transport = requests_transport,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.monotonic,
    ):
        self.endpoint = endpoint
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self._api_key = api_key
        self._transport = transport
        self._sleep = sleep
        self._limiter = RateLimiter(requests_per_minute, clock=clock, sleep=sleep)
        self.calls = 0

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        return headers

    def score(self, rendered: str, candidate_words: Sequence[str]) -> list[float]:
        payload = build_scorer_payload(rendered, candidate_words)
        self.calls += 1
        last_failure = "no attempts made"
        for try_index in range(self.max_retries + 1):
            if try_index:
                delay = self.backoff_base * (2 ** (try_index - 1))
                logger.warning(
                    "scorer transport retry %d/%d in %.2fs (%s)",
                    try_index, self.max_retries, delay, last_failure,
                )
                self._sleep(delay)
            self._limiter.acquire()
            try:
                status, body = self._transport(self.endpoint, self._headers(), payload)
            except Exception as exc:
                last_failure = f"transport exception: {exc!r}"
                continue
            if status in RETRYABLE_STATUSES:
                last_failure = f"status {status}"
                continue
            if status != 200 or not isinstance(body, dict):
                raise TargetUnavailable(
                    f"scorer returned status {status} with unusable body"
                )
            return parse_scorer_response(body, expected=len(candidate_words))
        raise TargetUnavailable(f"scorer retry budget exhausted: {last_failure}")
