"""Generator adapters: produce raw completions for reproduction meta-prompts.

Two implementations behind one duck-typed surface:

  * MockGenerator  -- deterministic stand-in for tests and desk-scale runs;
    applies one word-level edit (insert / delete / replace from a
    configured vocabulary pool) to one parent parsed out of the meta-prompt.
  * RemoteGenerator -- chat-completions-style JSON over HTTPS with bounded
    retries, exponential backoff, an in-flight cap and a per-minute rate
    limit. Payload building and response parsing are pure functions so the
    wire shapes can be tested against recorded fixtures without a network.
"""

from __future__ import annotations

import hashlib
import logging
import random
import threading
import time
from collections import deque
from dataclasses import dataclass
from typing import Any, Callable

from .errors import ProviderRefusal, TransportError

logger = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 1.0
DEFAULT_MAX_TOKENS = 512

# Statuses worth retrying: rate limiting and transient server failures.
RETRYABLE_STATUSES = frozenset({429, 500, 502, 503, 504})


@dataclass(frozen=True)
class GenerationRequest:
    meta_prompt: str
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    attempt: int = 0
    # Engine-supplied 64-bit value keying mock randomness by child slot;
    # None when the request is issued outside the round loop.
    entropy: int | None = None

    def __post_init__(self):
        if not self.meta_prompt:
            raise ValueError("meta_prompt must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")
        if self.attempt < 0:
            raise ValueError("attempt must be non-negative")


@dataclass(frozen=True)
class GenerationOutcome:
    raw_text: str
    latency: float
    provider_id: str


def _stable_u64(*parts: object) -> int:
    digest = hashlib.blake2b(
        ":".join(str(p) for p in parts).encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big")


def parse_parent_prompts(meta_prompt: str) -> list[str]:
    """Recover parent prompt texts from a standard meta-prompt.

    Parents live on the middle lines, one per line, in the fixed
    "<prompt> (score: x.xxxx)" format. Falls back to the whole text when
    the shape is unrecognized, so the mock stays total.
    """
    lines = meta_prompt.split("\n")
    parents = []
    for line in lines[1:-1]:
        if line:
            parents.append(line.rsplit(" (score: ", 1)[0])
    return parents or [meta_prompt]


class MockGenerator:
    """Deterministic generator: one word edit of one parent per call.

    Equal (seed, parents, entropy) always give equal output, across
    processes; no state is shared between calls.
    """

    provider_id = "mock"

    def __init__(
        self,
        vocabulary: tuple[str, ...] | list[str] = (),
        seed: int = 0,
        temperature: float = DEFAULT_TEMPERATURE,
        max_tokens: int = DEFAULT_MAX_TOKENS,
    ):
        self.vocabulary = tuple(vocabulary)
        self.seed = seed
        self.temperature = temperature
        self.max_tokens = max_tokens

    def generate(self, request: GenerationRequest) -> GenerationOutcome:
        parents = parse_parent_prompts(request.meta_prompt)
        entropy = request.entropy
        if entropy is None:
            entropy = _stable_u64(self.seed, request.meta_prompt)
        # Retries must explore a different edit.
        entropy = _stable_u64(entropy, request.attempt)
        return GenerationOutcome(
            raw_text=self.mock_mutate(parents, entropy),
            latency=0.0,
            provider_id=self.provider_id,
        )

    def mock_mutate(self, parents: list[str], entropy: int) -> str:
        """Pick one parent by entropy, apply one edit, wrap in braces."""
        rng = random.Random(_stable_u64(self.seed, entropy))
        parent = parents[rng.randrange(len(parents))]
        words = parent.split()
        edit = self.choose_edit(words, rng)
        child = " ".join(self.apply_edit(words, edit, rng)) if edit else parent
        return (
            "Considering the scored prompts above, one small wording change "
            f"should help. {{{child}}}"
        )

    def choose_edit(self, words: list[str], rng: random.Random) -> str | None:
        options = []
        if self.vocabulary:
            options.append("insert")
        if len(words) > 1:
            options.append("delete")
        if self.vocabulary and words:
            options.append("replace")
        return rng.choice(options) if options else None

    def apply_edit(self, words: list[str], edit: str, rng: random.Random) -> list[str]:
        words = list(words)
        if edit == "insert":
            words.insert(rng.randrange(len(words) + 1), rng.choice(self.vocabulary))
        elif edit == "delete":
            words.pop(rng.randrange(len(words)))
        elif edit == "replace":
            words[rng.randrange(len(words))] = rng.choice(self.vocabulary)
        else:
            raise ValueError(f"unknown edit {edit!r}")
        return words


def build_chat_payload(model: str, request: GenerationRequest) -> dict[str, Any]:
    """Chat-completions request body. The meta-prompt is passed through verbatim."""
    return {
        "model": model,
        "messages": [{"role": "user", "content": request.meta_prompt}],
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    }


def parse_chat_response(payload: dict[str, Any]) -> str:
    """First choice's message content; empty content is a refusal."""
    try:
        content = payload["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise TransportError(f"malformed completion response: {exc!r}") from exc
    if not isinstance(content, str) or not content.strip():
        raise ProviderRefusal("provider returned an empty completion")
    return content


# transport(url, headers, json_body) -> (status_code, parsed_json_or_None)
Transport = Callable[[str, dict[str, str], dict[str, Any]], tuple[int, Any]]


def requests_transport(url: str, headers: dict[str, str], body: dict[str, Any]):
    import requests

    response = requests.post(url, headers=headers, json=body, timeout=120)
    try:
        parsed = response.json()
    except ValueError:
        parsed = None
    return response.status_code, parsed


class RateLimiter:
    """Sliding-window requests-per-minute limiter; thread-safe."""

    def __init__(
        self,
        per_minute: int,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.per_minute = per_minute
        self._clock = clock
        self._sleep = sleep
        self._stamps: deque[float] = deque()
        self._lock = threading.Lock()

    def acquire(self):
        if self.per_minute <= 0:
            return
        while True:
            with self._lock:
                now = self._clock()
                while self._stamps and now - self._stamps[0] >= 60.0:
                    self._stamps.popleft()
                if len(self._stamps) < self.per_minute:
                    self._stamps.append(now)
                    return
                wait = 60.0 - (now - self._stamps[0])
            self._sleep(max(wait, 0.0))


class RemoteGenerator:
    """Chat-completions adapter. The credential is held in memory and never logged."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str = "",
        temperature: float = DEFAULT_TEMPERATURE,
        max_tokens: int = DEFAULT_MAX_TOKENS,
        max_retries: int = 3,
        backoff_base: float = 0.5,
        max_in_flight: int = 4,
        requests_per_minute: int = 60,
        transport: Transport = requests_transport,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.monotonic,
    ):
        self.endpoint = endpoint
        self.model = model
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self._api_key = api_key
        self._transport = transport
        self._sleep = sleep
        self._clock = clock
        self._in_flight = threading.BoundedSemaphore(max(max_in_flight, 1))
        self._limiter = RateLimiter(requests_per_minute, clock=clock, sleep=sleep)
        self.provider_id = model

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        return headers

    def generate(self, request: GenerationRequest) -> GenerationOutcome:
        payload = build_chat_payload(self.model, request)
        started = self._clock()
        last_failure = "no attempts made"
        for try_index in range(self.max_retries + 1):
            if try_index:
                delay = self.backoff_base * (2 ** (try_index - 1))
                logger.warning(
                    "generation transport retry %d/%d in %.2fs (%s)",
                    try_index, self.max_retries, delay, last_failure,
                )
                self._sleep(delay)
            self._limiter.acquire()
            with self._in_flight:
                try:
                    status, body = self._transport(
                        self.endpoint, self._headers(), payload
                    )
                except Exception as exc:
                    last_failure = f"transport exception: {exc!r}"
                    continue
            if status in RETRYABLE_STATUSES:
                last_failure = f"status {status}"
                continue
            if status != 200 or not isinstance(body, dict):
                raise TransportError(
                    f"provider returned status {status} with unusable body"
                )
            raw_text = parse_chat_response(body)
            return GenerationOutcome(
                raw_text=raw_text,
                latency=self._clock() - started,
                provider_id=self.provider_id,
            )
        raise TransportError(f"retry budget exhausted: {last_failure}")
