"""Generator adapters: deterministic mock, wire shapes, retries, rate limits."""

from __future__ import annotations

import json
from collections import Counter

import pytest

from promptevo.errors import ProviderRefusal, TransportError
from promptevo.generation import (
    GenerationOutcome,
    GenerationRequest,
    MockGenerator,
    RateLimiter,
    RemoteGenerator,
    build_chat_payload,
    parse_chat_response,
    parse_parent_prompts,
)
from promptevo.metaprompt import extract_prompt

META = (
    "TASK LINE\n"
    "Classify the following sentence. (score: 0.5000)\n"
    "FINAL LINE with curly brackets {} such as {Please help me to classify.}."
)


class TestGenerationRequest:
    def test_defaults(self):
        request = GenerationRequest(meta_prompt=META)
        assert request.temperature == 1.0
        assert request.max_tokens == 512
        assert request.attempt == 0
        assert request.entropy is None

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"meta_prompt": ""},
            {"meta_prompt": "x", "temperature": -0.1},
            {"meta_prompt": "x", "max_tokens": 0},
            {"meta_prompt": "x", "attempt": -1},
        ],
    )
    def test_invalid_fields_rejected(self, kwargs):
        with pytest.raises(ValueError):
            GenerationRequest(**kwargs)


class TestParseParentPrompts:
    def test_middle_lines_are_parents(self):
        meta = "pre\nalpha (score: 0.1000)\nbeta (score: 0.9000)\npost"
        assert parse_parent_prompts(meta) == ["alpha", "beta"]

    def test_score_marker_inside_prompt_text(self):
        meta = "pre\na (score: 0.1) b (score: 0.2000)\npost"
        assert parse_parent_prompts(meta) == ["a (score: 0.1) b"]

    def test_unrecognized_shape_falls_back_to_whole_text(self):
        assert parse_parent_prompts("just one line") == ["just one line"]


class TestMockGenerator:
    def test_deterministic_for_fixed_inputs(self):
        generator = MockGenerator(vocabulary=("signal", "focus"), seed=7)
        request = GenerationRequest(meta_prompt=META, attempt=1)
        a = generator.generate(request)
        b = generator.generate(request)
        assert a == b
        assert a.provider_id == "mock"

    def test_seed_changes_output_stream(self):
        request = GenerationRequest(meta_prompt=META)
        texts = {
            MockGenerator(vocabulary=("signal",), seed=s).generate(request).raw_text
            for s in range(20)
        }
        assert len(texts) > 1

    def test_output_wraps_single_braced_prompt(self):
        generator = MockGenerator(vocabulary=("signal",), seed=0)
        outcome = generator.generate(GenerationRequest(meta_prompt=META))
        extracted = extract_prompt(outcome.raw_text)
        assert extracted
        assert "{" not in extracted

    def test_mutation_is_one_word_edit(self):
        generator = MockGenerator(vocabulary=("signal", "focus"), seed=0)
        parent_words = "Classify the following sentence.".split()
        for entropy in range(500):
            raw = generator.mock_mutate(["Classify the following sentence."], entropy)
            child_words = extract_prompt(raw).split()
            assert len(child_words) in (
                len(parent_words) - 1,
                len(parent_words),
                len(parent_words) + 1,
            )

    def test_edit_type_frequencies_are_uniform_thirds(self):
        generator = MockGenerator(vocabulary=("signal", "focus", "anchor"), seed=3)
        parent = "alpha beta gamma delta"
        base_len = len(parent.split())
        counts = Counter()
        trials = 100_000
        for entropy in range(trials):
            child = extract_prompt(generator.mock_mutate([parent], entropy))
            delta = len(child.split()) - base_len
            counts["insert" if delta == 1 else "delete" if delta == -1 else "replace"] += 1
        for edit in ("insert", "delete", "replace"):
            assert abs(counts[edit] / trials - 1 / 3) <= 0.02

    def test_single_word_parent_never_deleted(self):
        generator = MockGenerator(vocabulary=("sentiment",), seed=0)
        results = {
            extract_prompt(generator.mock_mutate(["classify"], entropy))
            for entropy in range(300)
        }
        assert "" not in results
        assert results <= {"classify sentiment", "sentiment classify", "sentiment"}
        # both insert positions and the replacement all occur
        assert {"classify sentiment", "sentiment classify", "sentiment"} <= results

    def test_empty_pool_forces_delete(self):
        generator = MockGenerator(vocabulary=(), seed=0)
        results = {
            extract_prompt(generator.mock_mutate(["a b"], entropy))
            for entropy in range(100)
        }
        assert results == {"a", "b"}

    def test_no_possible_edit_returns_parent(self):
        generator = MockGenerator(vocabulary=(), seed=0)
        raw = generator.mock_mutate(["single"], entropy=5)
        assert extract_prompt(raw) == "single"

    def test_retries_explore_different_edits(self):
        generator = MockGenerator(vocabulary=("signal", "focus", "anchor"), seed=0)
        outcomes = {
            generator.generate(
                GenerationRequest(meta_prompt=META, attempt=attempt, entropy=123)
            ).raw_text
            for attempt in range(10)
        }
        assert len(outcomes) > 1


class TestWireShapes:
    def test_request_payload_matches_fixture(self, data_dir):
        fixture = json.loads((data_dir / "chat_request.json").read_text())
        request = GenerationRequest(
            meta_prompt=fixture["messages"][0]["content"],
            temperature=fixture["temperature"],
            max_tokens=fixture["max_tokens"],
        )
        assert build_chat_payload(fixture["model"], request) == fixture

    def test_response_parses_to_first_choice_content(self, data_dir):
        fixture = json.loads((data_dir / "chat_response.json").read_text())
        content = parse_chat_response(fixture)
        assert content == fixture["choices"][0]["message"]["content"]
        assert extract_prompt(content) == (
            "Determine the sentiment of the following sentence."
        )

    def test_missing_choices_is_transport_error(self):
        with pytest.raises(TransportError):
            parse_chat_response({"choices": []})

    def test_empty_content_is_refusal(self):
        with pytest.raises(ProviderRefusal):
            parse_chat_response({"choices": [{"message": {"content": "   "}}]})


class RecordingTransport:
    """Scripted transport: yields queued results; raising entries raise."""

    def __init__(self, results):
        self.results = list(results)
        self.calls = []

    def __call__(self, url, headers, body):
        self.calls.append((url, dict(headers), json.loads(json.dumps(body))))
        result = self.results.pop(0)
        if isinstance(result, Exception):
            raise result
        return result


def good_response(text="ok {Better prompt.}"):
    return (200, {"choices": [{"message": {"content": text}}]})


def make_remote(transport, sleeps=None, **kwargs):
    defaults = dict(
        endpoint="https://provider.example/v1/chat",
        model="rewriter-1",
        api_key="sk-test-not-a-real-key",
        backoff_base=0.5,
        max_retries=3,
        requests_per_minute=0,
        transport=transport,
        sleep=(sleeps.append if sleeps is not None else lambda s: None),
    )
    defaults.update(kwargs)
    return RemoteGenerator(**defaults)


class TestRemoteGenerator:
    def test_success_without_retries(self):
        transport = RecordingTransport([good_response()])
        generator = make_remote(transport)
        outcome = generator.generate(GenerationRequest(meta_prompt=META))
        assert isinstance(outcome, GenerationOutcome)
        assert outcome.raw_text == "ok {Better prompt.}"
        assert outcome.provider_id == "rewriter-1"
        assert len(transport.calls) == 1

    def test_bytes_sent_equal_bytes_built(self):
        transport = RecordingTransport([good_response()])
        generator = make_remote(transport)
        request = GenerationRequest(meta_prompt=META, temperature=0.7, max_tokens=99)
        generator.generate(request)
        _, _, sent = transport.calls[0]
        assert sent == build_chat_payload("rewriter-1", request)
        assert sent["messages"][0]["content"] == META

    def test_credential_in_header_only_when_set(self):
        transport = RecordingTransport([good_response(), good_response()])
        generator = make_remote(transport)
        generator.generate(GenerationRequest(meta_prompt=META))
        assert transport.calls[0][1]["Authorization"] == "Bearer sk-test-not-a-real-key"
        anonymous = make_remote(transport, api_key="")
        anonymous.generate(GenerationRequest(meta_prompt=META))
        assert "Authorization" not in transport.calls[1][1]

    def test_retries_with_exponential_backoff(self):
        sleeps = []
        transport = RecordingTransport(
            [ConnectionError("boom"), (500, None), good_response()]
        )
        generator = make_remote(transport, sleeps=sleeps)
        outcome = generator.generate(GenerationRequest(meta_prompt=META))
        assert outcome.raw_text == "ok {Better prompt.}"
        assert len(transport.calls) == 3
        assert sleeps == [0.5, 1.0]

    def test_budget_exhaustion_raises_transport_error(self):
        transport = RecordingTransport([(503, None)] * 4)
        generator = make_remote(transport, sleeps=[])
        with pytest.raises(TransportError):
            generator.generate(GenerationRequest(meta_prompt=META))
        assert len(transport.calls) == 4  # first try + 3 retries

    def test_non_retryable_status_fails_immediately(self):
        transport = RecordingTransport([(401, {"error": "bad key"})])
        generator = make_remote(transport)
        with pytest.raises(TransportError):
            generator.generate(GenerationRequest(meta_prompt=META))
        assert len(transport.calls) == 1

    def test_refusal_is_not_retried(self):
        transport = RecordingTransport([good_response("   ")])
        generator = make_remote(transport)
        with pytest.raises(ProviderRefusal):
            generator.generate(GenerationRequest(meta_prompt=META))
        assert len(transport.calls) == 1


class TestRateLimiter:
    def test_sliding_window(self):
        now = {"t": 0.0}
        sleeps = []

        def sleep(duration):
            sleeps.append(duration)
            now["t"] += duration

        limiter = RateLimiter(per_minute=2, clock=lambda: now["t"], sleep=sleep)
        limiter.acquire()
        limiter.acquire()
        assert sleeps == []
        limiter.acquire()  # window full: must wait out the oldest stamp
        assert sleeps == [60.0]
        now["t"] += 1.0
        limiter.acquire()  # stamps: t=60, t=61 -- under the limit again
        assert sleeps == [60.0]
        limiter.acquire()  # full window; oldest stamp t=60 expires at t=120
        assert sleeps == [60.0, 59.0]

    def test_zero_limit_never_sleeps(self):
        limiter = RateLimiter(per_minute=0, clock=lambda: 0.0, sleep=lambda s: (_ for _ in ()).throw(AssertionError))
        for _ in range(100):
            limiter.acquire()
