"""Backend boundary: scripted double, context window, gateway wire format,
N-version fault masking."""

import json
import random
from collections import Counter

import httpx
import pytest

from agentloom.errors import (
    ContextWindowExceeded,
    GatewayError,
    MalformedReply,
    ProvenanceDenied,
    RateLimited,
    ScriptExhausted,
)
from agentloom.models import (
    Agreed,
    Backend,
    BackendDescriptor,
    Disagreement,
    GatewayBackend,
    ModelRequest,
    ModelResponse,
    ScriptedBackend,
    complete,
    descriptor_checksum,
    n_version,
    save_fixtures,
)
from agentloom.rai import AibomRecord, AibomRegistry, CredentialStatus


class TestScriptedBackend:
    def test_echo(self):
        response = complete(ScriptedBackend.echo(), ModelRequest(prompt="p"))
        assert response.text == "p"

    def test_sequential_consumption(self):
        fm = ScriptedBackend.sequential("a", "b")
        assert fm.complete(ModelRequest(prompt="x")).text == "a"
        assert fm.complete(ModelRequest(prompt="y")).text == "b"
        with pytest.raises(ScriptExhausted):
            fm.complete(ModelRequest(prompt="z"))

    def test_substring_matcher(self):
        fm = ScriptedBackend([("plan", "1. x")])
        assert fm.complete(ModelRequest(prompt="make a plan please")).text == "1. x"
        # substring fixtures persist across calls
        assert fm.complete(ModelRequest(prompt="another plan")).text == "1. x"

    def test_deterministic_sequences(self):
        def run():
            fm = ScriptedBackend([("greet", "hello"), (None, "first"), (None, "second")])
            prompts = ["please greet", "anything", "greet again", "misc"]
            return [fm.complete(ModelRequest(prompt=p)).text for p in prompts]

        assert run() == run()

    def test_usage_accounting(self):
        response = complete(ScriptedBackend.sequential("abcd"), ModelRequest(prompt="12345678"))
        assert response.prompt_tokens == 2
        assert response.completion_tokens == 1

    def test_fixture_file_round_trip(self, tmp_path):
        path = tmp_path / "fixtures.jsonl"
        save_fixtures([("plan", "1. x"), (None, "next")], path)
        fm = ScriptedBackend.from_file(path)
        assert fm.complete(ModelRequest(prompt="the plan")).text == "1. x"
        assert fm.complete(ModelRequest(prompt="other")).text == "next"


class TestContextWindow:
    def test_oversized_prompt_rejected(self):
        # 600,000 bytes -> ceil(600000/4) = 150,000 tokens > the 128k window
        fm = ScriptedBackend.echo(context_window=128_000)
        with pytest.raises(ContextWindowExceeded):
            complete(fm, ModelRequest(prompt="x" * 600_000))

    def test_exact_window_accepted(self):
        fm = ScriptedBackend.echo(context_window=128_000)
        assert complete(fm, ModelRequest(prompt="x" * 512_000)).text  # exactly 128,000 tokens

    def test_boundary_plus_minus_one_token(self):
        fm = ScriptedBackend.echo(context_window=128_000)
        assert complete(fm, ModelRequest(prompt="x" * (512_000 - 4)))  # 127,999 tokens
        with pytest.raises(ContextWindowExceeded):
            complete(fm, ModelRequest(prompt="x" * 512_001))  # 128,001 tokens

    def test_boundary_fuzz(self):
        rng = random.Random(41)
        for _ in range(100):
            window = rng.randint(1, 64)
            fm = ScriptedBackend.echo(context_window=window)
            tokens = rng.randint(max(1, window - 1), window + 1)
            prompt = "y" * (tokens * 4)
            if tokens > window:
                with pytest.raises(ContextWindowExceeded):
                    complete(fm, ModelRequest(prompt=prompt))
            else:
                assert complete(fm, ModelRequest(prompt=prompt)).text == prompt


class TestProvenanceGate:
    def test_absent_record_refused_and_backend_never_invoked(self):
        fm = ScriptedBackend.sequential("never seen", id="untrusted",
                                        aibom_component_id="missing-component")
        with pytest.raises(ProvenanceDenied):
            complete(fm, ModelRequest(prompt="p"))
        assert fm.calls == 0

    def test_registered_backend_allowed(self):
        registry = AibomRegistry()
        fm = ScriptedBackend.sequential("ok", id="trusted", aibom_component_id="comp-1")
        registry.add(AibomRecord("comp-1", "acme", "1.0", fm.checksum))
        fm.aibom = registry
        assert complete(fm, ModelRequest(prompt="p")).text == "ok"

    def test_expired_credential_refused(self):
        registry = AibomRegistry()
        fm = ScriptedBackend.sequential("no", id="expired", aibom_component_id="comp-2")
        registry.add(AibomRecord("comp-2", "acme", "1.0", fm.checksum,
                                 credential_status=CredentialStatus.EXPIRED))
        fm.aibom = registry
        with pytest.raises(ProvenanceDenied):
            complete(fm, ModelRequest(prompt="p"))
        assert fm.calls == 0


def gateway_with(handler, **kwargs):
    return GatewayBackend("https://fm.example", "gpt-test",
                          credentials="key-123",
                          transport=httpx.MockTransport(handler), **kwargs)


class TestGateway:
    def test_request_body_fields(self):
        seen = {}

        def handler(request):
            seen["url"] = str(request.url)
            seen["body"] = json.loads(request.content)
            seen["auth"] = request.headers.get("authorization")
            return httpx.Response(200, json={
                "choices": [{"message": {"content": "pong"}}],
                "usage": {"prompt_tokens": 3, "completion_tokens": 1},
            })

        fm = gateway_with(handler)
        response = complete(fm, ModelRequest(prompt="ping body", temperature=0.5,
                                             max_tokens=64, seed=7))
        assert seen["url"] == "https://fm.example/v1/chat/completions"
        assert seen["body"]["model"] == "gpt-test"
        assert seen["body"]["messages"] == [{"role": "user", "content": "ping body"}]
        assert seen["body"]["temperature"] == 0.5
        assert seen["body"]["max_tokens"] == 64
        assert seen["body"]["seed"] == 7
        assert seen["auth"] == "Bearer key-123"
        assert response == ModelResponse("pong", 3, 1, "gpt-test")

    def test_seed_omitted_when_unset(self):
        bodies = []

        def handler(request):
            bodies.append(json.loads(request.content))
            return httpx.Response(200, json={"choices": [{"message": {"content": "x"}}]})

        complete(gateway_with(handler), ModelRequest(prompt="p"))
        assert "seed" not in bodies[0]

    def test_zero_choices_is_malformed(self):
        fm = gateway_with(lambda request: httpx.Response(200, json={"choices": []}))
        with pytest.raises(MalformedReply):
            complete(fm, ModelRequest(prompt="p"))

    def test_negative_usage_is_malformed(self):
        fm = gateway_with(lambda request: httpx.Response(200, json={
            "choices": [{"message": {"content": "x"}}],
            "usage": {"prompt_tokens": -1, "completion_tokens": 2}}))
        with pytest.raises(MalformedReply):
            complete(fm, ModelRequest(prompt="p"))

    def test_429_is_rate_limited(self):
        fm = gateway_with(lambda request: httpx.Response(429, text="slow down"))
        with pytest.raises(RateLimited):
            complete(fm, ModelRequest(prompt="p"))

    def test_500_is_gateway_error(self):
        fm = gateway_with(lambda request: httpx.Response(500, text="boom"))
        with pytest.raises(GatewayError) as err:
            complete(fm, ModelRequest(prompt="p"))
        assert err.value.status == 500

    def test_encode_decode_echo_round_trip(self):
        # An echo server sends the user message straight back; decoding must
        # recover the prompt byte-exactly.
        def handler(request):
            body = json.loads(request.content)
            return httpx.Response(200, json={
                "choices": [{"message": {"content": body["messages"][0]["content"]}}]})

        fm = gateway_with(handler)
        prompt = "exact é bytes\tand spaces"
        assert complete(fm, ModelRequest(prompt=prompt)).text == prompt


class TestNVersion:
    @staticmethod
    def backends(*answers):
        return [ScriptedBackend.sequential(a, id=f"b{i}") for i, a in enumerate(answers)]

    def test_majority(self):
        out = n_version(self.backends("A", "A", "B"), ModelRequest(prompt="q"))
        assert out == Agreed(text="a")

    def test_three_way_disagreement(self):
        out = n_version(self.backends("A", "B", "C"), ModelRequest(prompt="q"))
        assert isinstance(out, Disagreement)
        assert len(out.answers) == 3

    def test_even_split_is_disagreement(self):
        out = n_version(self.backends("A", "A", "B", "B"), ModelRequest(prompt="q"))
        assert isinstance(out, Disagreement)

    def test_failed_backend_counts_as_no_vote(self):
        broken = ScriptedBackend([], id="broken")  # exhausts immediately
        healthy = self.backends("A", "A")
        out = n_version(healthy + [broken], ModelRequest(prompt="q"))
        assert isinstance(out, Agreed)
        assert out.failures[0][0] == "broken"

    def test_requires_two_backends(self):
        with pytest.raises(ValueError):
            n_version(self.backends("A"), ModelRequest(prompt="q"))

    def test_matches_strict_majority_oracle(self):
        rng = random.Random(53)
        pool = ["A", "b", " B", "c"]
        for _ in range(300):
            answers = [rng.choice(pool) for _ in range(rng.randint(2, 7))]
            out = n_version(self.backends(*answers), ModelRequest(prompt="q"))
            tally = Counter(a.strip().casefold() for a in answers)
            winner = next((a for a, c in tally.items() if c * 2 > len(answers)), None)
            if winner is None:
                assert isinstance(out, Disagreement)
            else:
                assert out == Agreed(text=winner)


def test_descriptor_checksum_is_stable():
    d1 = BackendDescriptor(id="x", kind="scripted", context_window=10)
    d2 = BackendDescriptor(id="x", kind="scripted", context_window=10)
    assert descriptor_checksum(d1) == descriptor_checksum(d2)
    assert descriptor_checksum(d1) != descriptor_checksum(
        BackendDescriptor(id="y", kind="scripted", context_window=10))


def test_request_validation():
    with pytest.raises(ValueError):
        ModelRequest(prompt="p", temperature=-1)
    with pytest.raises(ValueError):
        ModelRequest(prompt="p", max_tokens=0)
    with pytest.raises(ValueError):
        BackendDescriptor(id="b", kind="scripted", context_window=0)
