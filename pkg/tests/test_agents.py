from __future__ import annotations

import json
import math
import threading
import time

import httpx
import numpy as np
import pytest

from kgf.agents.base import (
    AgentRequest,
    AgentResponse,
    AgentRole,
    BoundedProvider,
    ConfigurationError,
    ContentError,
    RequestError,
    TransportError,
    complete,
)
from kgf.agents.embedding import EmbeddingError, HashingEmbedder, cosine, embed
from kgf.agents.http import HttpProvider
from kgf.agents.mock import MissingFixture, RecordingProvider, ScriptedMockProvider, request_hash
from kgf.agents.offline import HeuristicAgent, offline_agents
from kgf.agents.prompts import TEMPLATES, PromptError, placeholders, render_prompt


class Flaky:
    provider_id = "flaky"

    def __init__(self, failures: int, exc=TransportError):
        self.failures = failures
        self.exc = exc
        self.calls = 0

    def complete(self, request):
        self.calls += 1
        if self.calls <= self.failures:
            raise self.exc("boom")
        return AgentResponse("ok", self.provider_id)


def _req(prompt="TASK: judge\nRELATION: a | b | c\nCONTEXT:\nx\nEND CONTEXT"):
    return AgentRequest(AgentRole.JUDGE, prompt)


# -- prompts ------------------------------------------------------------------

def test_every_template_starts_with_task_marker():
    for name, template in TEMPLATES.items():
        assert template.startswith(f"TASK: {name}\n")


def test_render_prompt_missing_placeholder():
    with pytest.raises(PromptError, match="missing placeholder doc"):
        render_prompt("extract_eav", {"fhir_types": "Patient"})


def test_render_prompt_unknown_template():
    with pytest.raises(PromptError):
        render_prompt("nope", {})


def test_placeholders_listed():
    assert placeholders("{a} and {b}") == ["a", "b"]


# -- request validation and retries ---------------------------------------------

def test_request_validation():
    with pytest.raises(ValueError):
        AgentRequest(AgentRole.JUDGE, "")
    with pytest.raises(ValueError):
        AgentRequest(AgentRole.JUDGE, "x", temperature=-1)


def test_response_probability_range():
    with pytest.raises(ValueError):
        AgentResponse("x", "p", token_probs=(("x", 0.0),))


def test_complete_retries_transport_errors_with_backoff():
    waits = []
    p = Flaky(2)
    assert complete(_req(), p, retries=3, backoff=0.5, sleep=waits.append).text == "ok"
    assert waits == [0.5, 1.0]


def test_complete_gives_up():
    p = Flaky(10)
    with pytest.raises(TransportError, match="gave up after 3 attempts"):
        complete(_req(), p, retries=2, sleep=lambda s: None)


@pytest.mark.parametrize("exc", [RequestError, ContentError])
def test_complete_does_not_retry_non_transport(exc):
    p = Flaky(1, exc)
    with pytest.raises(exc):
        complete(_req(), p, sleep=lambda s: None)
    assert p.calls == 1


def test_complete_without_provider():
    with pytest.raises(ConfigurationError):
        complete(_req(), None)


def test_bounded_provider_limits_concurrency():
    active = []
    peak = []
    lock = threading.Lock()

    class Slow:
        provider_id = "slow"

        def complete(self, request):
            with lock:
                active.append(1)
                peak.append(len(active))
            time.sleep(0.01)
            with lock:
                active.pop()
            return AgentResponse("ok", "slow")

    bounded = BoundedProvider(Slow(), max_inflight=2)
    threads = [threading.Thread(target=bounded.complete, args=(_req(),)) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert max(peak) <= 2
    with pytest.raises(ValueError):
        BoundedProvider(Slow(), 0)


# -- HTTP provider ----------------------------------------------------------------

def _http(handler):
    client = httpx.Client(transport=httpx.MockTransport(handler))
    return HttpProvider("judge-x", "http://llm.test/v1", "m", client=client)


def test_http_success_with_logprobs(monkeypatch):
    monkeypatch.setenv("KGF_JUDGE_X_KEY", "secret")
    seen = {}

    def handler(request):
        seen["auth"] = request.headers.get("authorization")
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json={"text": "0.9", "logprobs": [{"token": "0.9", "logprob": math.log(0.5)}]})

    resp = _http(handler).complete(AgentRequest(AgentRole.JUDGE, "p", want_token_probs=True))
    assert resp.text == "0.9"
    assert resp.token_probs == (("0.9", pytest.approx(0.5)),)
    assert seen["auth"] == "Bearer secret"
    assert seen["body"]["logprobs"] is True and seen["body"]["model"] == "m"


@pytest.mark.parametrize("status,exc", [(429, TransportError), (503, TransportError), (400, RequestError)])
def test_http_status_mapping(status, exc):
    with pytest.raises(exc):
        _http(lambda r: httpx.Response(status, text="err")).complete(_req())


def test_http_refusal_and_missing_text():
    with pytest.raises(ContentError) as info:
        _http(lambda r: httpx.Response(200, json={"refusal": "no"})).complete(_req())
    assert info.value.provider_message == "no"
    with pytest.raises(TransportError):
        _http(lambda r: httpx.Response(200, json={"other": 1})).complete(_req())


def test_http_connection_error():
    def handler(request):
        raise httpx.ConnectError("down")

    with pytest.raises(TransportError):
        _http(handler).complete(_req())


def test_http_requires_endpoint():
    with pytest.raises(ConfigurationError):
        HttpProvider("x", "", "m")


# -- mock / recording ---------------------------------------------------------------

def test_recording_then_replay(tmp_path):
    inner = HeuristicAgent("offline-judge")
    rec = RecordingProvider(inner, tmp_path)
    req = _req()
    first = rec.complete(req)
    replay = ScriptedMockProvider(tmp_path, provider_id="replay")
    assert replay.complete(req).text == first.text
    assert (tmp_path / f"{request_hash(req)}.txt").is_file()


def test_mock_missing_fixture_and_fallback(tmp_path):
    with pytest.raises(MissingFixture):
        ScriptedMockProvider(tmp_path).complete(_req())
    fb = ScriptedMockProvider(tmp_path, fallback=HeuristicAgent("h"))
    assert fb.complete(_req()).provider_id == "h"


def test_mock_reads_probs(tmp_path):
    req = _req()
    key = request_hash(req)
    (tmp_path / f"{key}.txt").write_text("0.8", encoding="utf-8")
    (tmp_path / f"{key}.probs.json").write_text(json.dumps([["0.8", 0.7]]), encoding="utf-8")
    assert ScriptedMockProvider(tmp_path).complete(req).token_probs == (("0.8", 0.7),)


def test_request_hash_depends_on_role_and_prompt():
    a = AgentRequest(AgentRole.JUDGE, "x")
    assert request_hash(a) == request_hash(AgentRequest(AgentRole.JUDGE, "x", temperature=0.5))
    assert request_hash(a) != request_hash(AgentRequest(AgentRole.REFINER, "x"))
    assert request_hash(a) != request_hash(AgentRequest(AgentRole.JUDGE, "y"))


# -- embeddings ---------------------------------------------------------------------

def test_hashing_embedder_unit_norm_and_deterministic():
    e = HashingEmbedder()
    v = e.embed("Weight loss")
    assert np.isclose(np.linalg.norm(v), 1.0)
    assert np.array_equal(v, HashingEmbedder().embed("weight   LOSS"))
    assert cosine(v, e.embed("weight loss")) == pytest.approx(1.0)
    assert cosine(v, e.embed("weight decrease")) > cosine(v, e.embed("trastuzumab"))


def test_embedding_errors():
    with pytest.raises(EmbeddingError):
        HashingEmbedder().embed("   ")
    with pytest.raises(EmbeddingError):
        embed("", HashingEmbedder())
    assert cosine(np.zeros(3), np.ones(3)) == 0.0


# -- offline agent ------------------------------------------------------------------

def test_offline_agent_rejects_unknown_task():
    with pytest.raises(RequestError):
        HeuristicAgent().complete(AgentRequest(AgentRole.JUDGE, "hello"))


def test_offline_agents_distinct_ids_and_deterministic(pdac_report):
    agents = offline_agents()
    assert len({a.provider_id for a in agents.values()}) == len(AgentRole)
    prompt = render_prompt("extract_eav", {"doc": pdac_report.narrative, "fhir_types": "Patient"})
    req = AgentRequest(AgentRole.EXTRACTOR, prompt)
    ext = agents[AgentRole.EXTRACTOR]
    assert ext.complete(req).text == ext.complete(req).text
    text = ext.complete(req).text
    assert "value=1240 U/mL" in text
    assert "attribute=fever\tvalue=absent" in text
    assert "value=FOLFIRINOX" in text
