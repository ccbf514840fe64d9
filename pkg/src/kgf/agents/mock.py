"""Fixture-backed providers for offline, bit-reproducible runs.

A fixture directory holds one ``<hash>.txt`` per request with the raw
completion, plus an optional ``<hash>.probs.json`` list of ``[token, prob]``
pairs. The hash covers the role and the exact prompt, so any prompt edit
needs fresh fixtures.
"""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path
from typing import Optional

from kgf.agents.base import (
    AgentRequest,
    AgentResponse,
    CompletionProvider,
    ConfigurationError,
)

logger = logging.getLogger(__name__)


def request_hash(request: AgentRequest) -> str:
    digest = hashlib.sha256()
    digest.update(request.role.value.encode("utf-8"))
    digest.update(b"\x00")
    digest.update(request.prompt.encode("utf-8"))
    return digest.hexdigest()[:32]


class MissingFixture(ConfigurationError):
    pass


class ScriptedMockProvider:
    """Replays recorded responses; optionally defers to ``fallback`` on a miss."""

    def __init__(self, fixture_dir: str | Path, provider_id: str = "mock",
                 fallback: Optional[CompletionProvider] = None):
        self.fixture_dir = Path(fixture_dir)
        self.provider_id = provider_id
        self.fallback = fallback

    def complete(self, request: AgentRequest) -> AgentResponse:
        key = request_hash(request)
        path = self.fixture_dir / f"{key}.txt"
        if not path.is_file():
            if self.fallback is not None:
                return self.fallback.complete(request)
            raise MissingFixture(f"no fixture {key} for {request.role.value} request in {self.fixture_dir}")
        text = path.read_text(encoding="utf-8")
        probs = None
        probs_path = self.fixture_dir / f"{key}.probs.json"
        if probs_path.is_file():
            probs = tuple((str(t), float(p)) for t, p in json.loads(probs_path.read_text()))
        return AgentResponse(text=text, provider_id=self.provider_id, token_probs=probs)


class RecordingProvider:
    """Passes requests through and writes each response as a fixture."""

    def __init__(self, inner: CompletionProvider, fixture_dir: str | Path):
        self.inner = inner
        self.provider_id = inner.provider_id
        self.fixture_dir = Path(fixture_dir)
        self.fixture_dir.mkdir(parents=True, exist_ok=True)

    def complete(self, request: AgentRequest) -> AgentResponse:
        response = self.inner.complete(request)
        key = request_hash(request)
        (self.fixture_dir / f"{key}.txt").write_text(response.text, encoding="utf-8")
        if response.token_probs is not None:
            (self.fixture_dir / f"{key}.probs.json").write_text(
                json.dumps([list(tp) for tp in response.token_probs]), encoding="utf-8")
        return response
