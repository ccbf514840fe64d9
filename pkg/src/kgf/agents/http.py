"""Generic HTTP completion adapter.

Wire contract (JSON)::

    request : {"model", "prompt", "temperature", "max_tokens", "logprobs"}
    response: {"text", "logprobs": [{"token": str, "logprob": float}, ...] | null}

Vendor-specific adapters translate to this shape behind a gateway. The API key
is read from ``KGF_<PROVIDER>_KEY``.
"""

from __future__ import annotations

import math
import os
from typing import Optional

import httpx

from kgf.agents.base import (
    AgentRequest,
    AgentResponse,
    ConfigurationError,
    ContentError,
    RequestError,
    TransportError,
)


def api_key_for(provider_id: str) -> Optional[str]:
    return os.environ.get(f"KGF_{provider_id.upper().replace('-', '_')}_KEY")


class HttpProvider:
    def __init__(self, provider_id: str, endpoint: str, model: str, *,
                 timeout: float = 60.0, client: Optional[httpx.Client] = None):
        if not endpoint:
            raise ConfigurationError(f"provider {provider_id!r} has no endpoint")
        self.provider_id = provider_id
        self.endpoint = endpoint
        self.model = model
        self._client = client or httpx.Client(timeout=timeout)

    def complete(self, request: AgentRequest) -> AgentResponse:
        headers = {}
        key = api_key_for(self.provider_id)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": self.model,
            "prompt": request.prompt,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "logprobs": request.want_token_probs,
        }
        try:
            resp = self._client.post(self.endpoint, json=payload, headers=headers)
        except httpx.TransportError as exc:
            raise TransportError(str(exc)) from exc

        if resp.status_code in (408, 429) or resp.status_code >= 500:
            raise TransportError(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise RequestError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            body = resp.json()
        except ValueError as exc:
            raise TransportError(f"non-JSON body: {exc}") from exc
        if body.get("refusal"):
            raise ContentError(f"{self.provider_id} refused the request", str(body["refusal"]))
        if "text" not in body:
            raise TransportError("response missing 'text'")

        probs = None
        if body.get("logprobs"):
            probs = tuple((str(item["token"]), _prob(item["logprob"]))
                          for item in body["logprobs"])
        return AgentResponse(text=body["text"], provider_id=self.provider_id, token_probs=probs)


def _prob(logprob) -> float:
    # exp() underflows to 0.0 for very negative logprobs; keep it in (0, 1]
    return min(1.0, max(math.exp(float(logprob)), 1e-300))
