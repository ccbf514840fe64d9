"""Provider-neutral request/response types and the retrying ``complete`` call."""

from __future__ import annotations

import enum
import logging
import threading
import time
from dataclasses import dataclass
from typing import Callable, Optional, Protocol, runtime_checkable

from kgf.errors import KgfError

logger = logging.getLogger(__name__)


class AgentRole(str, enum.Enum):
    EXTRACTOR = "Extractor"
    REFINER = "Refiner"
    JUDGE = "Judge"
    ADVERSARY = "Adversary"


# temperature 0 everywhere except self-consistency resampling
DEFAULT_TEMPERATURE = 0.0
VARIANT_TEMPERATURE = 0.7


@dataclass(frozen=True)
class AgentRequest:
    role: AgentRole
    prompt: str
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = 2048
    want_token_probs: bool = False

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class AgentResponse:
    text: str
    provider_id: str
    token_probs: Optional[tuple[tuple[str, float], ...]] = None

    def __post_init__(self):
        if self.token_probs is not None:
            for tok, p in self.token_probs:
                if not 0.0 < p <= 1.0:
                    raise ValueError(f"token probability out of (0, 1]: {tok!r} -> {p}")


class AgentError(KgfError):
    pass


class TransportError(AgentError):
    """Network-level failure; safe to retry."""


class RequestError(AgentError):
    """The provider rejected the request as malformed; never retried."""


class ContentError(AgentError):
    """The provider refused to answer. Carries the provider's message."""

    def __init__(self, message: str, provider_message: str = ""):
        super().__init__(message)
        self.provider_message = provider_message


class ConfigurationError(AgentError):
    pass


@runtime_checkable
class CompletionProvider(Protocol):
    provider_id: str

    def complete(self, request: AgentRequest) -> AgentResponse: ...


def complete(request: AgentRequest,
             provider: CompletionProvider,
             *,
             retries: int = 3,
             backoff: float = 0.5,
             sleep: Callable[[float], None] = time.sleep) -> AgentResponse:
    """Send ``request`` to ``provider``, retrying transport failures.

    Waits ``backoff * 2**attempt`` seconds between attempts. Malformed-request
    and refusal errors propagate immediately.
    """
    if provider is None:
        raise ConfigurationError("no provider configured")
    attempt = 0
    while True:
        try:
            return provider.complete(request)
        except TransportError as exc:
            if attempt >= retries:
                raise TransportError(
                    f"{provider.provider_id}: gave up after {attempt + 1} attempts: {exc}") from exc
            delay = backoff * (2 ** attempt)
            logger.info("transport error from %s (%s); retry %d in %.2fs",
                        provider.provider_id, exc, attempt + 1, delay)
            sleep(delay)
            attempt += 1


class BoundedProvider:
    """Wraps a provider so at most ``max_inflight`` calls run concurrently."""

    def __init__(self, inner: CompletionProvider, max_inflight: int = 4):
        if max_inflight < 1:
            raise ValueError("max_inflight must be >= 1")
        self.inner = inner
        self.provider_id = inner.provider_id
        self._slots = threading.BoundedSemaphore(max_inflight)

    def complete(self, request: AgentRequest) -> AgentResponse:
        with self._slots:
            return self.inner.complete(request)
