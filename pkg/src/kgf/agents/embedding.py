"""Embedding providers and cosine similarity.

The offline fallback hashes character n-grams (mostly trigrams, with lighter
unigram and bigram features) into a fixed-length signed vector and
L2-normalizes it. It is deterministic across processes and platforms.
"""

from __future__ import annotations

import hashlib
from typing import Protocol, runtime_checkable

import numpy as np

from kgf.errors import KgfError


class EmbeddingError(KgfError):
    pass


@runtime_checkable
class EmbeddingProvider(Protocol):
    provider_id: str
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


class HashingEmbedder:
    provider_id = "hashing-trigram"

    # n-gram size -> feature weight
    ORDERS = {1: 0.25, 2: 0.5, 3: 1.0}

    def __init__(self, dim: int = 512):
        if dim < 8:
            raise ValueError("dim too small")
        self.dim = dim
        self._cache: dict[str, np.ndarray] = {}

    def _slot(self, gram: str) -> tuple[int, float]:
        h = int.from_bytes(hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest(), "big")
        return h % self.dim, (1.0 if (h >> 63) & 1 else -1.0)

    def embed(self, text: str) -> np.ndarray:
        norm = " ".join(text.casefold().split())
        if not norm:
            raise EmbeddingError("cannot embed empty text")
        cached = self._cache.get(norm)
        if cached is not None:
            return cached.copy()
        vec = np.zeros(self.dim, dtype=np.float64)
        padded = f" {norm} "
        for n, weight in self.ORDERS.items():
            for i in range(len(padded) - n + 1):
                gram = padded[i:i + n]
                if gram.isspace():
                    continue
                idx, sign = self._slot(f"{n}:{gram}")
                vec[idx] += sign * weight
        length = float(np.linalg.norm(vec))
        if length == 0.0:
            raise EmbeddingError(f"no features for {text!r}")
        vec /= length
        self._cache[norm] = vec
        return vec.copy()


def embed(text: str, provider: EmbeddingProvider) -> np.ndarray:
    if not text or not text.strip():
        raise EmbeddingError("cannot embed empty text")
    return provider.embed(text)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))
