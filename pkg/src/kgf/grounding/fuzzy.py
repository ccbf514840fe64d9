"""Indel distance and the normalized similarity ratio built on it."""

from __future__ import annotations


def lcs_length(a: str, b: str) -> int:
    """Length of the longest common subsequence (bit-parallel, Hyyrö 2004)."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return 0
    masks: dict[str, int] = {}
    for i, ch in enumerate(b):
        masks[ch] = masks.get(ch, 0) | (1 << i)
    full = (1 << len(b)) - 1
    s = full
    for ch in a:
        m = masks.get(ch)
        if m is None:
            continue
        u = s & m
        s = ((s + u) | (s - u)) & full
    return len(b) - bin(s).count("1")


def indel_distance(a: str, b: str) -> int:
    """Minimum number of single-character insertions and deletions turning a into b."""
    return len(a) + len(b) - 2 * lcs_length(a, b)


def fuzzy_ratio(a: str, b: str) -> float:
    """``100 * (1 - indel(a, b) / (|a| + |b|))``; two empty strings score 100."""
    total = len(a) + len(b)
    if total == 0:
        return 100.0
    return 100.0 * (1.0 - indel_distance(a, b) / total)
