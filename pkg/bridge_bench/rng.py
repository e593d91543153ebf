"""SplitMix64 and Fisher–Yates, frozen so subsampling is bit-reproducible anywhere.

Every seeded selection in the pipeline (class balancing, window caps,
stratified splits) goes through :func:`select_subset`, which returns the first
*k* entries of a SplitMix64-driven Fisher–Yates shuffle, sorted back into the
original order.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class SplitMix64:
    """64-bit SplitMix generator (Steele, Lea & Flood constants)."""

    def __init__(self, seed: int) -> None:
        self.state = seed & _MASK64

    def next(self) -> int:
        self.state = (self.state + _GOLDEN) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, bound: int) -> int:
        # Modulo reduction; the bias is < bound / 2**64 and accepted.
        return self.next() % bound


def fisher_yates(n: int, rng: SplitMix64) -> np.ndarray:
    """Return a permutation of ``range(n)``; j = next() mod (i+1) for i = n−1 … 1."""
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = rng.below(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return np.asarray(perm, dtype=np.int64)


def select_subset(n: int, k: int, seed: int | SplitMix64) -> np.ndarray:
    """Pick *k* of *n* indices uniformly; result is sorted ascending."""
    if k < 0:
        raise ValueError(f"subset size must be ≥ 0, got {k}")
    if k >= n:
        return np.arange(n, dtype=np.int64)
    rng = seed if isinstance(seed, SplitMix64) else SplitMix64(seed)
    return np.sort(fisher_yates(n, rng)[:k])
