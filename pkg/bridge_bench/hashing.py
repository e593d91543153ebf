"""Digests used as leakage evidence: FNV-1a 64 per window, BLAKE2b-64 per matrix."""

from __future__ import annotations

import hashlib

import numpy as np

from bridge_bench.helpers import chunk_bounds, ordered_map, worker_count

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    """Reference byte-at-a-time FNV-1a 64."""
    h = FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & _MASK64
    return h


def _fnv1a64_block(columns: np.ndarray) -> np.ndarray:
    # columns: (L, n) uint8, one window per column; uint64 arithmetic wraps mod 2**64.
    h = np.full(columns.shape[1], FNV_OFFSET, dtype=np.uint64)
    prime = np.uint64(FNV_PRIME)
    for row in columns:
        h ^= row
        h *= prime
    return h


def fnv1a64_rows(rows: np.ndarray) -> np.ndarray:
    """FNV-1a 64 of every row of a 2-D uint8 array, vectorised across rows.

    Rows are split into contiguous chunks hashed on ``BRIDGE_THREADS``
    workers; the result order always matches the input order.
    """
    if rows.ndim != 2 or rows.dtype != np.uint8:
        raise ValueError("expected a 2-D uint8 array")
    n = rows.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.uint64)
    bounds = chunk_bounds(n, worker_count())

    def _hash(span: tuple[int, int]) -> np.ndarray:
        start, stop = span
        return _fnv1a64_block(np.ascontiguousarray(rows[start:stop].T))

    return np.concatenate(ordered_map(_hash, bounds))


def float32_le_bytes(array: np.ndarray) -> np.ndarray:
    """View a float array as its little-endian single-precision bytes, one row per leading index."""
    arr = np.ascontiguousarray(array, dtype="<f4")
    return arr.reshape(arr.shape[0], -1).view(np.uint8)


def matrix_digest(array: np.ndarray) -> str:
    """64-bit BLAKE2b digest (16 hex chars) of an array's little-endian float32 bytes."""
    arr = np.ascontiguousarray(array, dtype="<f4")
    return hashlib.blake2b(arr.tobytes(), digest_size=8).hexdigest()


def file_digest(path) -> str:
    """SHA-256 of a file, streamed."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()
