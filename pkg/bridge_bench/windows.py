"""Sliding-window sequence tensors with majority-vote labels and context vectors."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from bridge_bench.ingest import CanonicalMatrix
from bridge_bench.rng import select_subset
from bridge_bench.vocab import DATASET_IDS, SLOT_COUNT

logger = logging.getLogger(__name__)

DEVICE_CATEGORIES = range(6)


@dataclass(frozen=True)
class WindowConfig:
    window: int = 32
    stride: int = 4
    train_cap: int = 800_000
    test_cap: int = 200_000
    device_category_map: dict[int, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.window < 1 or self.stride < 1:
            raise ValueError("window and stride must be ≥ 1")
        if self.train_cap < 0 or self.test_cap < 0:
            raise ValueError("caps must be ≥ 0")
        for ds, dev in self.device_category_map.items():
            if ds not in DATASET_IDS or dev not in DEVICE_CATEGORIES:
                raise ValueError(f"device map entry {ds}->{dev} out of range (c_ds 0–4, c_dev 0–5)")

    @classmethod
    def from_mapping(cls, data: dict[str, Any], device_map: dict[int, int]) -> WindowConfig:
        known = {k: int(data[k]) for k in ("window", "stride", "train_cap", "test_cap") if k in data}
        return cls(**known, device_category_map=dict(device_map))

    def echo(self) -> dict[str, Any]:
        return {
            "window": self.window,
            "stride": self.stride,
            "train_cap": self.train_cap,
            "test_cap": self.test_cap,
            "device_category_map": {str(k): v for k, v in sorted(self.device_category_map.items())},
        }


@dataclass(frozen=True)
class WindowSet:
    """Windows of shape (W, F) with label, (c_ds, c_dev) context and (dataset_id, start_row) origin."""

    features: np.ndarray
    labels: np.ndarray
    contexts: np.ndarray
    origins: np.ndarray

    def __post_init__(self) -> None:
        n = self.features.shape[0]
        if self.features.ndim != 3:
            raise ValueError(f"features must be N×W×F, got shape {self.features.shape}")
        if self.labels.shape != (n,) or self.contexts.shape != (n, 2) or self.origins.shape != (n, 2):
            raise ValueError("labels, contexts and origins must align with features")
        if n and (
            self.contexts[:, 0].min() < 0
            or self.contexts[:, 0].max() > 4
            or self.contexts[:, 1].min() < 0
            or self.contexts[:, 1].max() > 5
        ):
            raise ValueError("context values out of range (c_ds 0–4, c_dev 0–5)")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def window(self) -> int:
        return self.features.shape[1]

    @property
    def dataset_ids(self) -> np.ndarray:
        return self.contexts[:, 0]

    @classmethod
    def empty(cls, window: int = 32, features: int = SLOT_COUNT) -> WindowSet:
        return cls(
            features=np.zeros((0, window, features), dtype=np.float32),
            labels=np.zeros(0, dtype=np.int8),
            contexts=np.zeros((0, 2), dtype=np.int64),
            origins=np.zeros((0, 2), dtype=np.int64),
        )

    def take(self, indices: np.ndarray) -> WindowSet:
        idx = np.asarray(indices, dtype=np.int64)
        return WindowSet(
            features=self.features[idx],
            labels=self.labels[idx],
            contexts=self.contexts[idx],
            origins=self.origins[idx],
        )

    def with_features(self, features: np.ndarray) -> WindowSet:
        return WindowSet(features=features, labels=self.labels, contexts=self.contexts, origins=self.origins)

    def origins_sorted(self) -> bool:
        """True when start rows strictly increase within every dataset."""
        if len(self) < 2:
            return True
        order = np.lexsort((np.arange(len(self)), self.origins[:, 0]))
        ds = self.origins[order, 0]
        starts = self.origins[order, 1]
        same = ds[1:] == ds[:-1]
        return bool(np.all(starts[1:][same] > starts[:-1][same]))

    def label_counts(self) -> dict[str, int]:
        attack = int(np.count_nonzero(self.labels == 1))
        return {"benign": len(self) - attack, "attack": attack, "total": len(self)}


def window_count(rows: int, window: int, stride: int) -> int:
    return 0 if rows < window else (rows - window) // stride + 1


def build_windows(matrix: CanonicalMatrix, cfg: WindowConfig) -> WindowSet:
    """Slide a length-``cfg.window`` window with ``cfg.stride`` over time-sorted rows.

    A window is labelled attack when at least half of its rows are attacks.
    """
    n = len(matrix)
    if n < cfg.window:
        logger.warning(
            "dataset %d has %d row(s) < window %d; no windows built", matrix.dataset_id, n, cfg.window
        )
        return WindowSet.empty(cfg.window, matrix.values.shape[1])
    if matrix.dataset_id not in cfg.device_category_map:
        raise ValueError(f"no device category configured for dataset {matrix.dataset_id}")

    starts = np.arange(0, n - cfg.window + 1, cfg.stride, dtype=np.int64)
    view = sliding_window_view(matrix.values, cfg.window, axis=0)[starts]
    features = np.ascontiguousarray(view.transpose(0, 2, 1), dtype=np.float32)

    csum = np.concatenate([[0], np.cumsum(matrix.labels.astype(np.int64))])
    attacks = csum[starts + cfg.window] - csum[starts]
    labels = (2 * attacks >= cfg.window).astype(np.int8)

    contexts = np.empty((len(starts), 2), dtype=np.int64)
    contexts[:, 0] = matrix.dataset_id
    contexts[:, 1] = cfg.device_category_map[matrix.dataset_id]
    origins = np.stack([np.full(len(starts), matrix.dataset_id, dtype=np.int64), starts], axis=1)
    logger.info("dataset %d: %d window(s) from %d row(s)", matrix.dataset_id, len(starts), n)
    return WindowSet(features=features, labels=labels, contexts=contexts, origins=origins)


def cap_windows(ws: WindowSet, cap: int, seed: int) -> WindowSet:
    """Seeded uniform subsample to at most *cap* windows, original order kept."""
    if cap < 0:
        raise ValueError(f"cap must be ≥ 0, got {cap}")
    if len(ws) <= cap:
        return ws
    logger.info("Capping %d window(s) to %d", len(ws), cap)
    return ws.take(select_subset(len(ws), cap, seed))


def concat_windows(sets: list[WindowSet]) -> WindowSet:
    """Concatenate window sets, ordered by (dataset_id, start_row_index)."""
    non_empty = [s for s in sets if len(s)]
    if not non_empty:
        return sets[0] if sets else WindowSet.empty()
    merged = WindowSet(
        features=np.concatenate([s.features for s in non_empty]),
        labels=np.concatenate([s.labels for s in non_empty]),
        contexts=np.concatenate([s.contexts for s in non_empty]),
        origins=np.concatenate([s.origins for s in non_empty]),
    )
    order = np.lexsort((merged.origins[:, 1], merged.origins[:, 0]))
    return merged.take(order)
