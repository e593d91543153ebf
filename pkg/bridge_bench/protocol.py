"""Train/test split modes, LODO folds and the three leakage checks."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any

import numpy as np

from bridge_bench.errors import DataError, DegenerateInputError
from bridge_bench.hashing import float32_le_bytes, fnv1a64_rows, matrix_digest
from bridge_bench.helpers import DEFAULT_SEED
from bridge_bench.rng import SplitMix64, fisher_yates
from bridge_bench.transform import ScalerParams
from bridge_bench.vocab import DATASET_IDS
from bridge_bench.windows import WindowSet

logger = logging.getLogger(__name__)

SPLIT_MODES = ("stratified_random", "temporal", "lodo")
RATIO_TOLERANCE = 0.02


@dataclass(frozen=True)
class SplitSpec:
    mode: str = "stratified_random"
    train_fraction: float = 0.8
    seed: int = DEFAULT_SEED
    held_out: int | None = None

    def __post_init__(self) -> None:
        if self.mode not in SPLIT_MODES:
            raise ValueError(f"unknown split mode {self.mode!r}; expected one of {', '.join(SPLIT_MODES)}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        if self.mode == "lodo" and self.held_out not in DATASET_IDS:
            raise ValueError("lodo split needs held_out in 0–4")

    def echo(self) -> dict[str, Any]:
        out: dict[str, Any] = {"mode": self.mode, "train_fraction": self.train_fraction, "seed": self.seed}
        if self.mode == "lodo":
            out["held_out"] = self.held_out
        return out


@dataclass(frozen=True)
class LeakageReport:
    scaler_order_ok: bool
    overlap_count: int
    train_benign_fraction: float
    test_benign_fraction: float
    ratio_ok: bool

    @property
    def passed(self) -> bool:
        return self.scaler_order_ok and self.overlap_count == 0 and self.ratio_ok

    def failures(self, *, check_ratio: bool = True) -> list[str]:
        """Failed checks by name. ``check_ratio=False`` leaves the benign-ratio check out."""
        checks = [
            ("scaler fitted on train only", self.scaler_order_ok),
            (f"{self.overlap_count} identical window(s) across partitions", self.overlap_count == 0),
        ]
        if check_ratio:
            checks.append(("benign ratio mismatch", self.ratio_ok))
        return [name for name, ok in checks if not ok]

    def to_dict(self) -> dict[str, Any]:
        return {
            "scaler_order_ok": self.scaler_order_ok,
            "overlap_count": self.overlap_count,
            "train_benign_fraction": self.train_benign_fraction,
            "test_benign_fraction": self.test_benign_fraction,
            "ratio_ok": self.ratio_ok,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class Fold:
    held_out: int
    train: WindowSet
    test: WindowSet


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------


def _train_size(n: int, fraction: float) -> int:
    return int(np.floor(fraction * n + 0.5))


def _partition(ws: WindowSet, train_idx: np.ndarray) -> tuple[WindowSet, WindowSet]:
    mask = np.zeros(len(ws), dtype=bool)
    mask[train_idx] = True
    return ws.take(np.flatnonzero(mask)), ws.take(np.flatnonzero(~mask))


def _format_ids(ids: set[int]) -> str:
    return "{" + ", ".join(str(i) for i in sorted(ids)) + "}"


def split(ws: WindowSet, spec: SplitSpec) -> tuple[WindowSet, WindowSet]:
    """Partition *ws* into (train, test); both keep the input order."""
    if len(ws) == 0:
        raise DataError("cannot split an empty window set")

    if spec.mode == "stratified_random":
        rng = SplitMix64(spec.seed)
        chosen: list[np.ndarray] = []
        for label in (0, 1):
            idx = np.flatnonzero(ws.labels == label)
            if len(idx) == 0:
                raise DegenerateInputError(f"degenerate: label class {label} is empty under stratified split")
            perm = fisher_yates(len(idx), rng)
            chosen.append(idx[perm[: _train_size(len(idx), spec.train_fraction)]])
        return _partition(ws, np.concatenate(chosen))

    if spec.mode == "temporal":
        if not ws.origins_sorted():
            raise DataError("temporal split requires start rows increasing within each dataset")
        chosen = []
        for ds in np.unique(ws.origins[:, 0]):
            idx = np.flatnonzero(ws.origins[:, 0] == ds)
            idx = idx[np.argsort(ws.origins[idx, 1], kind="stable")]
            chosen.append(idx[: _train_size(len(idx), spec.train_fraction)])
        return _partition(ws, np.concatenate(chosen))

    held = spec.held_out
    if not np.any(ws.dataset_ids == held):
        raise DataError(f"datasets absent: {_format_ids({held})}")
    return _partition(ws, np.flatnonzero(ws.dataset_ids != held))


def lodo_folds(ws: WindowSet) -> list[Fold]:
    """One fold per dataset id, in id order; fold k holds out dataset k."""
    absent = set(DATASET_IDS) - {int(d) for d in np.unique(ws.dataset_ids)}
    if absent:
        raise DataError(f"datasets absent: {_format_ids(absent)}")
    folds = []
    for ds in DATASET_IDS:
        train, test = split(ws, SplitSpec(mode="lodo", held_out=ds))
        folds.append(Fold(held_out=ds, train=train, test=test))
    return folds


# ---------------------------------------------------------------------------
# Leakage verification
# ---------------------------------------------------------------------------


def window_hashes(ws: WindowSet) -> np.ndarray:
    """FNV-1a 64 of each window's little-endian float32 bytes, in window order."""
    if len(ws) == 0:
        return np.zeros(0, dtype=np.uint64)
    return fnv1a64_rows(float32_le_bytes(ws.features))


def overlap_count(train: WindowSet, test: WindowSet) -> int:
    """Number of test windows byte-identical to some training window."""
    if len(train) == 0 or len(test) == 0:
        return 0
    train_h = window_hashes(train)
    test_h = window_hashes(test)
    candidates = np.flatnonzero(np.isin(test_h, train_h))
    if len(candidates) == 0:
        return 0

    by_hash: dict[int, list[int]] = {}
    wanted = set(test_h[candidates].tolist())
    for i, h in enumerate(train_h.tolist()):
        if h in wanted:
            by_hash.setdefault(h, []).append(i)

    train_bytes = float32_le_bytes(train.features)
    test_bytes = float32_le_bytes(test.features)
    confirmed = 0
    for j in candidates:
        row = test_bytes[j]
        if any(np.array_equal(row, train_bytes[i]) for i in by_hash[int(test_h[j])]):
            confirmed += 1
        else:
            logger.info("FNV-1a collision without byte identity at test window %d", j)
    return confirmed


def _benign_fraction(ws: WindowSet) -> float:
    return float(np.count_nonzero(ws.labels == 0)) / len(ws) if len(ws) else 0.0


def verify_leakage(
    train: WindowSet, test: WindowSet, scaler: ScalerParams, tolerance: float = RATIO_TOLERANCE
) -> LeakageReport:
    """Run the fit-order, overlap and class-ratio checks on raw (unscaled) windows."""
    scaler_order_ok = scaler.fit_hash == matrix_digest(train.features)
    overlaps = overlap_count(train, test)
    train_frac = _benign_fraction(train)
    test_frac = _benign_fraction(test)
    report = LeakageReport(
        scaler_order_ok=scaler_order_ok,
        overlap_count=overlaps,
        train_benign_fraction=train_frac,
        test_benign_fraction=test_frac,
        ratio_ok=abs(train_frac - test_frac) <= tolerance + 1e-12,
    )
    if not report.passed:
        logger.warning("Leakage verification failed: %s", report.to_dict())
    return report


def fold_manifest(
    spec: SplitSpec,
    train: WindowSet,
    test: WindowSet,
    report: LeakageReport,
    scaler: ScalerParams,
) -> dict[str, Any]:
    return {
        **spec.echo(),
        "partitions": {"train": train.label_counts(), "test": test.label_counts()},
        "leakage": report.to_dict(),
        "scaler_fit_hash": scaler.fit_hash,
    }
