"""Shared robust scaler (median / P5–P95), clipping and Gaussian augmentation."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from sklearn.preprocessing import RobustScaler

from bridge_bench.errors import DataError
from bridge_bench.hashing import matrix_digest
from bridge_bench.vocab import SLOT_COUNT

logger = logging.getLogger(__name__)

CLIP = 10.0
SCALE_FLOOR = 1e-9
QUANTILE_RANGE = (5.0, 95.0)


@dataclass(frozen=True)
class ScalerParams:
    center: np.ndarray
    scale: np.ndarray
    fit_row_count: int
    fit_hash: str

    def __post_init__(self) -> None:
        if self.center.shape != self.scale.shape or self.center.ndim != 1:
            raise ValueError("center and scale must be vectors of equal length")
        if not np.all(self.scale > 0):
            raise ValueError("every scale entry must be positive")

    def to_dict(self) -> dict[str, Any]:
        return {
            "center": [float(v) for v in self.center],
            "scale": [float(v) for v in self.scale],
            "fit_row_count": self.fit_row_count,
            "fit_hash": self.fit_hash,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ScalerParams:
        return cls(
            center=np.asarray(data["center"], dtype=np.float64),
            scale=np.asarray(data["scale"], dtype=np.float64),
            fit_row_count=int(data["fit_row_count"]),
            fit_hash=str(data["fit_hash"]),
        )


@dataclass(frozen=True)
class AugmentConfig:
    probability: float = 0.30
    sigma: float = 0.010
    clip_lo: float = -CLIP
    clip_hi: float = CLIP
    seed: int = 42

    def __post_init__(self) -> None:
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError(f"probability must be in [0, 1], got {self.probability}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be ≥ 0, got {self.sigma}")
        if not self.clip_lo < self.clip_hi:
            raise ValueError("clip_lo must be below clip_hi")


def fit_scaler(train: np.ndarray) -> ScalerParams:
    """Fit median centring and P95 − P5 scaling on training rows only.

    Percentiles use linear interpolation at ``p/100 · (N − 1)``; scales below
    1e-9 (constant columns) are replaced by 1.0.
    """
    rows = np.asarray(train)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise DataError("cannot fit a scaler on empty input")
    if rows.shape[0] < 2:
        raise DataError(f"scaler needs at least 2 rows, got {rows.shape[0]}")

    scaler = RobustScaler(quantile_range=QUANTILE_RANGE, copy=True).fit(rows.astype(np.float64))
    center = np.asarray(scaler.center_, dtype=np.float64)
    scale = np.asarray(scaler.scale_, dtype=np.float64)
    scale = np.where(scale < SCALE_FLOOR, 1.0, scale)
    params = ScalerParams(center=center, scale=scale, fit_row_count=rows.shape[0], fit_hash=matrix_digest(rows))
    logger.info("Fitted scaler on %d row(s), fit_hash=%s", params.fit_row_count, params.fit_hash)
    return params


def apply_scaler(params: ScalerParams, matrix: np.ndarray) -> np.ndarray:
    """``(x − center) / scale`` clipped to [−10, 10]; works on N×F or N×W×F arrays."""
    values = np.asarray(matrix)
    if values.shape[-1] != params.center.shape[0]:
        raise ValueError(f"column-count mismatch: data has {values.shape[-1]}, scaler has {params.center.shape[0]}")
    scaled = (values.astype(np.float64) - params.center) / params.scale
    return np.clip(scaled, -CLIP, CLIP).astype(np.float32)


def augment(windows: np.ndarray, cfg: AugmentConfig) -> np.ndarray:
    """Add N(0, σ²) noise to each window with probability ``cfg.probability``, then re-clip."""
    out = np.array(windows, dtype=np.float32, copy=True)
    if cfg.probability == 0.0 or cfg.sigma == 0.0 or out.shape[0] == 0:
        return out
    rng = np.random.default_rng(cfg.seed)
    chosen = rng.random(out.shape[0]) < cfg.probability
    noise = rng.normal(0.0, cfg.sigma, size=(int(chosen.sum()), *out.shape[1:]))
    out[chosen] = np.clip(out[chosen] + noise, cfg.clip_lo, cfg.clip_hi).astype(np.float32)
    return out


def save_scaler(params: ScalerParams, path: str | Path) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(params.to_dict(), indent=2) + "\n", encoding="utf-8")
    return out


def load_scaler(path: str | Path) -> ScalerParams:
    file_path = Path(path)
    if not file_path.exists():
        raise FileNotFoundError(f"Scaler file not found: {file_path}")
    params = ScalerParams.from_dict(json.loads(file_path.read_text(encoding="utf-8")))
    if params.center.shape[0] != SLOT_COUNT:
        logger.warning("Scaler %s has %d columns, expected %d", file_path, params.center.shape[0], SLOT_COUNT)
    return params
