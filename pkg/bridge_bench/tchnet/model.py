"""TCH-Net composition and the deterministic inference kernel."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np
import torch
from torch import nn

from bridge_bench.errors import DataError
from bridge_bench.helpers import ordered_map
from bridge_bench.metrics import ScoredPredictions, write_scores
from bridge_bench.tchnet.blocks import FeatureProjection
from bridge_bench.tchnet.branches import ContextBranch, StatisticalBranch, TemporalBranch
from bridge_bench.tchnet.config import Conventions, ModelConfig
from bridge_bench.tchnet.fusion import ConcatFusion, CrossBranchGatedFusion
from bridge_bench.tchnet.head import AuxiliaryDecoder, ClassificationHead

if TYPE_CHECKING:
    from bridge_bench.tchnet.weights import WeightStore
    from bridge_bench.windows import WindowSet

logger = logging.getLogger(__name__)


@dataclass
class ForwardDiagnostics:
    """Per-sample intermediates of one forward pass (leading axis is the batch)."""

    branches: dict[str, torch.Tensor] = field(default_factory=dict)
    paths: dict[str, torch.Tensor] = field(default_factory=dict)
    gates: dict[str, torch.Tensor] = field(default_factory=dict)
    attention: dict[str, torch.Tensor] = field(default_factory=dict)
    fused: torch.Tensor | None = None
    z: torch.Tensor | None = None
    x_mean: torch.Tensor | None = None
    recon: torch.Tensor | None = None
    logits: torch.Tensor | None = None
    probs: torch.Tensor | None = None

    @classmethod
    def concat(cls, parts: list[ForwardDiagnostics]) -> ForwardDiagnostics:
        out = cls()
        if not parts:
            return out
        for f in fields(cls):
            first = getattr(parts[0], f.name)
            if isinstance(first, dict):
                setattr(out, f.name, {k: torch.cat([getattr(p, f.name)[k] for p in parts]) for k in first})
            elif first is not None:
                setattr(out, f.name, torch.cat([getattr(p, f.name) for p in parts]))
        return out

    def shapes(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, dict):
                out[f.name] = {k: list(v.shape) for k, v in value.items()}
            elif value is not None:
                out[f.name] = list(value.shape)
        return out


class TCHNet(nn.Module):
    """Feature projection, T/C/H branches, fusion, residual head and auxiliary decoder."""

    def __init__(self, cfg: ModelConfig | None = None, conventions: Conventions | None = None) -> None:
        super().__init__()
        self.cfg = cfg or ModelConfig()
        self.conventions = conventions or Conventions()
        cfg, conv = self.cfg, self.conventions

        self.feat_proj = FeatureProjection(cfg.features, cfg.dropout, conv)
        self.t_branch = TemporalBranch(cfg, conv) if "T" in cfg.branches else None
        self.c_branch = ContextBranch(cfg) if "C" in cfg.branches else None
        self.h_branch = StatisticalBranch(cfg, conv) if "H" in cfg.branches else None
        fusion_cls = CrossBranchGatedFusion if cfg.fusion == "cbgaf" else ConcatFusion
        self.fusion = fusion_cls(cfg.branch_dims, cfg.fusion_dim, conv)
        self.head = ClassificationHead(cfg, conv)
        self.decoder = AuxiliaryDecoder(cfg, conv)

    def forward(self, x: torch.Tensor, ctx: torch.Tensor) -> ForwardDiagnostics:
        if x.dim() != 3 or x.shape[0] != ctx.shape[0]:
            raise ValueError(f"expected x (B, W, F) and ctx (B, 2) with equal B, got {tuple(x.shape)}, {tuple(ctx.shape)}")
        diag = ForwardDiagnostics()
        x_t = self.feat_proj(x)
        x_mean = x_t.mean(dim=1)

        if self.t_branch is not None:
            diag.branches["T"], diag.paths = self.t_branch(x_t)
        if self.c_branch is not None:
            diag.branches["C"] = self.c_branch(ctx)
        if self.h_branch is not None:
            diag.branches["H"] = self.h_branch(x_mean)

        fused, trace = self.fusion(diag.branches)
        logits, z = self.head.logits(fused, x_mean)

        diag.gates = trace.gates
        diag.attention = trace.attention
        diag.fused = fused
        diag.z = z
        diag.x_mean = x_mean
        diag.recon = self.decoder(fused)
        diag.logits = logits
        diag.probs = torch.softmax(logits, dim=-1)
        return diag


# ---------------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------------


def _as_inputs(x: np.ndarray | torch.Tensor, ctx: np.ndarray | torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    xt = torch.as_tensor(np.asarray(x, dtype=np.float32))
    ct = torch.as_tensor(np.asarray(ctx, dtype=np.int64))
    if xt.dim() != 3 or ct.shape != (xt.shape[0], 2):
        raise ValueError(f"expected x (B, W, F) and ctx (B, 2), got {tuple(xt.shape)}, {tuple(ct.shape)}")
    if not torch.isfinite(xt).all():
        raise DataError("non-finite values in model input")
    return xt, ct


def model_forward(
    model: TCHNet,
    x: np.ndarray | torch.Tensor,
    ctx: np.ndarray | torch.Tensor,
    workers: int | None = None,
) -> tuple[np.ndarray, ForwardDiagnostics]:
    """Inference-mode forward, one sample at a time so outputs never depend on batch composition.

    Returns (probs (B, 2) float32, diagnostics).
    """
    xt, ct = _as_inputs(x, ctx)
    model.eval()

    def one(i: int) -> ForwardDiagnostics:
        with torch.inference_mode():
            return model(xt[i : i + 1], ct[i : i + 1])

    parts = ordered_map(one, list(range(xt.shape[0])), workers)
    diag = ForwardDiagnostics.concat(parts)
    probs = diag.probs.numpy() if diag.probs is not None else np.zeros((0, 2), dtype=np.float32)
    return probs, diag


class TCHNetKernel:
    """Load weights once, score many window sets.

    Intra-op threading is pinned to one thread so a sample's output is the same
    whatever ``BRIDGE_THREADS`` is; parallelism comes from scoring samples concurrently.
    """

    def __init__(self, store: WeightStore) -> None:
        from bridge_bench.tchnet.weights import build_model

        torch.set_num_threads(1)
        self.store = store
        self.model = build_model(store)

    @classmethod
    def from_file(cls, path: str | Path) -> TCHNetKernel:
        from bridge_bench.tchnet.weights import load_weights

        return cls(load_weights(path))

    @property
    def config(self) -> ModelConfig:
        return self.model.cfg

    def forward(self, x: np.ndarray, ctx: np.ndarray, workers: int | None = None) -> tuple[np.ndarray, ForwardDiagnostics]:
        return model_forward(self.model, x, ctx, workers)

    def score(self, ws: WindowSet, workers: int | None = None) -> tuple[ScoredPredictions, ForwardDiagnostics]:
        if len(ws) == 0:
            raise DataError("no windows to score")
        probs, diag = self.forward(ws.features, ws.contexts, workers)
        preds = ScoredPredictions(probs[:, 1].astype(np.float64).clip(0.0, 1.0), ws.labels, ws.contexts)
        return preds, diag


def score_windows(kernel: TCHNetKernel, ws: WindowSet, out: str | Path, workers: int | None = None) -> tuple[Path, ForwardDiagnostics]:
    """Score *ws* and write the scores CSV consumed by ``bridge eval``."""
    preds, diag = kernel.score(ws, workers)
    path = write_scores(out, preds)
    logger.info("Scored %d windows -> %s", len(preds), path)
    return path, diag


def gate_statistics(diag: ForwardDiagnostics, contexts: np.ndarray) -> dict[str, dict[str, float]]:
    """Mean gate value per branch, grouped by ``c_ds`` (plus ``"all"``)."""
    ctx = np.asarray(contexts, dtype=np.int64)
    out: dict[str, dict[str, float]] = {}
    if not diag.gates:
        return out
    means = {b: g.mean(dim=1).numpy() for b, g in diag.gates.items()}
    out["all"] = {b: float(m.mean()) for b, m in means.items()}
    for ds in np.unique(ctx[:, 0]):
        mask = ctx[:, 0] == ds
        out[str(int(ds))] = {b: float(m[mask].mean()) for b, m in means.items()}
    return out
