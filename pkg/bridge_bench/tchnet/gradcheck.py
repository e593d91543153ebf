"""Finite-difference verification of CB-GAF and focal-loss gradients in double precision."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import torch
from torch import nn

from bridge_bench.errors import DataError
from bridge_bench.tchnet.config import Conventions, LossConfig
from bridge_bench.tchnet.fusion import CrossBranchGatedFusion
from bridge_bench.tchnet.head import ClassificationHead
from bridge_bench.tchnet.losses import class_weights, focal_loss
from bridge_bench.tchnet.weights import WeightStore

logger = logging.getLogger(__name__)

DEFAULT_DIMS = {"T": 16, "C": 8, "H": 8}
DEFAULT_FUSION_DIM = 8
DEFAULT_BATCH = 4
STEP = 1e-5
TOLERANCE = 1e-4
PARAM_RANGE = 0.5
DEFAULT_SAMPLE = 32


@dataclass
class GradcheckResult:
    seed: int
    max_error: float
    per_tensor: dict[str, float] = field(default_factory=dict)
    coordinates: int = 0
    loss: float = 0.0

    def passed(self, tolerance: float = TOLERANCE) -> bool:
        return self.max_error <= tolerance

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "max_error": self.max_error,
            "passed": self.passed(),
            "tolerance": TOLERANCE,
            "coordinates": self.coordinates,
            "loss": self.loss,
            "per_tensor": dict(self.per_tensor),
        }


class _Fixture(nn.Module):
    """CB-GAF, a readout to two-class probabilities, and the focal loss.

    The readout is a linear stub on synthetic fixtures and the classification head
    (fed a fixed raw-feature summary) when the fixture comes from a weights file.
    """

    def __init__(self, fusion: CrossBranchGatedFusion, readout: nn.Module, summary: torch.Tensor | None = None) -> None:
        super().__init__()
        self.fusion = fusion
        self.readout = readout
        self.summary = summary

    def loss(self, inputs: dict[str, torch.Tensor], labels: torch.Tensor, alpha: torch.Tensor, cfg: LossConfig) -> torch.Tensor:
        fused, _ = self.fusion(inputs)
        if self.summary is None:
            logits = self.readout(fused)
        else:
            logits, _ = self.readout.logits(fused, self.summary)
        return focal_loss(torch.softmax(logits, dim=-1), labels, cfg, alpha)


def _inputs(rng: np.random.Generator, dims: dict[str, int], batch: int) -> tuple[dict[str, torch.Tensor], torch.Tensor]:
    inputs = {b: torch.from_numpy(rng.standard_normal((batch, d))).requires_grad_(True) for b, d in dims.items()}
    labels = torch.from_numpy(rng.integers(0, 2, size=batch)).long()
    return inputs, labels


def build_fixture(
    seed: int,
    dims: dict[str, int] | None = None,
    fusion_dim: int = DEFAULT_FUSION_DIM,
    batch: int = DEFAULT_BATCH,
    zero: bool = False,
) -> tuple[_Fixture, dict[str, torch.Tensor], torch.Tensor]:
    """Seeded float64 fixture: module, branch inputs (requiring grad) and labels."""
    dims = dict(dims or DEFAULT_DIMS)
    rng = np.random.default_rng(seed)
    fusion = CrossBranchGatedFusion(dims, fusion_dim, Conventions())
    module = _Fixture(fusion, nn.Linear(len(dims) * fusion_dim, 2)).double()
    with torch.no_grad():
        for p in module.parameters():
            values = np.zeros(p.shape) if zero else rng.uniform(-PARAM_RANGE, PARAM_RANGE, size=p.shape)
            p.copy_(torch.from_numpy(values))
    inputs, labels = _inputs(rng, dims, batch)
    return module, inputs, labels


def _load(module: nn.Module, store: WeightStore, prefix: str) -> None:
    state = module.state_dict()
    for name in state:
        key = f"{prefix}.{name}"
        if key in store.tensors:
            state[name] = torch.from_numpy(np.array(store.tensors[key], dtype=np.float64))
    module.load_state_dict(state)


def fixture_from_weights(
    store: WeightStore, seed: int, batch: int = DEFAULT_BATCH
) -> tuple[_Fixture, dict[str, torch.Tensor], torch.Tensor]:
    """Float64 copies of a weights file's CB-GAF and head, with seeded branch inputs and labels."""
    cfg = store.config
    if cfg.fusion != "cbgaf":
        raise ValueError(f"gradcheck needs CB-GAF weights, the file uses fusion={cfg.fusion!r}")
    errors = store.validate()
    if errors:
        raise DataError("weights do not match the model: " + "; ".join(errors[:5]))
    fusion = CrossBranchGatedFusion(cfg.branch_dims, cfg.fusion_dim, store.conventions).double()
    head = ClassificationHead(cfg, store.conventions).double()
    _load(fusion, store, "fusion")
    _load(head, store, "head")
    rng = np.random.default_rng(seed)
    inputs, labels = _inputs(rng, cfg.branch_dims, batch)
    summary = torch.from_numpy(rng.standard_normal((batch, cfg.features)))
    return _Fixture(fusion, head.eval(), summary), inputs, labels


def _coordinates(numel: int, sample: int | None, rng: np.random.Generator) -> list[int]:
    if sample is None or numel <= sample:
        return list(range(numel))
    return sorted(int(i) for i in rng.choice(numel, size=sample, replace=False))


def gradcheck_cbgaf_focal(
    seed: int = 42,
    dims: dict[str, int] | None = None,
    fusion_dim: int = DEFAULT_FUSION_DIM,
    batch: int = DEFAULT_BATCH,
    loss_cfg: LossConfig | None = None,
    zero: bool = False,
    step: float = STEP,
    store: WeightStore | None = None,
    sample: int | None = None,
) -> GradcheckResult:
    """Compare autograd gradients with central differences over the fusion parameters and inputs.

    Without *store* the fixture is a reduced random CB-GAF. With *store* the fusion
    and head come from the weights file and *sample* (default ``DEFAULT_SAMPLE``)
    seeded coordinates are checked per tensor; ``sample=None`` on a synthetic fixture
    checks every coordinate.

    The error for a coordinate is ``|analytic − numeric| / max(1, |numeric|)``; the result
    carries the maximum overall and per tensor.
    """
    loss_cfg = loss_cfg or LossConfig()
    if store is not None:
        if zero:
            raise ValueError("zero parameters only apply to synthetic fixtures")
        module, inputs, labels = fixture_from_weights(store, seed, batch)
        sample = DEFAULT_SAMPLE if sample is None else sample
    else:
        module, inputs, labels = build_fixture(seed, dims, fusion_dim, batch, zero)
    if sample is not None and sample < 1:
        raise ValueError("sample must be ≥ 1")
    alpha = class_weights(labels).double()
    picker = np.random.default_rng([seed, 1])

    targets: dict[str, torch.Tensor] = {f"fusion.{n}": p for n, p in module.fusion.named_parameters()}
    targets.update({f"input.{b}": t for b, t in inputs.items()})

    loss = module.loss(inputs, labels, alpha, loss_cfg)
    grads = torch.autograd.grad(loss, list(targets.values()))
    for name, g in zip(targets, grads, strict=True):
        if not torch.isfinite(g).all():
            raise DataError(f"non-finite gradient for {name}")

    per_tensor: dict[str, float] = {}
    coordinates = 0
    with torch.no_grad():
        for (name, tensor), grad in zip(targets.items(), grads, strict=True):
            flat = tensor.view(-1)
            analytic = grad.reshape(-1)
            worst = 0.0
            picked = _coordinates(flat.numel(), sample, picker)
            for i in picked:
                original = flat[i].item()
                flat[i] = original + step
                plus = module.loss(inputs, labels, alpha, loss_cfg).item()
                flat[i] = original - step
                minus = module.loss(inputs, labels, alpha, loss_cfg).item()
                flat[i] = original
                numeric = (plus - minus) / (2.0 * step)
                if not math.isfinite(numeric):
                    raise DataError(f"non-finite numeric gradient for {name}[{i}]")
                worst = max(worst, abs(analytic[i].item() - numeric) / max(1.0, abs(numeric)))
            per_tensor[name] = worst
            coordinates += len(picked)

    result = GradcheckResult(seed, max(per_tensor.values()), per_tensor, coordinates, float(loss.item()))
    logger.info("gradcheck seed=%d max_error=%.3e over %d coordinates", seed, result.max_error, coordinates)
    return result
