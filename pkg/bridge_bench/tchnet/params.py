"""Trainable-parameter accounting over the layer inventory."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import torch

from bridge_bench.tchnet.config import Conventions, ModelConfig
from bridge_bench.tchnet.model import TCHNet

REFERENCE_TOTAL = 2_691_696
TOLERANCE = 0.03

# (component, module-name prefixes) in report order; the first matching prefix wins.
_COMPONENTS: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("feat_proj", ("feat_proj.",)),
    ("t_frontend", ("t_branch.stage1.", "t_branch.stage2.", "t_branch.stage3.")),
    ("t_path1", ("t_branch.gru1.",)),
    ("t_path2", ("t_branch.down.", "t_branch.down_bn.", "t_branch.gru2.")),
    ("t_path3", ("t_branch.embed.", "t_branch.pos", "t_branch.cls", "t_branch.encoder.")),
    ("t_merge", ("t_branch.merge_norm.", "t_branch.merge_attn.")),
    ("c_branch", ("c_branch.",)),
    ("h_branch", ("h_branch.",)),
    ("fusion", ("fusion.",)),
    ("head", ("head.",)),
    ("decoder", ("decoder.",)),
)


@dataclass
class ParameterCount:
    total: int
    breakdown: dict[str, int] = field(default_factory=dict)
    embeddings: int = 0
    fusion_qkv: int = 0
    conventions: Conventions = field(default_factory=Conventions)

    @property
    def t_branch(self) -> int:
        return sum(v for k, v in self.breakdown.items() if k.startswith("t_"))

    @property
    def residual(self) -> int:
        return self.total - REFERENCE_TOTAL

    @property
    def within_tolerance(self) -> bool:
        return abs(self.residual) <= TOLERANCE * REFERENCE_TOTAL

    def to_dict(self) -> dict[str, Any]:
        return {
            "total": self.total,
            "breakdown": dict(self.breakdown),
            "t_branch": self.t_branch,
            "embeddings": self.embeddings,
            "fusion_qkv": self.fusion_qkv,
            "reference_total": REFERENCE_TOTAL,
            "residual": self.residual,
            "within_tolerance": self.within_tolerance,
            "conventions": self.conventions.to_dict(),
        }


def _component(name: str) -> str:
    for component, prefixes in _COMPONENTS:
        if name.startswith(prefixes):
            return component
    raise KeyError(f"parameter {name} belongs to no component")


def count_parameters(cfg: ModelConfig | None = None, conventions: Conventions | None = None) -> ParameterCount:
    """Count trainable parameters without allocating them (meta device)."""
    cfg = cfg or ModelConfig()
    conventions = conventions or Conventions()
    with torch.device("meta"):
        model = TCHNet(cfg, conventions)

    breakdown = {component: 0 for component, _ in _COMPONENTS}
    embeddings = qkv = 0
    for name, p in model.named_parameters():
        if not p.requires_grad:
            continue
        n = p.numel()
        breakdown[_component(name)] += n
        if name.startswith("c_branch.") and name.endswith(".weight"):
            embeddings += n
        if name.startswith(("fusion.query.", "fusion.key.", "fusion.value.")) and name.endswith(".weight"):
            qkv += n
    breakdown = {k: v for k, v in breakdown.items() if v}
    return ParameterCount(sum(breakdown.values()), breakdown, embeddings, qkv, conventions)


def render_parameters(count: ParameterCount) -> str:
    lines = [f"{'Component':<12} {'Params':>12}"]
    lines += [f"{name:<12} {n:>12,}" for name, n in count.breakdown.items()]
    lines.append(f"{'TOTAL':<12} {count.total:>12,}")
    lines.append(f"Reference {REFERENCE_TOTAL:,}; residual {count.residual:+,} ({count.residual / REFERENCE_TOTAL:+.2%})")
    flags = ", ".join(f"{k}={v}" for k, v in count.conventions.to_dict().items())
    lines.append(f"Conventions: {flags}")
    return "\n".join(lines)
