"""Cross-branch gated attention fusion (CB-GAF) and the plain concatenation baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
from torch import nn

from bridge_bench.tchnet.config import Conventions


@dataclass
class FusionTrace:
    """Intermediate values of one fusion pass, keyed by branch name."""

    projected: dict[str, torch.Tensor] = field(default_factory=dict)
    attended: dict[str, torch.Tensor] = field(default_factory=dict)
    attention: dict[str, torch.Tensor] = field(default_factory=dict)
    gates: dict[str, torch.Tensor] = field(default_factory=dict)
    parts: dict[str, torch.Tensor] = field(default_factory=dict)


def _check_inputs(in_dims: dict[str, int], inputs: dict[str, torch.Tensor]) -> None:
    if set(inputs) != set(in_dims):
        raise ValueError(f"fusion expects branches {sorted(in_dims)}, got {sorted(inputs)}")
    for name, dim in in_dims.items():
        t = inputs[name]
        if t.dim() != 2 or t.shape[1] != dim:
            raise ValueError(f"fusion: branch {name} expected (B, {dim}), got {tuple(t.shape)}")


class CrossBranchGatedFusion(nn.Module):
    """Each branch queries the other k−1 branches, then mixes self and attended signals.

    ``fused_i = g_i ⊙ p_i + (1 − g_i) ⊙ attn_i`` with ``g_i = σ(W_g [p_i ∥ attn_i] + b_g)``;
    the k fused parts are concatenated in branch order and layer-normed.
    """

    def __init__(self, in_dims: dict[str, int], fusion_dim: int, conventions: Conventions) -> None:
        super().__init__()
        if len(in_dims) < 2:
            raise ValueError("cross-branch fusion needs at least two branches")
        self.in_dims = dict(in_dims)
        self.fusion_dim = fusion_dim
        bias = conventions.linear_bias
        self.proj = nn.ModuleDict({b: nn.Linear(d, fusion_dim, bias=bias) for b, d in in_dims.items()})
        self.query = nn.ModuleDict({b: nn.Linear(fusion_dim, fusion_dim, bias=bias) for b in in_dims})
        self.key = nn.ModuleDict({b: nn.Linear(fusion_dim, fusion_dim, bias=bias) for b in in_dims})
        self.value = nn.ModuleDict({b: nn.Linear(fusion_dim, fusion_dim, bias=bias) for b in in_dims})
        self.gate = nn.ModuleDict({b: nn.Linear(2 * fusion_dim, fusion_dim, bias=bias) for b in in_dims})
        self.norm = nn.LayerNorm(len(in_dims) * fusion_dim, elementwise_affine=conventions.norm_affine)

    def forward(self, inputs: dict[str, torch.Tensor]) -> tuple[torch.Tensor, FusionTrace]:
        _check_inputs(self.in_dims, inputs)
        trace = FusionTrace()
        names = list(self.in_dims)
        projected = {b: self.proj[b](inputs[b]) for b in names}
        keys = {b: self.key[b](projected[b]) for b in names}
        values = {b: self.value[b](projected[b]) for b in names}
        scale = 1.0 / math.sqrt(self.fusion_dim)

        for b in names:
            others = [o for o in names if o != b]
            q = self.query[b](projected[b])
            k = torch.stack([keys[o] for o in others], dim=1)
            v = torch.stack([values[o] for o in others], dim=1)
            weights = torch.softmax(torch.einsum("bd,bkd->bk", q, k) * scale, dim=-1)
            attended = torch.einsum("bk,bkd->bd", weights, v)
            g = torch.sigmoid(self.gate[b](torch.cat([projected[b], attended], dim=-1)))
            trace.projected[b] = projected[b]
            trace.attended[b] = attended
            trace.attention[b] = weights
            trace.gates[b] = g
            trace.parts[b] = g * projected[b] + (1.0 - g) * attended

        fused = self.norm(torch.cat([trace.parts[b] for b in names], dim=-1))
        return fused, trace


class ConcatFusion(nn.Module):
    """Projection to the fusion width, concatenation and layer norm; no cross-branch mixing."""

    def __init__(self, in_dims: dict[str, int], fusion_dim: int, conventions: Conventions) -> None:
        super().__init__()
        self.in_dims = dict(in_dims)
        self.proj = nn.ModuleDict(
            {b: nn.Linear(d, fusion_dim, bias=conventions.linear_bias) for b, d in in_dims.items()}
        )
        self.norm = nn.LayerNorm(len(in_dims) * fusion_dim, elementwise_affine=conventions.norm_affine)

    def forward(self, inputs: dict[str, torch.Tensor]) -> tuple[torch.Tensor, FusionTrace]:
        _check_inputs(self.in_dims, inputs)
        trace = FusionTrace()
        for b in self.in_dims:
            trace.projected[b] = trace.parts[b] = self.proj[b](inputs[b])
        return self.norm(torch.cat(list(trace.parts.values()), dim=-1)), trace
