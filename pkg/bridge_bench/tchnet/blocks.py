"""Building blocks: residual feature projection, depthwise-separable conv, SE, ResConvSE."""

from __future__ import annotations

import torch
from torch import nn

from bridge_bench.tchnet.config import Conventions


class FeatureProjection(nn.Module):
    """``x + LN(W2 · Dropout(GELU(LN(W1 · x))))`` applied per time step, hidden width 2F."""

    def __init__(self, features: int, dropout: float, conventions: Conventions) -> None:
        super().__init__()
        hidden = 2 * features
        self.lin1 = nn.Linear(features, hidden, bias=conventions.linear_bias)
        self.norm1 = nn.LayerNorm(hidden, elementwise_affine=conventions.norm_affine)
        self.act = nn.GELU()
        self.drop = nn.Dropout(dropout / 2)
        self.lin2 = nn.Linear(hidden, features, bias=conventions.linear_bias)
        self.norm2 = nn.LayerNorm(features, elementwise_affine=conventions.norm_affine)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.lin1.in_features:
            raise ValueError(f"feat_proj expects {self.lin1.in_features} features, got {x.shape[-1]}")
        return x + self.norm2(self.lin2(self.drop(self.act(self.norm1(self.lin1(x))))))


class DSConv(nn.Module):
    """Depthwise k=3 (same padding) then pointwise 1×1, each followed by BN and ReLU."""

    def __init__(self, c_in: int, c_out: int, conventions: Conventions) -> None:
        super().__init__()
        self.depthwise = nn.Conv1d(c_in, c_in, 3, padding=1, groups=c_in, bias=conventions.conv_bias)
        self.depthwise_bn = nn.BatchNorm1d(c_in, affine=conventions.norm_affine)
        self.pointwise = nn.Conv1d(c_in, c_out, 1, bias=conventions.conv_bias)
        self.pointwise_bn = nn.BatchNorm1d(c_out, affine=conventions.norm_affine)

    def forward(self, u: torch.Tensor) -> torch.Tensor:
        u = torch.relu(self.depthwise_bn(self.depthwise(u)))
        return torch.relu(self.pointwise_bn(self.pointwise(u)))


class SqueezeExcite(nn.Module):
    def __init__(self, channels: int, reduction: int, conventions: Conventions) -> None:
        super().__init__()
        hidden = max(1, channels // reduction)
        self.fc1 = nn.Linear(channels, hidden, bias=conventions.linear_bias)
        self.fc2 = nn.Linear(hidden, channels, bias=conventions.linear_bias)

    def gate(self, u: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.fc2(torch.relu(self.fc1(u.mean(dim=-1)))))

    def forward(self, u: torch.Tensor) -> torch.Tensor:
        return u * self.gate(u).unsqueeze(-1)


class ResConvSE(nn.Module):
    """``ReLU(SE(DSConv2(DSConv1(u))) + skip(u))``; skip is 1×1 conv + BN when widths differ."""

    def __init__(self, c_in: int, c_out: int, reduction: int, conventions: Conventions) -> None:
        super().__init__()
        self.c_in = c_in
        self.ds1 = DSConv(c_in, c_out, conventions)
        self.ds2 = DSConv(c_out, c_out, conventions)
        self.se = SqueezeExcite(c_out, reduction, conventions)
        if c_in != c_out:
            self.skip: nn.Module = nn.Sequential(
                nn.Conv1d(c_in, c_out, 1, bias=conventions.conv_bias),
                nn.BatchNorm1d(c_out, affine=conventions.norm_affine),
            )
        else:
            self.skip = nn.Identity()

    def forward(self, u: torch.Tensor) -> torch.Tensor:
        if u.dim() != 3 or u.shape[1] != self.c_in:
            raise ValueError(f"ResConvSE expects (B, {self.c_in}, L), got {tuple(u.shape)}")
        return torch.relu(self.se(self.ds2(self.ds1(u))) + self.skip(u))


def adaptive_avg_time(x: torch.Tensor, steps: int) -> torch.Tensor:
    """Adaptive average pooling over the time axis of a (B, L, D) tensor."""
    return nn.functional.adaptive_avg_pool1d(x.transpose(1, 2), steps).transpose(1, 2)
