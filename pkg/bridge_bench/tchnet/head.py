"""Residual classification head and the auxiliary reconstruction decoder."""

from __future__ import annotations

import torch
from torch import nn

from bridge_bench.tchnet.config import Conventions, ModelConfig


class ClassificationHead(nn.Module):
    """``z = [fused ∥ GELU(BN(W_raw x̄))]``; two BN-GELU-Dropout layers with a skip from z at the second."""

    def __init__(self, cfg: ModelConfig, conventions: Conventions) -> None:
        super().__init__()
        bias = conventions.linear_bias
        affine = conventions.norm_affine
        hidden1, hidden2 = cfg.head_hidden
        self.fused_dim = cfg.fused_dim
        self.raw = nn.Sequential(
            nn.Linear(cfg.features, cfg.raw_dim, bias=bias),
            nn.BatchNorm1d(cfg.raw_dim, affine=affine),
            nn.GELU(),
        )
        self.fc1 = nn.Sequential(
            nn.Linear(cfg.classifier_in, hidden1, bias=bias),
            nn.BatchNorm1d(hidden1, affine=affine),
            nn.GELU(),
            nn.Dropout(cfg.dropout),
        )
        self.fc2 = nn.Sequential(
            nn.Linear(hidden1, hidden2, bias=bias),
            nn.BatchNorm1d(hidden2, affine=affine),
            nn.GELU(),
            nn.Dropout(cfg.dropout),
        )
        self.skip = nn.Linear(cfg.classifier_in, hidden2, bias=bias)
        self.out = nn.Linear(hidden2, 2, bias=bias)

    def logits(self, fused: torch.Tensor, x_mean: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Return (logits, z)."""
        if fused.dim() != 2 or fused.shape[1] != self.fused_dim:
            raise ValueError(f"head: fused must be (B, {self.fused_dim}), got {tuple(fused.shape)}")
        z = torch.cat([fused, self.raw(x_mean)], dim=-1)
        z2 = self.fc2(self.fc1(z)) + self.skip(z)
        return self.out(z2), z

    def forward(self, fused: torch.Tensor, x_mean: torch.Tensor) -> torch.Tensor:
        logits, _ = self.logits(fused, x_mean)
        return torch.softmax(logits, dim=-1)


class AuxiliaryDecoder(nn.Module):
    def __init__(self, cfg: ModelConfig, conventions: Conventions) -> None:
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(cfg.fused_dim, cfg.decoder_hidden, bias=conventions.linear_bias),
            nn.GELU(),
            nn.Linear(cfg.decoder_hidden, cfg.features, bias=conventions.linear_bias),
        )

    def forward(self, fused: torch.Tensor) -> torch.Tensor:
        return self.net(fused)
