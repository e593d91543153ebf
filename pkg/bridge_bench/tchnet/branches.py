"""The three TCH-Net branches: temporal (T), contextual (C) and statistical (H)."""

from __future__ import annotations

import torch
from torch import nn

from bridge_bench.tchnet.blocks import ResConvSE, adaptive_avg_time
from bridge_bench.tchnet.config import Conventions, ModelConfig


def _expect(path: str, tensor: torch.Tensor, *dims: int) -> torch.Tensor:
    if tuple(tensor.shape[1:]) != dims:
        raise ValueError(f"{path}: expected (B, {', '.join(map(str, dims))}), got {tuple(tensor.shape)}")
    return tensor


# ---------------------------------------------------------------------------
# Temporal branch
# ---------------------------------------------------------------------------


class TemporalBranch(nn.Module):
    """Three parallel paths aligned on a shared grid, merged by self-attention and mean-pooled.

    Path 1 is a ResConvSE frontend feeding a two-layer BiGRU, Path 2 a stride-2
    convolution feeding a one-layer BiGRU, Path 3 a pre-LayerNorm transformer
    with a prepended CLS token that is dropped after encoding.
    """

    def __init__(self, cfg: ModelConfig, conventions: Conventions) -> None:
        super().__init__()
        self.cfg = cfg
        c1, c2, c3 = cfg.conv_channels
        dropout = cfg.dropout

        # path 1
        self.stage1 = ResConvSE(cfg.features, c1, cfg.se_reduction, conventions)
        self.stage2 = ResConvSE(c1, c2, cfg.se_reduction, conventions)
        self.stage3 = ResConvSE(c2, c3, cfg.se_reduction, conventions)
        self.pool = nn.MaxPool1d(2)
        self.gru1 = nn.GRU(
            c3,
            cfg.gru1_hidden,
            num_layers=cfg.gru1_layers,
            batch_first=True,
            bidirectional=True,
            dropout=dropout if cfg.gru1_layers > 1 else 0.0,
        )

        # path 2
        self.down = nn.Conv1d(cfg.features, cfg.gru2_hidden, 3, stride=2, padding=1, bias=conventions.conv_bias)
        self.down_bn = nn.BatchNorm1d(cfg.gru2_hidden, affine=conventions.norm_affine)
        self.gru2 = nn.GRU(cfg.gru2_hidden, cfg.gru2_hidden, batch_first=True, bidirectional=True)

        # path 3
        self.embed = nn.Linear(cfg.features, cfg.transformer_dim, bias=conventions.linear_bias)
        self.pos = nn.Parameter(torch.zeros(1, cfg.window, cfg.transformer_dim))
        self.cls = nn.Parameter(torch.zeros(1, 1, cfg.transformer_dim))
        layer = nn.TransformerEncoderLayer(
            cfg.transformer_dim,
            cfg.transformer_heads,
            dim_feedforward=cfg.transformer_ffn,
            dropout=dropout,
            batch_first=True,
            norm_first=True,
        )
        self.encoder = nn.TransformerEncoder(layer, cfg.transformer_layers, enable_nested_tensor=False)

        # merge
        self.merge_norm = nn.LayerNorm(cfg.t_merged, elementwise_affine=conventions.norm_affine)
        self.merge_attn = nn.MultiheadAttention(cfg.t_merged, cfg.merge_heads, dropout=dropout, batch_first=True)

    def path1(self, x: torch.Tensor) -> torch.Tensor:
        u = x.transpose(1, 2)
        u = self.pool(self.stage1(u))
        u = self.pool(self.stage2(u))
        u = nn.functional.adaptive_avg_pool1d(self.stage3(u), self.cfg.grid)
        out, _ = self.gru1(u.transpose(1, 2))
        return _expect("T.path1", out, self.cfg.grid, 2 * self.cfg.gru1_hidden)

    def path2(self, x: torch.Tensor) -> torch.Tensor:
        u = torch.relu(self.down_bn(self.down(x.transpose(1, 2))))
        out, _ = self.gru2(u.transpose(1, 2))
        return _expect("T.path2", adaptive_avg_time(out, self.cfg.grid), self.cfg.grid, 2 * self.cfg.gru2_hidden)

    def path3(self, x: torch.Tensor) -> torch.Tensor:
        tokens = self.embed(x) + self.pos
        tokens = torch.cat([self.cls.expand(x.shape[0], -1, -1), tokens], dim=1)
        encoded = self.encoder(tokens)[:, 1:, :]
        return _expect("T.path3", adaptive_avg_time(encoded, self.cfg.grid), self.cfg.grid, self.cfg.transformer_dim)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, dict[str, torch.Tensor]]:
        _expect("T.input", x, self.cfg.window, self.cfg.features)
        paths = {"path1": self.path1(x), "path2": self.path2(x), "path3": self.path3(x)}
        merged = self.merge_norm(torch.cat(list(paths.values()), dim=-1))
        attended, _ = self.merge_attn(merged, merged, merged, need_weights=False)
        return _expect("T.merge", attended.mean(dim=1), self.cfg.t_merged), paths


# ---------------------------------------------------------------------------
# Contextual and statistical branches
# ---------------------------------------------------------------------------


class ContextBranch(nn.Module):
    """Concatenated dataset and device-category embeddings; no MLP."""

    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        self.ds = nn.Embedding(cfg.num_datasets, cfg.embed_dim)
        self.dev = nn.Embedding(cfg.num_devices, cfg.embed_dim)

    def forward(self, ctx: torch.Tensor) -> torch.Tensor:
        if ctx.dim() != 2 or ctx.shape[1] != 2:
            raise ValueError(f"C: context must be (B, 2), got {tuple(ctx.shape)}")
        c_ds, c_dev = ctx[:, 0].long(), ctx[:, 1].long()
        if c_ds.numel() and (int(c_ds.min()) < 0 or int(c_ds.max()) >= self.ds.num_embeddings):
            raise ValueError(f"C: c_ds out of range 0..{self.ds.num_embeddings - 1}")
        if c_dev.numel() and (int(c_dev.min()) < 0 or int(c_dev.max()) >= self.dev.num_embeddings):
            raise ValueError(f"C: c_dev out of range 0..{self.dev.num_embeddings - 1}")
        return torch.cat([self.ds(c_ds), self.dev(c_dev)], dim=-1)


class StatisticalBranch(nn.Module):
    def __init__(self, cfg: ModelConfig, conventions: Conventions) -> None:
        super().__init__()
        self.features = cfg.features
        self.mlp = nn.Sequential(
            nn.Linear(cfg.features, cfg.h_hidden, bias=conventions.linear_bias),
            nn.BatchNorm1d(cfg.h_hidden, affine=conventions.norm_affine),
            nn.GELU(),
            nn.Dropout(cfg.dropout),
            nn.Linear(cfg.h_hidden, cfg.h_out, bias=conventions.linear_bias),
            nn.BatchNorm1d(cfg.h_out, affine=conventions.norm_affine),
            nn.GELU(),
            nn.Dropout(cfg.dropout),
        )

    def forward(self, x_mean: torch.Tensor) -> torch.Tensor:
        """Takes the time-mean x̄ (B, F) of the projected window."""
        if x_mean.dim() != 2 or x_mean.shape[1] != self.features:
            raise ValueError(f"H: expected (B, {self.features}), got {tuple(x_mean.shape)}")
        return self.mlp(x_mean)
