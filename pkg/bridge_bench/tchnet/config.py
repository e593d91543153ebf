"""Hyper-parameter records for the TCH-Net kernel."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Any

BRANCHES = ("T", "C", "H")
FUSION_MODES = ("cbgaf", "concat")


@dataclass(frozen=True)
class Conventions:
    """Layer conventions that decide the parameter inventory."""

    linear_bias: bool = True
    conv_bias: bool = False
    norm_affine: bool = True

    def to_dict(self) -> dict[str, bool]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Conventions:
        return cls(**{f.name: bool(data[f.name]) for f in fields(cls) if f.name in data})


@dataclass(frozen=True)
class ModelConfig:
    features: int = 46
    window: int = 32
    embed_dim: int = 32
    conv_channels: tuple[int, int, int] = (64, 128, 128)
    se_reduction: int = 8
    gru1_hidden: int = 128
    gru1_layers: int = 2
    gru2_hidden: int = 64
    transformer_dim: int = 128
    transformer_layers: int = 2
    transformer_heads: int = 8
    transformer_ffn: int = 512
    merge_heads: int = 8
    grid: int = 8
    h_hidden: int = 128
    h_out: int = 64
    fusion_dim: int = 128
    head_hidden: tuple[int, int] = (256, 128)
    raw_dim: int = 64
    decoder_hidden: int = 64
    dropout: float = 0.15
    num_datasets: int = 5
    num_devices: int = 6
    branches: tuple[str, ...] = BRANCHES
    fusion: str = "cbgaf"

    def __post_init__(self) -> None:
        branches = tuple(self.branches)
        if not branches or len(set(branches)) != len(branches) or not set(branches) <= set(BRANCHES):
            raise ValueError(f"branches must be a non-empty subset of {BRANCHES}, got {branches}")
        object.__setattr__(self, "branches", tuple(b for b in BRANCHES if b in branches))
        object.__setattr__(self, "conv_channels", tuple(self.conv_channels))
        object.__setattr__(self, "head_hidden", tuple(self.head_hidden))
        if self.fusion not in FUSION_MODES:
            raise ValueError(f"fusion must be one of {FUSION_MODES}, got {self.fusion!r}")
        if self.fusion == "cbgaf" and len(self.branches) < 2:
            raise ValueError("cbgaf fusion needs at least two branches")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.transformer_dim % self.transformer_heads:
            raise ValueError("transformer_dim must be divisible by transformer_heads")
        if self.t_merged % self.merge_heads:
            raise ValueError("merged temporal width must be divisible by merge_heads")
        if self.window < 4:
            raise ValueError("window must allow two 2× poolings")

    @property
    def t_merged(self) -> int:
        return 2 * self.gru1_hidden + 2 * self.gru2_hidden + self.transformer_dim

    @property
    def c_out(self) -> int:
        return 2 * self.embed_dim

    @property
    def branch_dims(self) -> dict[str, int]:
        dims = {"T": self.t_merged, "C": self.c_out, "H": self.h_out}
        return {b: dims[b] for b in self.branches}

    @property
    def fused_dim(self) -> int:
        return len(self.branches) * self.fusion_dim

    @property
    def classifier_in(self) -> int:
        return self.fused_dim + self.raw_dim

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["conv_channels"] = list(self.conv_channels)
        data["head_hidden"] = list(self.head_hidden)
        data["branches"] = list(self.branches)
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ModelConfig:
        known = {f.name for f in fields(cls)}
        kwargs = {k: v for k, v in data.items() if k in known}
        for key in ("conv_channels", "head_hidden", "branches"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


@dataclass(frozen=True)
class LossConfig:
    gamma: float = 2.0
    label_smoothing: float = 0.05
    aux_weight: float = 0.05

    def __post_init__(self) -> None:
        if self.gamma < 0:
            raise ValueError(f"gamma must be ≥ 0, got {self.gamma}")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ValueError(f"label_smoothing must be in [0, 1), got {self.label_smoothing}")
        if self.aux_weight < 0:
            raise ValueError(f"aux_weight must be ≥ 0, got {self.aux_weight}")
