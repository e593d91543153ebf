"""Class-weighted focal loss with label smoothing, reconstruction loss and their sum."""

from __future__ import annotations

import torch

from bridge_bench.tchnet.config import LossConfig

PROB_FLOOR = 1e-12


def class_weights(labels: torch.Tensor, num_classes: int = 2) -> torch.Tensor:
    """Inverse batch frequency, normalised so the mean weight over present classes is 1.

    Absent classes get weight 0; they never multiply a sample.
    """
    labels = labels.long()
    if labels.numel() == 0:
        raise ValueError("class_weights: empty batch")
    counts = torch.bincount(labels, minlength=num_classes).to(torch.float64)
    present = counts > 0
    inv = torch.zeros(num_classes, dtype=torch.float64)
    inv[present] = 1.0 / counts[present]
    inv[present] = inv[present] / inv[present].mean()
    return inv


def focal_loss(
    probs: torch.Tensor,
    labels: torch.Tensor,
    cfg: LossConfig | None = None,
    alpha: torch.Tensor | None = None,
) -> torch.Tensor:
    """Batch-mean of ``−Σ_c α_y · t_c · (1 − p_c)^γ · log p_c``.

    t is the smoothed target: ``1 − ε/2`` on the true class and ``ε/2`` on the other.
    *alpha* defaults to :func:`class_weights` of *labels*.
    """
    cfg = cfg or LossConfig()
    if probs.dim() != 2 or probs.shape[0] == 0:
        raise ValueError(f"focal_loss: expected a non-empty (B, C) batch, got {tuple(probs.shape)}")
    labels = labels.long()
    if labels.shape[0] != probs.shape[0]:
        raise ValueError("focal_loss: probs and labels disagree on batch size")
    num_classes = probs.shape[1]
    if alpha is None:
        alpha = class_weights(labels, num_classes)
    alpha = alpha.to(probs.dtype)

    eps = cfg.label_smoothing
    target = torch.full_like(probs, eps / num_classes)
    target.scatter_(1, labels.unsqueeze(1), 1.0 - eps + eps / num_classes)

    p = probs.clamp_min(PROB_FLOOR)
    per_class = target * (1.0 - p).pow(cfg.gamma) * torch.log(p)
    per_sample = -alpha[labels] * per_class.sum(dim=1)
    return per_sample.mean()


def aux_loss(recon: torch.Tensor, x_mean: torch.Tensor) -> torch.Tensor:
    """``(1/F)·‖x̂ − x̄‖²`` averaged over the batch."""
    if recon.shape != x_mean.shape:
        raise ValueError(f"aux_loss: shapes differ {tuple(recon.shape)} vs {tuple(x_mean.shape)}")
    return (recon - x_mean).pow(2).mean(dim=-1).mean()


def total_loss(cls: torch.Tensor | float, aux: torch.Tensor | float, aux_weight: float = 0.05) -> torch.Tensor | float:
    return cls + aux_weight * aux
