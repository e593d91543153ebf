"""Tests for bridge_bench.tchnet.losses."""

from __future__ import annotations

import math

import pytest
import torch

from bridge_bench.tchnet import LossConfig, aux_loss, class_weights, focal_loss, total_loss


def _probs(*rows: tuple[float, float]) -> torch.Tensor:
    return torch.tensor(rows, dtype=torch.float64)


class TestClassWeights:
    def test_inverse_frequency_mean_one(self):
        w = class_weights(torch.tensor([0, 0, 0, 1]))
        assert w.tolist() == pytest.approx([0.5, 1.5])

    def test_absent_class_gets_zero(self):
        assert class_weights(torch.tensor([1, 1])).tolist() == [0.0, 1.0]

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            class_weights(torch.tensor([], dtype=torch.long))


class TestFocalLoss:
    def test_reference_value(self):
        loss = focal_loss(
            _probs((0.5, 0.5)),
            torch.tensor([1]),
            LossConfig(gamma=2.0, label_smoothing=0.0),
            alpha=torch.ones(2),
        )
        assert loss.item() == pytest.approx(0.25 * math.log(2), abs=1e-12)

    def test_gamma_zero_is_cross_entropy(self):
        probs = _probs((0.9, 0.1), (0.3, 0.7), (0.6, 0.4))
        labels = torch.tensor([0, 1, 1])
        loss = focal_loss(probs, labels, LossConfig(gamma=0.0, label_smoothing=0.0), alpha=torch.ones(2))
        ce = torch.nn.functional.nll_loss(torch.log(probs), labels)
        assert loss.item() == pytest.approx(ce.item(), abs=1e-10)

    def test_label_smoothing_spreads_target(self):
        cfg = LossConfig(gamma=0.0, label_smoothing=0.1)
        loss = focal_loss(_probs((0.2, 0.8)), torch.tensor([1]), cfg, alpha=torch.ones(2))
        expected = -(0.05 * math.log(0.2) + 0.95 * math.log(0.8))
        assert loss.item() == pytest.approx(expected, abs=1e-12)

    def test_default_alpha_is_batch_class_weights(self):
        probs = _probs((0.7, 0.3), (0.6, 0.4), (0.2, 0.8))
        labels = torch.tensor([0, 0, 1])
        cfg = LossConfig(label_smoothing=0.0)
        assert focal_loss(probs, labels, cfg).item() == pytest.approx(
            focal_loss(probs, labels, cfg, alpha=class_weights(labels)).item()
        )

    def test_zero_probability_is_finite(self):
        loss = focal_loss(_probs((1.0, 0.0)), torch.tensor([1]), alpha=torch.ones(2))
        assert math.isfinite(loss.item())

    def test_shape_checks(self):
        with pytest.raises(ValueError):
            focal_loss(torch.zeros(0, 2), torch.zeros(0))
        with pytest.raises(ValueError, match="batch size"):
            focal_loss(_probs((0.5, 0.5)), torch.tensor([0, 1]))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            LossConfig(gamma=-1.0)
        with pytest.raises(ValueError):
            LossConfig(label_smoothing=1.0)


class TestAuxAndTotal:
    def test_aux_is_mean_squared_error(self):
        recon = torch.zeros(2, 4)
        x_mean = torch.tensor([[1.0, 1.0, 1.0, 1.0], [2.0, 0.0, 0.0, 0.0]])
        assert aux_loss(recon, x_mean).item() == pytest.approx((1.0 + 1.0) / 2)

    def test_aux_shape_mismatch(self):
        with pytest.raises(ValueError):
            aux_loss(torch.zeros(2, 4), torch.zeros(2, 3))

    def test_total(self):
        assert total_loss(1.0, 2.0, 0.05) == pytest.approx(1.10)
        assert total_loss(1.0, 2.0) == pytest.approx(1.10)
