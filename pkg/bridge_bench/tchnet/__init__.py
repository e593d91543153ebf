"""TCH-Net inference kernel, losses, parameter accounting and gradient verification."""

from bridge_bench.tchnet.config import Conventions, LossConfig, ModelConfig
from bridge_bench.tchnet.gradcheck import GradcheckResult, gradcheck_cbgaf_focal
from bridge_bench.tchnet.losses import aux_loss, class_weights, focal_loss, total_loss
from bridge_bench.tchnet.model import (
    ForwardDiagnostics,
    TCHNet,
    TCHNetKernel,
    gate_statistics,
    model_forward,
    score_windows,
)
from bridge_bench.tchnet.params import ParameterCount, count_parameters
from bridge_bench.tchnet.weights import WeightStore, build_model, init_weights, load_weights, save_weights

__all__ = [
    "Conventions",
    "ForwardDiagnostics",
    "GradcheckResult",
    "LossConfig",
    "ModelConfig",
    "ParameterCount",
    "TCHNet",
    "TCHNetKernel",
    "WeightStore",
    "aux_loss",
    "build_model",
    "class_weights",
    "count_parameters",
    "focal_loss",
    "gate_statistics",
    "gradcheck_cbgaf_focal",
    "init_weights",
    "load_weights",
    "model_forward",
    "save_weights",
    "score_windows",
    "total_loss",
]
