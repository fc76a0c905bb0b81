"""Sequence-to-sequence model: parameters, kernels, forward and backward."""

from .params import (
    FORGET_BIAS,
    GATE_ORDER,
    INIT_SCALE,
    ModelHyper,
    ModelParams,
    init_params,
    tensor_specs,
    zero_grads,
    zero_params,
)

__all__ = [
    "FORGET_BIAS",
    "GATE_ORDER",
    "INIT_SCALE",
    "ModelHyper",
    "ModelParams",
    "init_params",
    "tensor_specs",
    "zero_grads",
    "zero_params",
]
