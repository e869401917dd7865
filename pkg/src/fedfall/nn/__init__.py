"""Sequence classifier: model, losses, optimizer, gradients, flat views."""

from fedfall.nn.gradcheck import GradCheckReport, finite_difference_grad, gradient_check
from fedfall.nn.losses import bce_loss, fedprox_penalty
from fedfall.nn.model import (
    BN_EPS,
    BN_MOMENTUM,
    NON_TRAINABLE,
    ForwardCache,
    LstmLayer,
    ModelParams,
    commit_batchnorm_stats,
    init_params,
    model_backward,
    model_forward,
    sigmoid,
    zero_grads,
)
from fedfall.nn.optim import AdamState, adam_step
from fedfall.nn.params import (
    ParamManifest,
    grads_to_vector,
    load_params,
    manifest_for,
    params_to_vector,
    save_params,
    vector_to_params,
)

__all__ = [
    "BN_EPS",
    "BN_MOMENTUM",
    "NON_TRAINABLE",
    "AdamState",
    "ForwardCache",
    "GradCheckReport",
    "LstmLayer",
    "ModelParams",
    "ParamManifest",
    "adam_step",
    "bce_loss",
    "commit_batchnorm_stats",
    "fedprox_penalty",
    "finite_difference_grad",
    "grads_to_vector",
    "gradient_check",
    "init_params",
    "load_params",
    "manifest_for",
    "model_backward",
    "model_forward",
    "params_to_vector",
    "save_params",
    "sigmoid",
    "vector_to_params",
    "zero_grads",
]
