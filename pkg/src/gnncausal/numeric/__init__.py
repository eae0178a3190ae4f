"""Numpy-backed tensors, reverse-mode autodiff, RMSProp and distribution helpers."""
from .distributions import (
    LOG_VAR_MAX,
    LOG_VAR_MIN,
    bernoulli_log_lik,
    clamp_log_var,
    gaussian_log_density,
    gaussian_reparam,
    kl_diag_gaussian_std,
    std_normal_log_density,
)
from .optim import RMSProp, rmsprop_step
from .tensor import (
    NonFiniteError,
    ShapeError,
    Tensor,
    add,
    as_tensor,
    backward,
    clip,
    concat,
    exp,
    index,
    log,
    matmul,
    mean,
    mul,
    neg,
    reshape,
    sigmoid,
    softplus,
    square,
    sub,
    sum,
    tanh,
)

__all__ = [
    "LOG_VAR_MAX", "LOG_VAR_MIN", "NonFiniteError", "RMSProp", "ShapeError", "Tensor",
    "add", "as_tensor", "backward", "bernoulli_log_lik", "clamp_log_var", "clip", "concat",
    "exp", "gaussian_log_density", "gaussian_reparam", "index", "kl_diag_gaussian_std", "log",
    "matmul", "mean", "mul", "neg", "reshape", "rmsprop_step", "sigmoid", "softplus", "square",
    "std_normal_log_density", "sub", "sum", "tanh",
]
