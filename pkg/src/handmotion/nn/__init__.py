"""Minimal tensor + reverse-mode gradient engine and training utilities."""

from .checkpoint import load_checkpoint, save_checkpoint
from .optim import Adam
from .params import ParamStore, fan_in_uniform
from .tensor import (
    Tensor,
    add,
    as_tensor,
    causal_conv1d,
    clamp_min,
    cosine_similarity_matrix,
    div,
    dropout,
    exp,
    l1_normalize,
    linear,
    log,
    matmul,
    mul,
    narrow,
    pad_front_rows,
    relu,
    reshape,
    set_finite_checks,
    sigmoid,
    softmax,
    stack_rows,
    sub,
    tmean,
    tsum,
)

__all__ = [
    "Adam",
    "ParamStore",
    "Tensor",
    "add",
    "as_tensor",
    "causal_conv1d",
    "clamp_min",
    "cosine_similarity_matrix",
    "div",
    "dropout",
    "exp",
    "fan_in_uniform",
    "l1_normalize",
    "linear",
    "load_checkpoint",
    "log",
    "matmul",
    "mul",
    "narrow",
    "pad_front_rows",
    "relu",
    "reshape",
    "save_checkpoint",
    "set_finite_checks",
    "sigmoid",
    "softmax",
    "stack_rows",
    "sub",
    "tmean",
    "tsum",
]
