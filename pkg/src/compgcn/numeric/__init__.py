"""Reverse-mode autodiff tape, numeric ops, optimiser, gradient checks and checkpoints."""
from .tensor import Tape, Tensor, as_tensor, backward
from .ops import (
    ShapeError,
    activation,
    add,
    add_bias,
    bce_with_label_smoothing,
    circular_correlation,
    dropout,
    elementwise,
    gather_rows,
    linear,
    matmul,
    mean_all,
    mul,
    pairwise_l1,
    pairwise_l2,
    reshape,
    scale,
    scale_rows,
    scatter_add_rows,
    segment_mean,
    softmax_cross_entropy,
    sub,
    sum_all,
    transpose,
)
from .optim import Adam, AdamState, adam_step, xavier_init
from .gradcheck import check_gradients, relative_error
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "Tape",
    "Tensor",
    "as_tensor",
    "backward",
    "ShapeError",
    "activation",
    "add",
    "add_bias",
    "bce_with_label_smoothing",
    "circular_correlation",
    "dropout",
    "elementwise",
    "gather_rows",
    "linear",
    "matmul",
    "mean_all",
    "mul",
    "pairwise_l1",
    "pairwise_l2",
    "reshape",
    "scale",
    "scale_rows",
    "scatter_add_rows",
    "segment_mean",
    "softmax_cross_entropy",
    "sub",
    "sum_all",
    "transpose",
    "Adam",
    "AdamState",
    "adam_step",
    "xavier_init",
    "check_gradients",
    "relative_error",
    "load_checkpoint",
    "save_checkpoint",
]
