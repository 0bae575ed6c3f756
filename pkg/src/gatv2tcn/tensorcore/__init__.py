"""Minimal dense-tensor engine with reverse-mode autodiff and Adam."""

from . import checkpoint, ops
from .ops import (
    ShapeError,
    concat,
    conv1d_time,
    dropout,
    elu,
    embedding_lookup,
    gather_rows,
    leaky_relu,
    linear,
    matmul,
    relu,
    segment_softmax,
    segment_sum,
)
from .optim import GradCheckError, adam_step, grad_check, xavier_uniform
from .tensor import Parameter, Tape, Tensor, active_tape, no_record

__all__ = [
    "GradCheckError",
    "Parameter",
    "ShapeError",
    "Tape",
    "Tensor",
    "active_tape",
    "adam_step",
    "checkpoint",
    "concat",
    "conv1d_time",
    "dropout",
    "elu",
    "embedding_lookup",
    "gather_rows",
    "grad_check",
    "leaky_relu",
    "linear",
    "matmul",
    "no_record",
    "ops",
    "relu",
    "segment_softmax",
    "segment_sum",
    "xavier_uniform",
]
