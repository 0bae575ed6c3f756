"""Differentiable operations used by the forecaster.

Each op computes its forward value with numpy and, when recording, registers
a closure mapping the output gradient to one gradient per input.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import Tensor, active_tape, as_tensor


class ShapeError(ValueError):
    pass


def _emit(data: np.ndarray, inputs: Sequence[Tensor], backward) -> Tensor:
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs)
    tape = active_tape()
    if needs and tape is not None:
        tape.record(out, inputs, backward)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _segment_reduce(ufunc: np.ufunc, values: np.ndarray, index: np.ndarray, size: int, fill: float) -> np.ndarray:
    """``out[s] = ufunc.reduce(values[index == s])``; empty segments get ``fill``.

    Sort + ``reduceat`` is much faster than ``ufunc.at`` and reduces each
    segment in a fixed (stable) order, so results are deterministic.
    """
    out = np.full((size,) + values.shape[1:], fill)
    if index.size == 0:
        return out
    order = np.argsort(index, kind="stable")
    idx = index[order]
    starts = np.flatnonzero(np.r_[True, idx[1:] != idx[:-1]])
    out[idx[starts]] = ufunc.reduceat(values[order], starts, axis=0)
    return out


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _emit(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _emit(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _emit(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def square(x: Tensor) -> Tensor:
    return _emit(x.data**2, (x,), lambda g: (2.0 * x.data * g,))


def sum(x: Tensor, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    out = x.data.sum(axis=axis)

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _emit(out, (x,), backward)


def mean(x: Tensor) -> Tensor:
    n = x.data.size
    return _emit(x.data.mean(), (x,), lambda g: (np.full(x.shape, g / n),))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    return _emit(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    out = matmul(x, w)
    return out if b is None else add(out, b)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _emit(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    slopes = np.where(x.data > 0, 1.0, slope)
    return _emit(x.data * slopes, (x,), lambda g: (g * slopes,))


def elu(x: Tensor) -> Tensor:
    pos = x.data > 0
    expx = np.exp(np.minimum(x.data, 0.0))
    out = np.where(pos, x.data, expx - 1.0)
    return _emit(out, (x,), lambda g: (g * np.where(pos, 1.0, expx),))


def reshape(x: Tensor, shape) -> Tensor:
    return _emit(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes) -> Tensor:
    inverse = np.argsort(axes)
    return _emit(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _emit(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def gather_rows(x: Tensor, index) -> Tensor:
    index = np.asarray(index, dtype=np.int64)

    def backward(g):
        return (_segment_reduce(np.add, g, index.reshape(-1), x.shape[0], 0.0).reshape(x.shape),)

    return _emit(x.data[index], (x,), backward)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        bad = ids[(ids < 0) | (ids >= table.shape[0])][0]
        raise IndexError(f"embedding id {bad} outside table of {table.shape[0]} rows")
    return gather_rows(table, ids)


def segment_sum(x: Tensor, segment_of, num_segments: int) -> Tensor:
    segment_of = np.asarray(segment_of, dtype=np.int64)
    out = _segment_reduce(np.add, x.data, segment_of, num_segments, 0.0)
    return _emit(out, (x,), lambda g: (g[segment_of],))


def segment_softmax(scores: Tensor, segment_of, num_segments: int | None = None) -> Tensor:
    """Softmax of ``scores`` within groups sharing a segment id.

    ``scores`` has the entry axis first; trailing axes (e.g. heads) are
    normalised independently. The per-segment max is subtracted first.
    """
    scores = as_tensor(scores)
    segment_of = np.asarray(segment_of, dtype=np.int64)
    if segment_of.shape[0] != scores.shape[0]:
        raise ShapeError("segment_of must assign every score entry")
    if num_segments is None:
        num_segments = int(segment_of.max()) + 1 if segment_of.size else 0
    if segment_of.size and (segment_of.min() < 0 or segment_of.max() >= num_segments):
        raise IndexError(f"segment id outside [0, {num_segments})")
    trailing = scores.shape[1:]
    seg_max = _segment_reduce(np.maximum, scores.data, segment_of, num_segments, -np.inf)
    ex = np.exp(scores.data - seg_max[segment_of])
    denom = _segment_reduce(np.add, ex, segment_of, num_segments, 0.0)
    y = ex / denom[segment_of]

    def backward(g):
        dot = _segment_reduce(np.add, g * y, segment_of, num_segments, 0.0)
        return (y * (g - dot[segment_of]),)

    return _emit(y, (scores,), backward)


def conv1d_time(h: Tensor, kernel: Tensor) -> Tensor:
    """Valid cross-correlation along the last (time) axis.

    ``h`` is ``n x c_in x t0`` and ``kernel`` is ``c_out x c_in x k``; the
    result is ``n x c_out x (t0 - k + 1)``.
    """
    n, c_in, t0 = h.shape
    c_out, k_in, k = kernel.shape
    if k_in != c_in:
        raise ShapeError(f"kernel expects {k_in} channels, input has {c_in}")
    if k > t0:
        raise ShapeError(f"kernel width {k} exceeds sequence length {t0}")
    length = t0 - k + 1
    # im2col: cols[n, l, c, tap] = h[n, c, l + tap]
    cols = np.lib.stride_tricks.sliding_window_view(h.data, k, axis=2).transpose(0, 2, 1, 3).reshape(n * length, c_in * k)
    kmat = kernel.data.reshape(c_out, c_in * k)
    out = (cols @ kmat.T).reshape(n, length, c_out).transpose(0, 2, 1)

    def backward(g):
        gmat = g.transpose(0, 2, 1).reshape(n * length, c_out)
        dkernel = (gmat.T @ cols).reshape(c_out, c_in, k)
        dcols = (gmat @ kmat).reshape(n, length, c_in, k)
        dh = np.zeros_like(h.data)
        for tap in range(k):
            dh[:, :, tap : tap + length] += dcols[:, :, :, tap].transpose(0, 2, 1)
        return dh, dkernel

    return _emit(out, (h, kernel), backward)


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    if not training or p == 0.0:
        return x
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if rng is None:
        raise ValueError("dropout in training mode needs an explicit rng")
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return _emit(x.data * keep, (x,), lambda g: (g * keep,))
