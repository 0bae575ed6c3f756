"""Dense float64 tensors with a reverse-mode tape."""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np

_state = threading.local()


def _tape_stack() -> list["Tape"]:
    if not hasattr(_state, "stack"):
        _state.stack = []
    return _state.stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """A float64 array that optionally records how it was produced.

    Ops only record when a :class:`Tape` is active and at least one input
    requires a gradient, so inference outside a tape is a pure numpy pass.
    """

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    # arithmetic sugar; the implementations live in ops
    def __add__(self, other):
        from . import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops

        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, other)

    def __neg__(self):
        from . import ops

        return ops.mul(self, -1.0)


class Parameter(Tensor):
    """Learnable tensor carrying Adam moment estimates."""

    __slots__ = ("m", "v", "step")

    def __init__(self, data, name: str | None = None):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True, name=name)
        self.m = np.zeros_like(self.data)
        self.v = np.zeros_like(self.data)
        self.step = 0


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager; ops executed inside append a record. Backward
    walks the records in exact reverse order and accumulates gradients
    additively, so fan-out is handled without special casing.
    """

    def __init__(self):
        self.records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()

    def record(self, out: Tensor, inputs: Sequence[Tensor], backward: Callable) -> None:
        self.records.append((out, tuple(inputs), backward))

    def backward(self, loss: Tensor, seed: np.ndarray | None = None) -> None:
        if seed is None:
            if loss.data.size != 1:
                raise ValueError("backward without a seed needs a scalar loss")
            seed = np.ones_like(loss.data)
        loss.grad = np.asarray(seed, dtype=np.float64) + (0.0 if loss.grad is None else loss.grad)
        for out, inputs, backward in reversed(self.records):
            if out.grad is None:
                continue
            grads = backward(out.grad)
            for inp, g in zip(inputs, grads):
                if g is None or not inp.requires_grad:
                    continue
                if inp.grad is None:
                    inp.grad = np.array(g, dtype=np.float64)
                else:
                    inp.grad = inp.grad + g


@contextmanager
def no_record():
    """Suspend recording for the enclosed block."""
    stack = _tape_stack()
    saved = list(stack)
    stack.clear()
    try:
        yield
    finally:
        stack.extend(saved)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)
