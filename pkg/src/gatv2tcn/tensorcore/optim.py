from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .tensor import Parameter, Tape, Tensor, no_record


def adam_step(
    params: Iterable[Parameter],
    lr: float = 1e-3,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> None:
    """One bias-corrected Adam update, in place.

    Weight decay is the coupled L2 form: ``wd * param`` is added to the
    gradient before the moment updates. A missing gradient counts as zero.
    """
    b1, b2 = betas
    for p in params:
        g = np.zeros_like(p.data) if p.grad is None else p.grad
        if weight_decay:
            g = g + weight_decay * p.data
        p.step += 1
        p.m = b1 * p.m + (1.0 - b1) * g
        p.v = b2 * p.v + (1.0 - b2) * g * g
        m_hat = p.m / (1.0 - b1**p.step)
        v_hat = p.v / (1.0 - b2**p.step)
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + eps)


def xavier_uniform(rng: np.random.Generator, shape: Sequence[int], fan_in: int, fan_out: int, gain: float = 1.0) -> np.ndarray:
    bound = gain * np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=tuple(shape))


class GradCheckError(ValueError):
    pass


def grad_check(f: Callable[..., Tensor], inputs: Sequence[Tensor], h: float = 1e-6) -> float:
    """Max elementwise relative error between tape and central-difference gradients.

    ``f`` maps the input tensors to a scalar tensor. The error for one element
    is ``|g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|)``.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    saved = [(t.requires_grad, t.grad) for t in inputs]
    for t in inputs:
        t.data = np.ascontiguousarray(t.data)
        t.requires_grad = True
        t.grad = None
    with Tape() as tape:
        out = f(*inputs)
    if out.data.size != 1 or not np.all(np.isfinite(out.data)):
        raise GradCheckError(f"objective must be a finite scalar, got {out.data}")
    tape.backward(out)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]

    def value() -> float:
        with no_record():
            v = float(np.asarray(f(*inputs).data).reshape(-1)[0])
        if not np.isfinite(v):
            raise GradCheckError("objective became non-finite under perturbation")
        return v

    worst = 0.0
    for t, g_ad in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        g_flat = g_ad.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            plus = value()
            flat[idx] = orig - h
            minus = value()
            flat[idx] = orig
            g_fd = (plus - minus) / (2.0 * h)
            err = abs(g_flat[idx] - g_fd) / max(1e-8, abs(g_flat[idx]) + abs(g_fd))
            worst = max(worst, err)
    for t, (req, grad) in zip(inputs, saved):
        t.requires_grad, t.grad = req, grad
    return worst
