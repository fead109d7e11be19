"""Finite-difference verification of tape gradients."""

from __future__ import annotations

import numpy as np

from ..errors import ContractError
from .tensor import Tape, Tensor


def grad_check(f, wrt, step: float = 1e-5, floor: float = 1e-12) -> float:
    """Compare tape gradients of a scalar function against central differences.

    ``f`` is called as ``f(*wrt)`` and must return a scalar Tensor; ``wrt``
    is one Tensor or a sequence of them (each must have requires_grad).
    Returns the max over all coordinates of

        |analytic - numeric| / max(|analytic|, |numeric|, floor)

    so a gradient rule that is exactly double the truth reports 0.5.

    The default floor only guards 0/0. Deep compositions can hold
    coordinates whose true gradient is far below the central-difference
    resolution (about eps*|f|/step, ~1e-11 for unit-scale losses), where
    the ratio becomes meaningless noise; pass a floor around 1e-6 there so
    near-zero coordinates are effectively compared in absolute terms.
    """
    tensors = [wrt] if isinstance(wrt, Tensor) else list(wrt)
    for t in tensors:
        if not t.requires_grad:
            raise ContractError("grad_check targets must have requires_grad")
        t.grad = None
    with Tape() as tape:
        out = f(*tensors)
        if out.size != 1:
            raise ContractError("grad_check needs a scalar-valued function")
        tape.backward(out)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy()
                for t in tensors]
    for t in tensors:
        t.grad = None

    worst = 0.0
    for t, ana in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        ana_flat = ana.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = f(*tensors).item()
            flat[i] = orig - step
            f_minus = f(*tensors).item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            a = ana_flat[i]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, rel)
    return worst
