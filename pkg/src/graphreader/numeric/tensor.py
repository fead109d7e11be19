"""Dense float64 tensors with a reverse-mode differentiation tape.

A ``Tape`` records every differentiable operation executed while it is
active (ops are eager; the tape only stores backward closures). Calling
``Tape.backward`` on a scalar walks the records in reverse and accumulates
gradients into ``Tensor.grad`` buffers. Running ops with no active tape
skips recording entirely, which is the cheap evaluation path.

Gradients accumulate across tapes until the caller clears them, so a
training step may sum several per-sample losses before one optimizer step.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError

_TAPE_STACK: list["Tape"] = []


def active_tape():
    """The innermost active tape, or None outside any ``with Tape()``."""
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class Tensor:
    """A dense float64 array, optionally tracked for gradients.

    ``grad`` is lazily allocated; ``None`` means "no gradient accumulated
    yet", which reads as zero. ``tape_id`` is the index of the record that
    produced this tensor on the active tape (None for leaves).
    """

    __slots__ = ("data", "requires_grad", "grad", "tape_id")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.tape_id: int | None = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.reshape(()))

    def accumulate_grad(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            raise ContractError(
                f"gradient shape {g.shape} does not match tensor shape {self.shape}"
            )
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def zero_grad(self) -> None:
        """Allocate (or clear) the gradient buffer."""
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        else:
            self.grad.fill(0.0)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=False)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # Operator sugar; the actual rules live in ops.py.
    def __add__(self, other):
        from . import ops

        return ops.add(self, other)

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, other)

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, other)

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, other)

    def __neg__(self):
        from . import ops

        return ops.neg(self)


class OpRecord:
    """One executed op: its inputs, its output, and a backward closure.

    ``backward(dout)`` returns one gradient array (or None) per input,
    aligned with ``inputs``.
    """

    __slots__ = ("name", "inputs", "output", "backward")

    def __init__(self, name, inputs, output, backward):
        self.name = name
        self.inputs = inputs
        self.output = output
        self.backward = backward


class Tape:
    """Ordered log of op records for one forward computation.

    Records are appended in execution order, which is already topological
    (an op can only consume tensors that exist), so the backward pass is a
    single reverse sweep visiting each record exactly once.
    """

    def __init__(self):
        self.records: list[OpRecord] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self

    def record(self, name, inputs, output, backward) -> None:
        output.tape_id = len(self.records)
        self.records.append(OpRecord(name, tuple(inputs), output, backward))

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(tensor) into every reachable tensor's grad.

        ``loss`` must be a scalar produced on this tape. Leaves that do not
        reach the loss are left untouched (their grad stays as-is, i.e.
        zero if freshly cleared).
        """
        if loss.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss.tape_id is None or loss.tape_id >= len(self.records):
            raise ContractError("loss tensor was not produced on this tape")
        loss.accumulate_grad(np.ones_like(loss.data))
        for rec in reversed(self.records):
            dout = rec.output.grad
            if dout is None:
                continue
            grads = rec.backward(dout)
            for t, g in zip(rec.inputs, grads):
                if g is None or not t.requires_grad:
                    continue
                t.accumulate_grad(g)
        # Intermediate grad buffers die with the tape; drop them now so a
        # second backward on the same tape cannot silently double-count.
        for rec in self.records:
            rec.output.grad = None


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def zero_grads(tensors) -> None:
    for t in tensors:
        t.zero_grad()
