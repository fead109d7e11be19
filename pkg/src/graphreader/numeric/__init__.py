"""Small dense-tensor engine: tape autodiff, ops, Adam, grad checking."""

from . import ops
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import grad_check
from .optim import Adam
from .tensor import Tape, Tensor, active_tape, as_tensor, zero_grads

__all__ = [
    "Adam",
    "Tape",
    "Tensor",
    "active_tape",
    "as_tensor",
    "grad_check",
    "load_checkpoint",
    "ops",
    "save_checkpoint",
    "zero_grads",
]
