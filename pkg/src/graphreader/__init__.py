"""Heterogeneous graph attention reader for multi-hop reading comprehension."""

from .kernels import backend as kernel_backend

__version__ = "0.1.0"
__all__ = ["__version__", "kernel_backend"]
