"""Hot-kernel backend selection.

Tries the compiled Cython extension first and falls back to the numpy
reference implementation. ``GRAPHREADER_KERNELS=py`` forces the fallback,
``GRAPHREADER_KERNELS=c`` makes a missing extension a hard error.
"""

import os

from . import _pyref

_forced = os.environ.get("GRAPHREADER_KERNELS", "").strip().lower()

if _forced == "py":
    _impl = _pyref
elif _forced == "c":
    from . import _ckern as _impl  # noqa: F401  (hard requirement)
else:
    try:
        from . import _ckern as _impl
    except ImportError:
        _impl = _pyref

BACKEND = _impl.BACKEND

lstm_seq_forward = _impl.lstm_seq_forward
lstm_seq_backward = _impl.lstm_seq_backward
edge_attention_forward = _impl.edge_attention_forward
edge_attention_backward = _impl.edge_attention_backward


def backend() -> str:
    """Name of the selected backend: 'compiled' or 'python'."""
    return BACKEND
