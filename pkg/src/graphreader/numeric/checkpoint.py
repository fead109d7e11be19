"""Checkpoint file format.

A checkpoint is a single ``.npz`` archive holding

* ``__meta__``   -- a JSON string: ``{"format_version": 1, ...}`` plus
  whatever run metadata the caller passes (config, vocabulary, dims);
* ``param/<name>`` -- one float64 array per parameter, values exactly as
  trained (the format is lossless, so save -> load -> evaluate reproduces
  in-memory results bit for bit).
"""

from __future__ import annotations

import json

import numpy as np

from ..errors import CheckpointError
from .tensor import Tensor

FORMAT_VERSION = 1
_PARAM_PREFIX = "param/"


def save_checkpoint(path, params: dict, meta: dict | None = None) -> None:
    arrays = {}
    for name, p in params.items():
        data = p.data if isinstance(p, Tensor) else np.asarray(p)
        arrays[_PARAM_PREFIX + name] = np.asarray(data, dtype=np.float64)
    meta_full = {"format_version": FORMAT_VERSION}
    meta_full.update(meta or {})
    np.savez(path, __meta__=json.dumps(meta_full, sort_keys=True), **arrays)


def load_checkpoint(path):
    """Returns (params: dict[name, ndarray], meta: dict)."""
    try:
        archive = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if "__meta__" not in archive:
        raise CheckpointError(f"{path} has no checkpoint metadata")
    meta = json.loads(str(archive["__meta__"]))
    version = meta.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint format_version {version!r} (expected {FORMAT_VERSION})"
        )
    params = {}
    for key in archive.files:
        if key.startswith(_PARAM_PREFIX):
            params[key[len(_PARAM_PREFIX):]] = archive[key]
    return params, meta
