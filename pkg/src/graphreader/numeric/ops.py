"""Differentiable operations over Tensors.

Every op computes eagerly, validates the result is finite, and (when a
tape is active and an input wants gradients) records a backward closure.
The hot sequence/graph kernels are fused single records backed by
``graphreader.kernels``; everything else is plain numpy.
"""

from __future__ import annotations

import numpy as np

from .. import kernels
from ..errors import ContractError, DimensionError, EmptySupportError, NonFiniteError
from .tensor import Tensor, active_tape


def _make(name, inputs, out_data, backward) -> Tensor:
    # Sum-then-check: one reduction instead of a full isfinite scan. A NaN
    # or Inf anywhere poisons the sum (Inf pairs become NaN), so nothing
    # non-finite slips through for the bounded values this engine holds.
    if not np.isfinite(out_data.sum()):
        raise NonFiniteError(f"non-finite values out of op '{name}'")
    tape = active_tape()
    requires = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=requires)
    if requires:
        tape.record(name, inputs, out, backward)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcasted gradient back down to `shape`."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------------------
# arithmetic
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def backward(dout):
        return (_unbroadcast(dout, a.shape), _unbroadcast(dout, b.shape))

    return _make("add", (a, b), out, backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data

    def backward(dout):
        return (_unbroadcast(dout, a.shape), _unbroadcast(-dout, b.shape))

    return _make("sub", (a, b), out, backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Element-wise product with numpy broadcasting."""
    out = a.data * b.data
    ad, bd = a.data, b.data

    def backward(dout):
        return (_unbroadcast(dout * bd, a.shape), _unbroadcast(dout * ad, b.shape))

    return _make("mul", (a, b), out, backward)


def neg(a: Tensor) -> Tensor:
    return _make("neg", (a,), -a.data, lambda dout: (-dout,))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _make("scale", (a,), a.data * c, lambda dout: (dout * c,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two 2-D tensors; dA = dC.Bt, dB = At.dC."""
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError(
            f"matmul needs 2-D operands, got {a.data.ndim}-D and {b.data.ndim}-D"
        )
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} x {b.shape}")
    out = a.data @ b.data
    ad, bd = a.data, b.data

    def backward(dout):
        da = dout @ bd.T if a.requires_grad else None
        db = ad.T @ dout if b.requires_grad else None
        return (da, db)

    return _make("matmul", (a, b), out, backward)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise DimensionError("transpose expects a 2-D tensor")
    return _make("transpose", (a,), a.data.T.copy(), lambda dout: (dout.T,))


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return _make(
        "reshape", (a,), a.data.reshape(shape).copy(), lambda dout: (dout.reshape(old),)
    )


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(dout):
        return tuple(np.split(dout, bounds, axis=axis))

    return _make("concat", tuple(tensors), out, backward)


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous slice [start, stop) along axis 0."""
    if not 0 <= start < stop <= a.shape[0]:
        raise DimensionError(f"row slice [{start}, {stop}) outside {a.shape}")
    out = a.data[start:stop].copy()
    shape = a.shape

    def backward(dout):
        g = np.zeros(shape)
        g[start:stop] = dout
        return (g,)

    return _make("slice_rows", (a,), out, backward)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous slice [start, stop) along axis 1 of a 2-D tensor."""
    if a.data.ndim != 2:
        raise DimensionError("slice_cols expects a 2-D tensor")
    if not 0 <= start < stop <= a.shape[1]:
        raise DimensionError(f"column slice [{start}, {stop}) outside {a.shape}")
    out = a.data[:, start:stop].copy()
    shape = a.shape

    def backward(dout):
        g = np.zeros(shape)
        g[:, start:stop] = dout
        return (g,)

    return _make("slice_cols", (a,), out, backward)


def gather_rows(a: Tensor, idx) -> Tensor:
    """Select rows by (possibly repeated) index array."""
    idx = np.asarray(idx, dtype=np.intp)
    out = a.data[idx]
    shape = a.shape

    def backward(dout):
        g = np.zeros(shape)
        np.add.at(g, idx, dout)
        return (g,)

    return _make("gather_rows", (a,), out, backward)


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _make(
        "sum_all", (a,), np.asarray(a.data.sum()), lambda dout: (np.full(shape, float(dout)),)
    )


def sum_axis(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)
    shape = a.shape

    def backward(dout):
        g = dout if keepdims else np.expand_dims(dout, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make("sum_axis", (a,), out, backward)


def pick(a: Tensor, index: int) -> Tensor:
    """Scalar element of a 1-D tensor."""
    if a.data.ndim != 1:
        raise DimensionError("pick expects a 1-D tensor")
    if not 0 <= index < a.shape[0]:
        raise ContractError(f"index {index} outside length {a.shape[0]}")
    n = a.shape[0]

    def backward(dout):
        g = np.zeros(n)
        g[index] = float(dout)
        return (g,)

    return _make("pick", (a,), np.asarray(a.data[index]), backward)


def vec_max(a: Tensor) -> Tensor:
    """Max of a 1-D tensor; gradient flows to the first max position."""
    if a.data.ndim != 1 or a.shape[0] == 0:
        raise DimensionError("vec_max expects a non-empty 1-D tensor")
    k = int(np.argmax(a.data))
    n = a.shape[0]

    def backward(dout):
        g = np.zeros(n)
        g[k] = float(dout)
        return (g,)

    return _make("vec_max", (a,), np.asarray(a.data[k]), backward)


# ---------------------------------------------------------------------------
# nonlinearities and normalizers
# ---------------------------------------------------------------------------


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _make("tanh", (a,), out, lambda dout: (dout * (1.0 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    out = _stable_sigmoid(a.data)
    return _make("sigmoid", (a,), out, lambda dout: (dout * out * (1.0 - out),))


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _make("exp", (a,), out, lambda dout: (dout * out,))


def log(a: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    ad = a.data
    return _make("log", (a,), out, lambda dout: (dout / ad,))


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    pos = a.data >= 0
    out = np.where(pos, a.data, slope * a.data)
    return _make("leaky_relu", (a,), out, lambda dout: (np.where(pos, dout, slope * dout),))


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax of a 2-D tensor, max-subtracted for stability."""
    if a.data.ndim != 2:
        raise DimensionError("softmax_rows expects a 2-D tensor")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def backward(dout):
        dot = (out * dout).sum(axis=1, keepdims=True)
        return (out * (dout - dot),)

    return _make("softmax_rows", (a,), out, backward)


def masked_softmax(a: Tensor, mask) -> Tensor:
    """Softmax of a 1-D tensor restricted to the True positions of `mask`.

    Masked positions come out exactly 0; the unmasked ones are positive
    and sum to 1. Raises EmptySupportError when the mask is all False.
    """
    if a.data.ndim != 1:
        raise DimensionError("masked_softmax expects a 1-D tensor")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape:
        raise DimensionError(f"mask shape {mask.shape} does not match {a.shape}")
    if not mask.any():
        raise EmptySupportError("masked_softmax over an all-False mask")
    mx = a.data[mask].max()
    e = np.zeros_like(a.data)
    e[mask] = np.exp(a.data[mask] - mx)
    out = e / e.sum()

    def backward(dout):
        dot = float((out * dout).sum())
        return (out * (dout - dot),)

    return _make("masked_softmax", (a,), out, backward)


# ---------------------------------------------------------------------------
# embedding support
# ---------------------------------------------------------------------------


def segment_mean_rows(table: Tensor, flat_idx, seg_ptr) -> Tensor:
    """Per-segment mean of table rows; one output row per segment.

    flat_idx holds row indices for all segments back to back; seg_ptr is
    the (S+1,) boundary array. Every segment must be non-empty.
    """
    flat_idx = np.asarray(flat_idx, dtype=np.intp)
    seg_ptr = np.asarray(seg_ptr, dtype=np.intp)
    lens = np.diff(seg_ptr)
    if np.any(lens <= 0):
        raise ContractError("segment_mean_rows: empty segment")
    rows = table.data[flat_idx]
    out = np.add.reduceat(rows, seg_ptr[:-1], axis=0) / lens[:, None]
    shape = table.shape

    def backward(dout):
        g = np.zeros(shape)
        per_row = np.repeat(dout / lens[:, None], lens, axis=0)
        np.add.at(g, flat_idx, per_row)
        return (g,)

    return _make("segment_mean_rows", (table,), out, backward)


# ---------------------------------------------------------------------------
# fused kernels
# ---------------------------------------------------------------------------


def lstm_seq(x: Tensor, wx: Tensor, wh: Tensor, wc: Tensor, b: Tensor,
             reverse: bool = False) -> Tensor:
    """Full LSTM pass over a sequence as a single tape record.

    x: (l, d); wx: (d, 4h); wh: (h, 4h); wc: (4h,) element-wise peephole
    weights; b: (4h,). With reverse=True the sequence is processed right
    to left and the output rows re-reversed, so row t always corresponds
    to input row t.
    """
    if x.data.ndim != 2 or x.shape[0] == 0:
        raise DimensionError("lstm_seq expects a non-empty (l, d) input")
    if x.shape[1] != wx.shape[0] or wx.shape[1] != wh.shape[1] or \
            wh.shape[0] * 4 != wh.shape[1] or wc.shape != (wx.shape[1],) or \
            b.shape != (wx.shape[1],):
        raise DimensionError("lstm_seq parameter shapes are inconsistent")
    xd = x.data[::-1] if reverse else x.data
    xp = xd @ wx.data + b.data
    H, cache = kernels.lstm_seq_forward(np.ascontiguousarray(xp), wh.data, wc.data)
    out = H[::-1].copy() if reverse else H

    def backward(dout):
        dh = np.ascontiguousarray(dout[::-1]) if reverse else np.ascontiguousarray(dout)
        dxp, dwh, dwc = kernels.lstm_seq_backward(dh, wh.data, wc.data, H, cache)
        dx = None
        if x.requires_grad:
            dx = dxp @ wx.data.T
            if reverse:
                dx = dx[::-1].copy()
        dwx = xd.T @ dxp
        db = dxp.sum(axis=0)
        return (dx, dwx, dwh, dwc, db)

    return _make("lstm_seq", (x, wx, wh, wc, b), out, backward)


def lstm_multi_seq(x_cat: Tensor, seg_ptr, wx: Tensor, wh: Tensor, wc: Tensor,
                   b: Tensor, reverse: bool = False) -> Tensor:
    """Independent LSTM passes over several sequences sharing parameters.

    x_cat holds the sequences back to back along axis 0 and seg_ptr their
    boundaries; each segment starts from a fresh zero state. Batching the
    input/output projections into single matmuls is what makes this
    cheaper than per-sequence calls; the recurrences themselves run per
    segment.
    """
    seg_ptr = np.asarray(seg_ptr, dtype=np.int64)
    if x_cat.data.ndim != 2 or seg_ptr[-1] != x_cat.shape[0]:
        raise DimensionError("lstm_multi_seq segments do not tile the input")
    if np.any(np.diff(seg_ptr) <= 0):
        raise DimensionError("lstm_multi_seq has an empty segment")
    n_total = x_cat.shape[0]
    h = wh.shape[0]
    xp_cat = x_cat.data @ wx.data + b.data
    H_cat = np.empty((n_total, h))
    caches = []
    bounds = list(zip(seg_ptr[:-1], seg_ptr[1:]))
    for lo, hi in bounds:
        xp = xp_cat[lo:hi][::-1] if reverse else xp_cat[lo:hi]
        H, cache = kernels.lstm_seq_forward(np.ascontiguousarray(xp), wh.data, wc.data)
        H_cat[lo:hi] = H[::-1] if reverse else H
        caches.append((H, cache))

    def backward(dout):
        dxp_cat = np.empty((n_total, 4 * h))
        dwh = np.zeros_like(wh.data)
        dwc = np.zeros_like(wc.data)
        for (lo, hi), (H, cache) in zip(bounds, caches):
            dh = dout[lo:hi][::-1] if reverse else dout[lo:hi]
            dxp, dwh_i, dwc_i = kernels.lstm_seq_backward(
                np.ascontiguousarray(dh), wh.data, wc.data, H, cache)
            dxp_cat[lo:hi] = dxp[::-1] if reverse else dxp
            dwh += dwh_i
            dwc += dwc_i
        dx = dxp_cat @ wx.data.T if x_cat.requires_grad else None
        dwx = x_cat.data.T @ dxp_cat
        db = dxp_cat.sum(axis=0)
        return (dx, dwx, dwh, dwc, db)

    return _make("lstm_multi_seq", (x_cat, wx, wh, wc, b), H_cat, backward)


def relation_attention(p: Tensor, a_src: Tensor, a_dst: Tensor, recv, send,
                       seg_ptr, inv_deg, slope: float = 0.2,
                       alpha_sink: list | None = None,
                       scatter_rows=None) -> Tensor:
    """Multi-head attention aggregation over one relation's edges.

    p: (n, 2h) relation-projected states for the relation's incident
    nodes; a_src/a_dst: (K, dh) per-head attention vectors for the
    receiver/sender half; the edge arrays index into p's rows. Without
    `scatter_rows` the output is (n, 2h); with ``scatter_rows=(ids, m)``
    the rows scatter into an (m, 2h) zero matrix at those positions.
    When alpha_sink is given, the (E, K) attention weights are appended
    to it (plain arrays, outside the gradient path).
    """
    K, dh = a_src.shape
    n, width = p.shape
    if K * dh != width or a_dst.shape != (K, dh):
        raise DimensionError("relation_attention head shapes do not tile the node width")
    p4 = p.data.reshape(n, K, dh)
    u = np.einsum("mkd,kd->mk", p4, a_src.data)
    v = np.einsum("mkd,kd->mk", p4, a_dst.data)
    msg, alpha, s_pre = kernels.edge_attention_forward(
        u, v, p4, recv, send, seg_ptr, inv_deg, slope
    )
    if alpha_sink is not None:
        alpha_sink.append(alpha)
    if scatter_rows is None:
        out = msg.reshape(n, width)
    else:
        ids, total = scatter_rows
        out = np.zeros((total, width))
        out[ids] = msg.reshape(n, width)

    def backward(dout):
        if scatter_rows is not None:
            dout = dout[scatter_rows[0]]
        dmsg = np.ascontiguousarray(dout.reshape(n, K, dh))
        dp4, du, dv = kernels.edge_attention_backward(
            dmsg, p4, alpha, s_pre, recv, send, seg_ptr, inv_deg, slope
        )
        dp4 = dp4 + du[:, :, None] * a_src.data[None] + dv[:, :, None] * a_dst.data[None]
        da_src = np.einsum("mk,mkd->kd", du, p4)
        da_dst = np.einsum("mk,mkd->kd", dv, p4)
        return (dp4.reshape(n, width), da_src, da_dst)

    return _make("relation_attention", (p, a_src, a_dst), out, backward)


# ---------------------------------------------------------------------------
# composite helpers
# ---------------------------------------------------------------------------


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b with b broadcast over rows."""
    return add(matmul(x, w), b)


def constant(data) -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=False)
