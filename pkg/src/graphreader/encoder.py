"""LSTM cell and bidirectional sequence encoder.

The cell carries element-wise (diagonal) cell-state feedback into all
three input-side gates at t-1 and into the output gate at t:

    i = sig(x Wxi + h' Whi + wci*c' + bi)
    f = sig(x Wxf + h' Whf + wcf*c' + bf)
    g = tanh(x Wxg + h' Whg + wcg*c' + bg)
    c = i*g + f*c'
    o = sig(x Wxo + h' Who + wco*c + bo)
    h = o * tanh(c)

Gate blocks are packed [i, f, g, o] along the 4h axis. The bidirectional
encoder runs one pass left-to-right and one right-to-left and concatenates
the two states at every position, so the output width is exactly 2h.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ContractError, DimensionError
from .numeric import Tensor, ops


@dataclass
class LstmParams:
    """One direction's parameters: wx (d, 4h), wh (h, 4h), wc (4h,), b (4h,)."""

    wx: Tensor
    wh: Tensor
    wc: Tensor
    b: Tensor

    @property
    def hidden_size(self) -> int:
        return self.wh.shape[0]

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {
            f"{prefix}.wx": self.wx,
            f"{prefix}.wh": self.wh,
            f"{prefix}.wc": self.wc,
            f"{prefix}.b": self.b,
        }


def lstm_cell(x_t: Tensor, h_prev: Tensor, c_prev: Tensor, params: LstmParams):
    """One recurrence step on (1, d) input and (1, h) states; returns (h, c).

    Composed from primitive ops; the sequence encoder uses the fused
    kernel instead, and the two must agree (tested).
    """
    h = params.hidden_size
    if x_t.shape[1] != params.wx.shape[0] or h_prev.shape != (1, h) or c_prev.shape != (1, h):
        raise DimensionError("lstm_cell state shapes are inconsistent with params")
    pre = ops.add(ops.add(ops.matmul(x_t, params.wx), ops.matmul(h_prev, params.wh)),
                  params.b)
    wci = ops.slice_rows(params.wc, 0, h)
    wcf = ops.slice_rows(params.wc, h, 2 * h)
    wcg = ops.slice_rows(params.wc, 2 * h, 3 * h)
    wco = ops.slice_rows(params.wc, 3 * h, 4 * h)
    i_gate = ops.sigmoid(ops.add(ops.slice_cols(pre, 0, h), ops.mul(wci, c_prev)))
    f_gate = ops.sigmoid(ops.add(ops.slice_cols(pre, h, 2 * h), ops.mul(wcf, c_prev)))
    g_gate = ops.tanh(ops.add(ops.slice_cols(pre, 2 * h, 3 * h), ops.mul(wcg, c_prev)))
    c_t = ops.add(ops.mul(i_gate, g_gate), ops.mul(f_gate, c_prev))
    o_gate = ops.sigmoid(ops.add(ops.slice_cols(pre, 3 * h, 4 * h), ops.mul(wco, c_t)))
    h_t = ops.mul(o_gate, ops.tanh(c_t))
    return h_t, c_t


def lstm_encode(x: Tensor, params: LstmParams, reverse: bool = False) -> Tensor:
    """One direction over the whole sequence via the fused kernel; (l, h)."""
    return ops.lstm_seq(x, params.wx, params.wh, params.wc, params.b, reverse=reverse)


def bilstm_encode(x: Tensor, fwd: LstmParams, bwd: LstmParams) -> Tensor:
    """Bidirectional encoding of an (l, d) sequence; rows are [fwd_t || bwd_t]."""
    if x.data.ndim != 2 or x.shape[0] == 0:
        raise ContractError("bilstm_encode needs a non-empty (l, d) sequence")
    h_fwd = lstm_encode(x, fwd, reverse=False)
    h_bwd = lstm_encode(x, bwd, reverse=True)
    return ops.concat([h_fwd, h_bwd], axis=1)
