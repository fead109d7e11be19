"""Backend parity: the compiled kernels must match the numpy reference."""

import numpy as np
import pytest

from graphreader import kernels
from graphreader.kernels import _pyref

try:
    from graphreader.kernels import _ckern
except ImportError:
    _ckern = None

needs_ext = pytest.mark.skipif(_ckern is None, reason="compiled extension not built")


def _lstm_case(rng, l=7, h=5):
    xp = rng.normal(size=(l, 4 * h))
    wh = rng.normal(size=(h, 4 * h)) * 0.4
    wc = rng.normal(size=4 * h) * 0.4
    return xp, wh, wc


def _edge_case(rng, m=9, K=3, dh=4, E=20):
    p = rng.normal(size=(m, K, dh))
    u = rng.normal(size=(m, K))
    v = rng.normal(size=(m, K))
    recv = np.sort(rng.integers(0, m, size=E)).astype(np.int64)
    send = rng.integers(0, m, size=E).astype(np.int64)
    uniq, counts = np.unique(recv, return_counts=True)
    seg_ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    inv_deg = np.concatenate([np.full(c, 1.0 / c) for c in counts])
    return u, v, p, recv, send, seg_ptr, inv_deg


@needs_ext
@pytest.mark.parametrize("seed", range(5))
def test_lstm_parity(seed):
    rng = np.random.default_rng(seed)
    xp, wh, wc = _lstm_case(rng)
    h_py, cache_py = _pyref.lstm_seq_forward(xp, wh, wc)
    h_c, cache_c = _ckern.lstm_seq_forward(xp, wh, wc)
    np.testing.assert_allclose(h_c, h_py, atol=1e-14)
    dh_out = rng.normal(size=h_py.shape)
    grads_py = _pyref.lstm_seq_backward(dh_out, wh, wc, h_py, cache_py)
    grads_c = _ckern.lstm_seq_backward(dh_out, wh, wc, h_c, cache_c)
    for g_py, g_c in zip(grads_py, grads_c):
        np.testing.assert_allclose(g_c, g_py, atol=1e-13)


@needs_ext
@pytest.mark.parametrize("seed", range(5))
def test_edge_attention_parity(seed):
    rng = np.random.default_rng(100 + seed)
    u, v, p, recv, send, seg_ptr, inv_deg = _edge_case(rng)
    out_py = _pyref.edge_attention_forward(u, v, p, recv, send, seg_ptr, inv_deg, 0.2)
    out_c = _ckern.edge_attention_forward(u, v, p, recv, send, seg_ptr, inv_deg, 0.2)
    for a, b in zip(out_py, out_c):
        np.testing.assert_allclose(b, a, atol=1e-14)
    dmsg = rng.normal(size=p.shape)
    g_py = _pyref.edge_attention_backward(dmsg, p, out_py[1], out_py[2],
                                          recv, send, seg_ptr, inv_deg, 0.2)
    g_c = _ckern.edge_attention_backward(dmsg, p, out_c[1], out_c[2],
                                         recv, send, seg_ptr, inv_deg, 0.2)
    for a, b in zip(g_py, g_c):
        np.testing.assert_allclose(b, a, atol=1e-13)


@needs_ext
def test_edge_attention_empty_relation():
    empty = np.zeros(0, dtype=np.int64)
    p = np.zeros((4, 2, 3))
    for impl in (_pyref, _ckern):
        msg, alpha, s_pre = impl.edge_attention_forward(
            np.zeros((4, 2)), np.zeros((4, 2)), p, empty, empty,
            np.zeros(1, dtype=np.int64), np.zeros(0), 0.2)
        assert msg.shape == (4, 2, 3) and not msg.any()
        assert alpha.shape == (0, 2)


def test_selected_backend_reports_name():
    assert kernels.backend() in ("compiled", "python")


def test_ops_work_on_forced_python_backend(monkeypatch):
    """The op layer must behave identically when the fallback is selected."""
    from graphreader.numeric import Tensor, grad_check, ops

    monkeypatch.setattr(kernels, "lstm_seq_forward", _pyref.lstm_seq_forward)
    monkeypatch.setattr(kernels, "lstm_seq_backward", _pyref.lstm_seq_backward)
    monkeypatch.setattr(kernels, "edge_attention_forward", _pyref.edge_attention_forward)
    monkeypatch.setattr(kernels, "edge_attention_backward", _pyref.edge_attention_backward)
    rng = np.random.default_rng(0)
    x = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    wx = Tensor(rng.normal(size=(3, 8)) * 0.4, requires_grad=True)
    wh = Tensor(rng.normal(size=(2, 8)) * 0.4, requires_grad=True)
    wc = Tensor(rng.normal(size=8) * 0.4, requires_grad=True)
    b = Tensor(rng.normal(size=8) * 0.4, requires_grad=True)

    def f(*_):
        return ops.sum_all(ops.tanh(ops.lstm_seq(x, wx, wh, wc, b)))

    assert grad_check(f, [x, wx, wh, wc, b], floor=1e-6) < 1e-4
