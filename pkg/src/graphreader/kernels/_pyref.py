"""Pure-numpy reference implementations of the hot kernels.

The compiled twin (``_ckern``) implements the same functions with the same
signatures; ``graphreader.kernels`` picks one at import time. Keep the two
in lockstep: every change here must land in the .pyx as well.

Conventions shared by both backends:

* LSTM gate order along the 4h axis is [input, forget, cell, output].
* Edge arrays describe one relation of one graph, directed (each
  undirected edge appears once per direction), sorted by receiver, with
  ``seg_ptr`` delimiting the per-receiver segments.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm_seq_forward(xp, wh, wc):
    """Run an LSTM over a whole sequence.

    xp: (l, 4h) input projections incl. bias; wh: (h, 4h) recurrent
    weights; wc: (4h,) element-wise cell-state (peephole) weights. The
    cell-gate and both input-side peepholes read c_{t-1}; the output-gate
    peephole reads c_t.

    Returns (H, cache) where H is (l, h) hidden states and cache holds the
    per-step activations the backward pass needs.
    """
    l, four_h = xp.shape
    h = four_h // 4
    I = np.empty((l, h))
    F = np.empty((l, h))
    G = np.empty((l, h))
    O = np.empty((l, h))
    C = np.empty((l, h))
    TC = np.empty((l, h))
    H = np.empty((l, h))
    wci, wcf, wcg, wco = wc[:h], wc[h : 2 * h], wc[2 * h : 3 * h], wc[3 * h :]
    h_prev = np.zeros(h)
    c_prev = np.zeros(h)
    for t in range(l):
        pre = xp[t] + h_prev @ wh
        i_t = _sigmoid(pre[:h] + wci * c_prev)
        f_t = _sigmoid(pre[h : 2 * h] + wcf * c_prev)
        g_t = np.tanh(pre[2 * h : 3 * h] + wcg * c_prev)
        c_t = i_t * g_t + f_t * c_prev
        o_t = _sigmoid(pre[3 * h :] + wco * c_t)
        tc_t = np.tanh(c_t)
        h_t = o_t * tc_t
        I[t], F[t], G[t], O[t], C[t], TC[t], H[t] = i_t, f_t, g_t, o_t, c_t, tc_t, h_t
        h_prev, c_prev = h_t, c_t
    return H, (I, F, G, O, C, TC)


def lstm_seq_backward(dh_out, wh, wc, H, cache):
    """Backward pass matching lstm_seq_forward.

    dh_out: (l, h) gradient w.r.t. H. Returns (dxp, dwh, dwc).
    """
    I, F, G, O, C, TC = cache
    l, h = dh_out.shape
    wci, wcf, wcg, wco = wc[:h], wc[h : 2 * h], wc[2 * h : 3 * h], wc[3 * h :]
    dxp = np.empty((l, 4 * h))
    dwh = np.zeros_like(wh)
    dwc = np.zeros_like(wc)
    dh_next = np.zeros(h)
    dc_next = np.zeros(h)
    for t in range(l - 1, -1, -1):
        c_prev = C[t - 1] if t > 0 else np.zeros(h)
        h_prev = H[t - 1] if t > 0 else np.zeros(h)
        dh = dh_out[t] + dh_next
        do = dh * TC[t]
        dpre_o = do * O[t] * (1.0 - O[t])
        dc = dc_next + dh * O[t] * (1.0 - TC[t] ** 2) + dpre_o * wco
        di = dc * G[t]
        dpre_i = di * I[t] * (1.0 - I[t])
        dg = dc * I[t]
        dpre_g = dg * (1.0 - G[t] ** 2)
        df = dc * c_prev
        dpre_f = df * F[t] * (1.0 - F[t])
        dc_next = dc * F[t] + dpre_i * wci + dpre_f * wcf + dpre_g * wcg
        dpre = np.concatenate([dpre_i, dpre_f, dpre_g, dpre_o])
        dxp[t] = dpre
        dwh += np.outer(h_prev, dpre)
        dwc[:h] += dpre_i * c_prev
        dwc[h : 2 * h] += dpre_f * c_prev
        dwc[2 * h : 3 * h] += dpre_g * c_prev
        dwc[3 * h :] += dpre_o * C[t]
        dh_next = dpre @ wh.T
    return dxp, dwh, dwc


def edge_attention_forward(u, v, p, recv, send, seg_ptr, inv_deg, slope):
    """Attention-weighted neighbor aggregation for one relation.

    u, v: (m, K) per-node attention terms for the receiver / sender side;
    p: (m, K, dh) per-head projected node states; recv/send: (E,) directed
    edge endpoints sorted by recv; seg_ptr: (S+1,) segment boundaries into
    the edge arrays (one segment per receiver with edges); inv_deg: (E,)
    1/|neighborhood| of the receiver; slope: leaky-relu negative slope.

    Returns (msg, alpha, s_pre): msg is (m, K, dh) aggregated messages
    (zero rows for edge-less receivers), alpha the per-segment softmax
    weights (E, K), s_pre the pre-nonlinearity attention logits (E, K).
    """
    m, K, dh = p.shape
    E = recv.shape[0]
    if E == 0:
        return np.zeros((m, K, dh)), np.zeros((0, K)), np.zeros((0, K))
    s_pre = u[recv] + v[send]
    s = np.where(s_pre >= 0.0, s_pre, slope * s_pre)
    starts = seg_ptr[:-1]
    lens = np.diff(seg_ptr)
    seg_max = np.repeat(np.maximum.reduceat(s, starts, axis=0), lens, axis=0)
    ex = np.exp(s - seg_max)
    seg_sum = np.repeat(np.add.reduceat(ex, starts, axis=0), lens, axis=0)
    alpha = ex / seg_sum
    w = alpha * inv_deg[:, None]
    msg = np.zeros((m, K, dh))
    np.add.at(msg, recv, w[:, :, None] * p[send])
    return msg, alpha, s_pre


def edge_attention_backward(dmsg, p, alpha, s_pre, recv, send, seg_ptr, inv_deg, slope):
    """Backward pass matching edge_attention_forward.

    Returns (dp, du, dv) for the aggregation path; the caller folds du/dv
    back into its own projection gradients.
    """
    m, K, dh = p.shape
    E = recv.shape[0]
    if E == 0:
        return np.zeros_like(p), np.zeros((m, K)), np.zeros((m, K))
    dmsg_r = dmsg[recv]
    w = alpha * inv_deg[:, None]
    dp = np.zeros_like(p)
    np.add.at(dp, send, w[:, :, None] * dmsg_r)
    dw = np.einsum("ekd,ekd->ek", dmsg_r, p[send])
    dalpha = dw * inv_deg[:, None]
    starts = seg_ptr[:-1]
    lens = np.diff(seg_ptr)
    seg_dot = np.repeat(
        np.add.reduceat(alpha * dalpha, starts, axis=0), lens, axis=0
    )
    ds = alpha * (dalpha - seg_dot)
    ds_pre = np.where(s_pre >= 0.0, ds, slope * ds)
    du = np.zeros((m, K))
    np.add.at(du, recv, ds_pre)
    dv = np.zeros((m, K))
    np.add.at(dv, send, ds_pre)
    return dp, du, dv
