# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implementations of the hot kernels.

Mirrors _pyref.py function for function; see that module for the shared
conventions (gate order, edge-array layout). Accumulation order matches
the numpy path edge for edge, so both backends are deterministic.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, tanh

BACKEND = "compiled"


cdef inline double _sig(double x) noexcept nogil:
    cdef double e
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


def lstm_seq_forward(double[:, ::1] xp, double[:, ::1] wh, double[::1] wc):
    cdef Py_ssize_t l = xp.shape[0]
    cdef Py_ssize_t four_h = xp.shape[1]
    cdef Py_ssize_t h = four_h // 4
    I_arr = np.empty((l, h))
    F_arr = np.empty((l, h))
    G_arr = np.empty((l, h))
    O_arr = np.empty((l, h))
    C_arr = np.empty((l, h))
    TC_arr = np.empty((l, h))
    H_arr = np.empty((l, h))
    cdef double[:, ::1] I = I_arr, F = F_arr, G = G_arr, O = O_arr
    cdef double[:, ::1] C = C_arr, TC = TC_arr, H = H_arr
    pre_arr = np.empty(four_h)
    cdef double[::1] pre = pre_arr
    cdef Py_ssize_t t, j, k
    cdef double hv, cp, i_, f_, g_, c_, o_, tc_
    with nogil:
        for t in range(l):
            for j in range(four_h):
                pre[j] = xp[t, j]
            if t > 0:
                for k in range(h):
                    hv = H[t - 1, k]
                    for j in range(four_h):
                        pre[j] += hv * wh[k, j]
            for k in range(h):
                cp = C[t - 1, k] if t > 0 else 0.0
                i_ = _sig(pre[k] + wc[k] * cp)
                f_ = _sig(pre[h + k] + wc[h + k] * cp)
                g_ = tanh(pre[2 * h + k] + wc[2 * h + k] * cp)
                c_ = i_ * g_ + f_ * cp
                o_ = _sig(pre[3 * h + k] + wc[3 * h + k] * c_)
                tc_ = tanh(c_)
                I[t, k] = i_
                F[t, k] = f_
                G[t, k] = g_
                O[t, k] = o_
                C[t, k] = c_
                TC[t, k] = tc_
                H[t, k] = o_ * tc_
    return H_arr, (I_arr, F_arr, G_arr, O_arr, C_arr, TC_arr)


def lstm_seq_backward(double[:, ::1] dh_out, double[:, ::1] wh, double[::1] wc,
                      double[:, ::1] H, cache):
    I_arr, F_arr, G_arr, O_arr, C_arr, TC_arr = cache
    cdef double[:, ::1] I = I_arr, F = F_arr, G = G_arr, O = O_arr
    cdef double[:, ::1] C = C_arr, TC = TC_arr
    cdef Py_ssize_t l = dh_out.shape[0]
    cdef Py_ssize_t h = dh_out.shape[1]
    cdef Py_ssize_t four_h = 4 * h
    dxp_arr = np.empty((l, four_h))
    dwh_arr = np.zeros((h, four_h))
    dwc_arr = np.zeros(four_h)
    cdef double[:, ::1] dxp = dxp_arr, dwh = dwh_arr
    cdef double[::1] dwc = dwc_arr
    dh_next_arr = np.zeros(h)
    dc_next_arr = np.zeros(h)
    dpre_arr = np.empty(four_h)
    cdef double[::1] dh_next = dh_next_arr, dc_next = dc_next_arr, dpre = dpre_arr
    cdef Py_ssize_t t, j, k
    cdef double cp, hp, dh_, dc, do_, dpo, di, dpi, dg, dpg, df, dpf, acc
    with nogil:
        for t in range(l - 1, -1, -1):
            for k in range(h):
                cp = C[t - 1, k] if t > 0 else 0.0
                dh_ = dh_out[t, k] + dh_next[k]
                do_ = dh_ * TC[t, k]
                dpo = do_ * O[t, k] * (1.0 - O[t, k])
                dc = dc_next[k] + dh_ * O[t, k] * (1.0 - TC[t, k] * TC[t, k]) \
                    + dpo * wc[3 * h + k]
                di = dc * G[t, k]
                dpi = di * I[t, k] * (1.0 - I[t, k])
                dg = dc * I[t, k]
                dpg = dg * (1.0 - G[t, k] * G[t, k])
                df = dc * cp
                dpf = df * F[t, k] * (1.0 - F[t, k])
                dc_next[k] = dc * F[t, k] + dpi * wc[k] + dpf * wc[h + k] \
                    + dpg * wc[2 * h + k]
                dpre[k] = dpi
                dpre[h + k] = dpf
                dpre[2 * h + k] = dpg
                dpre[3 * h + k] = dpo
                dwc[k] += dpi * cp
                dwc[h + k] += dpf * cp
                dwc[2 * h + k] += dpg * cp
                dwc[3 * h + k] += dpo * C[t, k]
            for j in range(four_h):
                dxp[t, j] = dpre[j]
            if t > 0:
                for k in range(h):
                    hp = H[t - 1, k]
                    for j in range(four_h):
                        dwh[k, j] += hp * dpre[j]
            for k in range(h):
                acc = 0.0
                for j in range(four_h):
                    acc += dpre[j] * wh[k, j]
                dh_next[k] = acc
    return dxp_arr, dwh_arr, dwc_arr


def edge_attention_forward(double[:, ::1] u, double[:, ::1] v, double[:, :, ::1] p,
                           cnp.int64_t[::1] recv, cnp.int64_t[::1] send,
                           cnp.int64_t[::1] seg_ptr, double[::1] inv_deg,
                           double slope):
    cdef Py_ssize_t m = p.shape[0]
    cdef Py_ssize_t K = p.shape[1]
    cdef Py_ssize_t dh = p.shape[2]
    cdef Py_ssize_t E = recv.shape[0]
    msg_arr = np.zeros((m, K, dh))
    if E == 0:
        return msg_arr, np.zeros((0, K)), np.zeros((0, K))
    alpha_arr = np.empty((E, K))
    s_pre_arr = np.empty((E, K))
    cdef double[:, :, ::1] msg = msg_arr
    cdef double[:, ::1] alpha = alpha_arr, s_pre = s_pre_arr
    cdef Py_ssize_t S = seg_ptr.shape[0] - 1
    cdef Py_ssize_t e, k, d, si, a, b
    cdef cnp.int64_t r, s
    cdef double x, mx, z, w
    with nogil:
        for e in range(E):
            r = recv[e]
            s = send[e]
            for k in range(K):
                x = u[r, k] + v[s, k]
                s_pre[e, k] = x
                alpha[e, k] = x if x >= 0.0 else slope * x
        for si in range(S):
            a = seg_ptr[si]
            b = seg_ptr[si + 1]
            for k in range(K):
                mx = alpha[a, k]
                for e in range(a + 1, b):
                    if alpha[e, k] > mx:
                        mx = alpha[e, k]
                z = 0.0
                for e in range(a, b):
                    x = exp(alpha[e, k] - mx)
                    alpha[e, k] = x
                    z += x
                for e in range(a, b):
                    alpha[e, k] /= z
        for e in range(E):
            r = recv[e]
            s = send[e]
            for k in range(K):
                w = alpha[e, k] * inv_deg[e]
                for d in range(dh):
                    msg[r, k, d] += w * p[s, k, d]
    return msg_arr, alpha_arr, s_pre_arr


def edge_attention_backward(double[:, :, ::1] dmsg, double[:, :, ::1] p,
                            double[:, ::1] alpha, double[:, ::1] s_pre,
                            cnp.int64_t[::1] recv, cnp.int64_t[::1] send,
                            cnp.int64_t[::1] seg_ptr, double[::1] inv_deg,
                            double slope):
    cdef Py_ssize_t m = p.shape[0]
    cdef Py_ssize_t K = p.shape[1]
    cdef Py_ssize_t dh = p.shape[2]
    cdef Py_ssize_t E = recv.shape[0]
    dp_arr = np.zeros((m, K, dh))
    du_arr = np.zeros((m, K))
    dv_arr = np.zeros((m, K))
    if E == 0:
        return dp_arr, du_arr, dv_arr
    cdef double[:, :, ::1] dp = dp_arr
    cdef double[:, ::1] du = du_arr, dv = dv_arr
    ds_arr = np.empty((E, K))
    cdef double[:, ::1] ds = ds_arr
    cdef Py_ssize_t S = seg_ptr.shape[0] - 1
    cdef Py_ssize_t e, k, d, si, a, b
    cdef cnp.int64_t r, s
    cdef double w, acc, dot
    with nogil:
        for e in range(E):
            r = recv[e]
            s = send[e]
            for k in range(K):
                w = alpha[e, k] * inv_deg[e]
                acc = 0.0
                for d in range(dh):
                    dp[s, k, d] += w * dmsg[r, k, d]
                    acc += dmsg[r, k, d] * p[s, k, d]
                ds[e, k] = acc * inv_deg[e]  # d(loss)/d(alpha) for now
        for si in range(S):
            a = seg_ptr[si]
            b = seg_ptr[si + 1]
            for k in range(K):
                dot = 0.0
                for e in range(a, b):
                    dot += alpha[e, k] * ds[e, k]
                for e in range(a, b):
                    ds[e, k] = alpha[e, k] * (ds[e, k] - dot)
        for e in range(E):
            r = recv[e]
            s = send[e]
            for k in range(K):
                w = ds[e, k] if s_pre[e, k] >= 0.0 else slope * ds[e, k]
                du[r, k] += w
                dv[s, k] += w
    return dp_arr, du_arr, dv_arr
