# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled network kernels. Semantics match ersac.kernels._numpy_ref."""

import numpy as np
cimport numpy as cnp
from libc.math cimport tanh, exp

cnp.import_array()

BACKEND = "cython"


def act_policy(list torso_w, list torso_b, cnp.ndarray wp_arr, cnp.ndarray bp_arr, Py_ssize_t idx):
    cdef double[:, ::1] w0 = torso_w[0]
    cdef double[::1] b0 = torso_b[0]
    cdef Py_ssize_t h0 = w0.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] buf_a = np.empty(h0, dtype=np.float64)
    cdef double[::1] h = buf_a
    cdef Py_ssize_t i, j, n_in, n_out, li
    cdef double hv
    for j in range(h0):
        h[j] = tanh(w0[idx, j] + b0[j])

    cdef double[:, ::1] w
    cdef double[::1] b
    cdef cnp.ndarray[cnp.float64_t, ndim=1] buf_b
    cdef double[::1] out
    for li in range(1, len(torso_w)):
        w = torso_w[li]
        b = torso_b[li]
        n_in = w.shape[0]
        n_out = w.shape[1]
        buf_b = np.empty(n_out, dtype=np.float64)
        out = buf_b
        for j in range(n_out):
            out[j] = b[j]
        for i in range(n_in):
            hv = h[i]
            for j in range(n_out):
                out[j] += hv * w[i, j]
        for j in range(n_out):
            out[j] = tanh(out[j])
        h = out

    cdef double[:, ::1] wp = wp_arr
    cdef double[::1] bp = bp_arr
    cdef Py_ssize_t na = wp.shape[1]
    cdef Py_ssize_t nh = wp.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] pi_arr = np.empty(na, dtype=np.float64)
    cdef double[::1] pi = pi_arr
    cdef double m, s
    for j in range(na):
        pi[j] = bp[j]
    for i in range(nh):
        hv = h[i]
        for j in range(na):
            pi[j] += hv * wp[i, j]
    m = pi[0]
    for j in range(1, na):
        if pi[j] > m:
            m = pi[j]
    s = 0.0
    for j in range(na):
        pi[j] = exp(pi[j] - m)
        s += pi[j]
    for j in range(na):
        pi[j] /= s
    return pi_arr


cdef void _matmul(double[:, ::1] x, double[:, ::1] w, double[::1] b, double[:, ::1] out, bint act) noexcept nogil:
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], m = w.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double xv
    for i in range(n):
        for j in range(m):
            out[i, j] = b[j]
        for k in range(d):
            xv = x[i, k]
            for j in range(m):
                out[i, j] += xv * w[k, j]
        if act:
            for j in range(m):
                out[i, j] = tanh(out[i, j])


def forward_batch(list torso_w, list torso_b, cnp.ndarray wp_arr, cnp.ndarray bp_arr,
                  cnp.ndarray wv_arr, cnp.ndarray bv_arr, cnp.ndarray wr_arr, cnp.ndarray br_arr,
                  cnp.ndarray idx_arr):
    cdef double[:, ::1] w0 = torso_w[0]
    cdef double[::1] b0 = torso_b[0]
    cdef long[::1] idx = np.ascontiguousarray(idx_arr, dtype=np.int64)
    cdef Py_ssize_t n = idx.shape[0]
    cdef Py_ssize_t h0 = w0.shape[1]
    cdef Py_ssize_t i, j, li
    cdef cnp.ndarray first = np.empty((n, h0), dtype=np.float64)
    cdef double[:, ::1] hcur = first
    for i in range(n):
        for j in range(h0):
            hcur[i, j] = tanh(w0[idx[i], j] + b0[j])
    hs = [first]

    cdef double[:, ::1] w
    cdef double[::1] b
    cdef cnp.ndarray nxt
    for li in range(1, len(torso_w)):
        w = torso_w[li]
        b = torso_b[li]
        nxt = np.empty((n, w.shape[1]), dtype=np.float64)
        _matmul(hcur, w, b, nxt, True)
        hs.append(nxt)
        hcur = nxt

    cdef double[:, ::1] wp = wp_arr
    cdef double[::1] bp = bp_arr
    cdef Py_ssize_t na = wp.shape[1]
    cdef cnp.ndarray logits_arr = np.empty((n, na), dtype=np.float64)
    _matmul(hcur, wp, bp, logits_arr, False)

    cdef double[::1] wv = wv_arr
    cdef double[::1] bv = bv_arr
    cdef cnp.ndarray value_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] value = value_arr
    cdef Py_ssize_t nh = wv.shape[0]
    cdef double acc
    for i in range(n):
        acc = bv[0]
        for j in range(nh):
            acc += hcur[i, j] * wv[j]
        value[i] = acc

    cdef double[:, :, ::1] wr = wr_arr
    cdef double[:, ::1] br = br_arr
    cdef Py_ssize_t nk = wr.shape[0]
    cdef cnp.ndarray preds_arr = np.empty((nk, n, na), dtype=np.float64)
    cdef double[:, :, ::1] preds = preds_arr
    cdef Py_ssize_t k2, a2
    cdef double hv
    with nogil:
        for k2 in range(nk):
            for i in range(n):
                for a2 in range(na):
                    preds[k2, i, a2] = br[k2, a2]
                for j in range(nh):
                    hv = hcur[i, j]
                    for a2 in range(na):
                        preds[k2, i, a2] += hv * wr[k2, j, a2]
    return hs, logits_arr, value_arr, preds_arr


def backward_batch(list torso_w, list torso_b, cnp.ndarray wp_arr, cnp.ndarray wv_arr,
                   cnp.ndarray wr_arr, cnp.ndarray idx_arr, list hs,
                   cnp.ndarray adj_logits_arr, cnp.ndarray adj_value_arr, cnp.ndarray adj_preds_arr):
    cdef double[:, ::1] wp = wp_arr
    cdef double[::1] wv = wv_arr
    cdef double[:, :, ::1] wr = wr_arr
    cdef long[::1] idx = np.ascontiguousarray(idx_arr, dtype=np.int64)
    cdef double[:, ::1] adj_logits = adj_logits_arr
    cdef double[::1] adj_value = adj_value_arr
    cdef double[:, :, ::1] adj_preds = adj_preds_arr

    cdef double[:, ::1] h_last = hs[len(hs) - 1]
    cdef Py_ssize_t n = h_last.shape[0], nh = h_last.shape[1]
    cdef Py_ssize_t na = wp.shape[1], nk = wr.shape[0]
    cdef Py_ssize_t i, j, k, a, li

    cdef cnp.ndarray g_wp_arr = np.zeros((nh, na), dtype=np.float64)
    cdef cnp.ndarray g_bp_arr = np.zeros(na, dtype=np.float64)
    cdef cnp.ndarray g_wv_arr = np.zeros(nh, dtype=np.float64)
    cdef cnp.ndarray g_bv_arr = np.zeros(1, dtype=np.float64)
    cdef cnp.ndarray g_wr_arr = np.zeros((nk, nh, na), dtype=np.float64)
    cdef cnp.ndarray g_br_arr = np.zeros((nk, na), dtype=np.float64)
    cdef double[:, ::1] g_wp = g_wp_arr
    cdef double[::1] g_bp = g_bp_arr
    cdef double[::1] g_wv = g_wv_arr
    cdef double[::1] g_bv = g_bv_arr
    cdef double[:, :, ::1] g_wr = g_wr_arr
    cdef double[:, ::1] g_br = g_br_arr

    cdef cnp.ndarray dh_arr = np.zeros((n, nh), dtype=np.float64)
    cdef double[:, ::1] d_h = dh_arr
    cdef double acc, hv

    with nogil:
        for i in range(n):
            for a in range(na):
                g_bp[a] += adj_logits[i, a]
            acc = adj_value[i]
            g_bv[0] += acc
            for j in range(nh):
                hv = h_last[i, j]
                g_wv[j] += hv * acc
                d_h[i, j] += acc * wv[j]
                for a in range(na):
                    g_wp[j, a] += hv * adj_logits[i, a]
                    d_h[i, j] += adj_logits[i, a] * wp[j, a]
        for k in range(nk):
            for i in range(n):
                for a in range(na):
                    g_br[k, a] += adj_preds[k, i, a]
                for j in range(nh):
                    hv = h_last[i, j]
                    for a in range(na):
                        g_wr[k, j, a] += hv * adj_preds[k, i, a]
                        d_h[i, j] += adj_preds[k, i, a] * wr[k, j, a]

    g_tw = [None] * len(torso_w)
    g_tb = [None] * len(torso_b)
    cdef double[:, ::1] w, h_prev, h_here, g_w, delta, d_prev
    cdef double[::1] g_b
    cdef cnp.ndarray g_w_arr, g_b_arr, delta_arr, d_prev_arr
    cdef Py_ssize_t d_in, d_out
    for li in range(len(torso_w) - 1, 0, -1):
        w = torso_w[li]
        h_here = hs[li]
        h_prev = hs[li - 1]
        d_in = w.shape[0]
        d_out = w.shape[1]
        delta_arr = np.empty((n, d_out), dtype=np.float64)
        delta = delta_arr
        g_w_arr = np.zeros((d_in, d_out), dtype=np.float64)
        g_w = g_w_arr
        g_b_arr = np.zeros(d_out, dtype=np.float64)
        g_b = g_b_arr
        d_prev_arr = np.zeros((n, d_in), dtype=np.float64)
        d_prev = d_prev_arr
        with nogil:
            for i in range(n):
                for j in range(d_out):
                    delta[i, j] = d_h[i, j] * (1.0 - h_here[i, j] * h_here[i, j])
                    g_b[j] += delta[i, j]
                for k in range(d_in):
                    hv = h_prev[i, k]
                    acc = 0.0
                    for j in range(d_out):
                        g_w[k, j] += hv * delta[i, j]
                        acc += delta[i, j] * w[k, j]
                    d_prev[i, k] = acc
        g_tw[li] = g_w_arr
        g_tb[li] = g_b_arr
        d_h = d_prev

    cdef double[:, ::1] h0 = hs[0]
    cdef double[:, ::1] w0 = torso_w[0]
    cdef cnp.ndarray g_w0_arr = np.zeros((w0.shape[0], w0.shape[1]), dtype=np.float64)
    cdef double[:, ::1] g_w0 = g_w0_arr
    cdef cnp.ndarray g_b0_arr = np.zeros(w0.shape[1], dtype=np.float64)
    cdef double[::1] g_b0 = g_b0_arr
    with nogil:
        for i in range(n):
            for j in range(w0.shape[1]):
                acc = d_h[i, j] * (1.0 - h0[i, j] * h0[i, j])
                g_w0[idx[i], j] += acc
                g_b0[j] += acc
    g_tw[0] = g_w0_arr
    g_tb[0] = g_b0_arr
    return g_tw, g_tb, g_wp_arr, g_bp_arr, g_wv_arr, g_bv_arr, g_wr_arr, g_br_arr
