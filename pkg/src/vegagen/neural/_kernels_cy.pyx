# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled elementwise kernels for the recurrent cells and attention rows.

Semantics mirror _kernels_np exactly; the win is fusing the gate math into
one pass over memory instead of a chain of numpy temporaries.
"""

import numpy as np

cimport cython
from libc.math cimport exp, tanh

ctypedef fused real:
    float
    double


cdef inline real _sigmoid(real x) noexcept nogil:
    cdef real e
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


def lstm_cell_forward(pre, c_prev):
    pre = np.ascontiguousarray(pre)
    c_prev = np.ascontiguousarray(c_prev)
    c_new = np.empty_like(c_prev)
    h_new = np.empty_like(c_prev)
    acts = np.empty_like(pre)
    tanh_c = np.empty_like(c_prev)
    if pre.dtype == np.float32:
        _lstm_fwd[float](pre, c_prev, acts, c_new, h_new, tanh_c)
    else:
        _lstm_fwd[double](pre, c_prev, acts, c_new, h_new, tanh_c)
    return c_new, h_new, acts, tanh_c


def lstm_cell_backward(acts, tanh_c, c_prev, dh, dc):
    acts = np.ascontiguousarray(acts)
    tanh_c = np.ascontiguousarray(tanh_c)
    c_prev = np.ascontiguousarray(c_prev)
    dh = np.ascontiguousarray(dh)
    dc = np.ascontiguousarray(dc)
    dpre = np.empty_like(acts)
    dc_prev = np.empty_like(c_prev)
    if acts.dtype == np.float32:
        _lstm_bwd[float](acts, tanh_c, c_prev, dh, dc, dpre, dc_prev)
    else:
        _lstm_bwd[double](acts, tanh_c, c_prev, dh, dc, dpre, dc_prev)
    return dpre, dc_prev


def masked_softmax(scores, mask=None):
    scores = np.ascontiguousarray(scores)
    out = np.empty_like(scores)
    mask_u8 = None
    if mask is not None:
        mask_u8 = np.ascontiguousarray(mask, dtype=np.uint8)
    if scores.dtype == np.float32:
        _softmax[float](scores, mask_u8, out)
    else:
        _softmax[double](scores, mask_u8, out)
    return out


@cython.boundscheck(False)
cdef void _lstm_fwd(real[:, ::1] pre, real[:, ::1] c_prev, real[:, ::1] acts,
                    real[:, ::1] c_new, real[:, ::1] h_new, real[:, ::1] tanh_c) noexcept nogil:
    cdef Py_ssize_t B = c_prev.shape[0]
    cdef Py_ssize_t H = c_prev.shape[1]
    cdef Py_ssize_t b, j
    cdef real i, f, g, o, c, tc
    for b in range(B):
        for j in range(H):
            i = _sigmoid(pre[b, j])
            f = _sigmoid(pre[b, H + j])
            g = tanh(pre[b, 2 * H + j])
            o = _sigmoid(pre[b, 3 * H + j])
            c = f * c_prev[b, j] + i * g
            tc = tanh(c)
            acts[b, j] = i
            acts[b, H + j] = f
            acts[b, 2 * H + j] = g
            acts[b, 3 * H + j] = o
            c_new[b, j] = c
            tanh_c[b, j] = tc
            h_new[b, j] = o * tc


@cython.boundscheck(False)
cdef void _lstm_bwd(real[:, ::1] acts, real[:, ::1] tanh_c, real[:, ::1] c_prev,
                    real[:, ::1] dh, real[:, ::1] dc,
                    real[:, ::1] dpre, real[:, ::1] dc_prev) noexcept nogil:
    cdef Py_ssize_t B = c_prev.shape[0]
    cdef Py_ssize_t H = c_prev.shape[1]
    cdef Py_ssize_t b, j
    cdef real i, f, g, o, tc, dct, dhj
    for b in range(B):
        for j in range(H):
            i = acts[b, j]
            f = acts[b, H + j]
            g = acts[b, 2 * H + j]
            o = acts[b, 3 * H + j]
            tc = tanh_c[b, j]
            dhj = dh[b, j]
            dct = dc[b, j] + dhj * o * (1.0 - tc * tc)
            dpre[b, j] = dct * g * i * (1.0 - i)
            dpre[b, H + j] = dct * c_prev[b, j] * f * (1.0 - f)
            dpre[b, 2 * H + j] = dct * i * (1.0 - g * g)
            dpre[b, 3 * H + j] = dhj * tc * o * (1.0 - o)
            dc_prev[b, j] = dct * f


@cython.boundscheck(False)
cdef void _softmax(real[:, ::1] scores, const unsigned char[:, ::1] mask, real[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t B = scores.shape[0]
    cdef Py_ssize_t T = scores.shape[1]
    cdef Py_ssize_t b, t
    cdef real m, s, v
    cdef real fill = <real>-1e30
    for b in range(B):
        m = fill
        for t in range(T):
            v = scores[b, t] if mask is None or mask[b, t] else fill
            if v > m:
                m = v
        s = 0.0
        for t in range(T):
            if mask is None or mask[b, t]:
                v = exp(scores[b, t] - m)
            else:
                v = 0.0
            out[b, t] = v
            s += v
        for t in range(T):
            out[b, t] /= s
