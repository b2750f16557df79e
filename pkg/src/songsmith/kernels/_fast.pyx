# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel core: fused LSTM gate math and the skip-gram inner loop.

Keep in lockstep with ``_slow``; the SGNS loop must stay bit-identical
(same operation order, same libm calls).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, log, tanh
from libc.stdint cimport uint64_t

cnp.import_array()


cdef inline double _sig(double x) nogil:
    cdef double z = exp(-fabs(x))
    if x >= 0:
        return 1.0 / (1.0 + z)
    return z / (1.0 + z)


def lstm_gates_forward(cnp.ndarray[cnp.float64_t, ndim=2] preact,
                       cnp.ndarray[cnp.float64_t, ndim=2] c_prev):
    cdef Py_ssize_t b = preact.shape[0]
    cdef Py_ssize_t h = preact.shape[1] // 4
    gi_a = np.empty((b, h)); gf_a = np.empty((b, h))
    gg_a = np.empty((b, h)); go_a = np.empty((b, h))
    tc_a = np.empty((b, h)); out_a = np.empty((b, 2 * h))
    cdef double[:, ::1] pre = np.ascontiguousarray(preact)
    cdef double[:, ::1] cp = np.ascontiguousarray(c_prev)
    cdef double[:, ::1] gi = gi_a, gf = gf_a, gg = gg_a, go = go_a, tc = tc_a
    cdef double[:, ::1] out = out_a
    cdef Py_ssize_t i, j
    cdef double c
    with nogil:
        for i in range(b):
            for j in range(h):
                gi[i, j] = _sig(pre[i, j])
                gf[i, j] = _sig(pre[i, h + j])
                gg[i, j] = tanh(pre[i, 2 * h + j])
                go[i, j] = _sig(pre[i, 3 * h + j])
                c = gf[i, j] * cp[i, j] + gi[i, j] * gg[i, j]
                tc[i, j] = tanh(c)
                out[i, j] = go[i, j] * tc[i, j]
                out[i, h + j] = c
    return out_a, (gi_a, gf_a, gg_a, go_a, np.asarray(cp), tc_a)


def lstm_gates_backward(cache, cnp.ndarray[cnp.float64_t, ndim=2] d_out):
    gi_a, gf_a, gg_a, go_a, cp_a, tc_a = cache
    cdef Py_ssize_t b = d_out.shape[0]
    cdef Py_ssize_t h = d_out.shape[1] // 2
    d_pre_a = np.empty((b, 4 * h)); dc_prev_a = np.empty((b, h))
    cdef double[:, ::1] gi = gi_a, gf = gf_a, gg = gg_a, go = go_a
    cdef double[:, ::1] cp = cp_a, tc = tc_a
    cdef double[:, ::1] dout = np.ascontiguousarray(d_out)
    cdef double[:, ::1] d_pre = d_pre_a, dc_prev = dc_prev_a
    cdef Py_ssize_t i, j
    cdef double dh, dc
    with nogil:
        for i in range(b):
            for j in range(h):
                dh = dout[i, j]
                dc = dout[i, h + j] + dh * go[i, j] * (1.0 - tc[i, j] * tc[i, j])
                d_pre[i, j] = dc * gg[i, j] * gi[i, j] * (1.0 - gi[i, j])
                d_pre[i, h + j] = dc * cp[i, j] * gf[i, j] * (1.0 - gf[i, j])
                d_pre[i, 2 * h + j] = dc * gi[i, j] * (1.0 - gg[i, j] * gg[i, j])
                d_pre[i, 3 * h + j] = dh * tc[i, j] * go[i, j] * (1.0 - go[i, j])
                dc_prev[i, j] = dc * gf[i, j]
    return d_pre_a, dc_prev_a


def sgns_epoch(cnp.ndarray[cnp.int32_t, ndim=1] centers,
               cnp.ndarray[cnp.int32_t, ndim=1] contexts,
               cnp.ndarray[cnp.float64_t, ndim=2] syn0,
               cnp.ndarray[cnp.float64_t, ndim=2] syn1,
               cnp.ndarray[cnp.float64_t, ndim=1] cum_table,
               int negatives, double lr, rng_state):
    cdef double[:, ::1] s0 = syn0
    cdef double[:, ::1] s1 = syn1
    cdef double[::1] ct = cum_table
    cdef int[::1] cen = centers
    cdef int[::1] con = contexts
    cdef Py_ssize_t dim = syn0.shape[1]
    cdef Py_ssize_t n = centers.shape[0]
    cdef Py_ssize_t table = cum_table.shape[0]
    cdef uint64_t state = <uint64_t> rng_state
    cdef uint64_t r
    cdef double loss = 0.0, label, f, s, g, x, tmp
    cdef Py_ssize_t p, k, d, c, o, target, lo, hi, mid
    cdef double[::1] neu = np.zeros(dim)
    with nogil:
        for p in range(n):
            c = cen[p]
            o = con[p]
            for d in range(dim):
                neu[d] = 0.0
            for k in range(negatives + 1):
                if k == 0:
                    target = o
                    label = 1.0
                else:
                    state ^= state >> 12
                    state ^= state << 25
                    state ^= state >> 27
                    r = state * <uint64_t> 0x2545F4914F6CDD1D
                    x = <double> (r >> 11) * (1.0 / 9007199254740992.0)
                    x = x * ct[table - 1]
                    lo = 0
                    hi = table - 1
                    while lo < hi:
                        mid = (lo + hi) // 2
                        if ct[mid] <= x:
                            lo = mid + 1
                        else:
                            hi = mid
                    target = lo
                    if target == o:
                        continue
                    label = 0.0
                f = 0.0
                for d in range(dim):
                    f += s0[c, d] * s1[target, d]
                if f > 30.0:
                    f = 30.0
                elif f < -30.0:
                    f = -30.0
                s = 1.0 / (1.0 + exp(-f))
                if label == 1.0:
                    loss -= log(s)
                else:
                    loss -= log(1.0 - s)
                g = (label - s) * lr
                for d in range(dim):
                    tmp = s1[target, d]
                    neu[d] += g * tmp
                    s1[target, d] = tmp + g * s0[c, d]
            for d in range(dim):
                s0[c, d] += neu[d]
    return loss, int(state)
