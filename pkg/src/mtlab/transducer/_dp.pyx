# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled transducer lattice forward-backward (hot kernel).

Same contract as ``_dp_np``; plain nested loops instead of
anti-diagonal vectorization.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, log1p, fabs

cnp.import_array()

DEF NEG = -1.0e30


cdef inline double logaddexp(double a, double b) noexcept nogil:
    if a < b:
        a, b = b, a
    if b <= NEG:
        return a
    return a + log1p(exp(b - a))


def forward_backward(double[:, :, ::1] logp, long[::1] labels, int blank=0):
    cdef Py_ssize_t T = logp.shape[0]
    cdef Py_ssize_t U1 = logp.shape[1]
    cdef Py_ssize_t U = U1 - 1
    cdef Py_ssize_t t, u

    alpha_nd = np.full((T, U1), NEG)
    beta_nd = np.full((T, U1), NEG)
    cdef double[:, ::1] alpha = alpha_nd
    cdef double[:, ::1] beta = beta_nd
    cdef double fb, fl

    alpha[0, 0] = 0.0
    for t in range(T):
        for u in range(U + 1):
            if t == 0 and u == 0:
                continue
            fb = NEG
            fl = NEG
            if t > 0:
                fb = alpha[t - 1, u] + logp[t - 1, u, blank]
            if u > 0:
                fl = alpha[t, u - 1] + logp[t, u - 1, labels[u - 1]]
            alpha[t, u] = logaddexp(fb, fl)

    beta[T - 1, U] = logp[T - 1, U, blank]
    for t in range(T - 1, -1, -1):
        for u in range(U, -1, -1):
            if t == T - 1 and u == U:
                continue
            fb = NEG
            fl = NEG
            if t < T - 1:
                fb = logp[t, u, blank] + beta[t + 1, u]
            if u < U:
                fl = logp[t, u, labels[u]] + beta[t, u + 1]
            beta[t, u] = logaddexp(fb, fl)

    return beta[0, 0], alpha_nd, beta_nd


def loss_and_grad_logp(double[:, :, ::1] logp, long[::1] labels, int blank=0):
    cdef Py_ssize_t T = logp.shape[0]
    cdef Py_ssize_t U1 = logp.shape[1]
    cdef Py_ssize_t U = U1 - 1
    cdef Py_ssize_t t, u
    cdef double ll

    ll_obj, alpha_nd, beta_nd = forward_backward(logp, labels, blank)
    ll = ll_obj
    cdef double[:, ::1] alpha = alpha_nd
    cdef double[:, ::1] beta = beta_nd

    G_nd = np.zeros((T, U1, logp.shape[2]))
    cdef double[:, :, ::1] G = G_nd

    for t in range(T):
        for u in range(U + 1):
            if t < T - 1:
                G[t, u, blank] -= exp(alpha[t, u] + logp[t, u, blank]
                                      + beta[t + 1, u] - ll)
            elif u == U:
                G[t, u, blank] -= exp(alpha[t, u] + logp[t, u, blank] - ll)
            if u < U:
                G[t, u, labels[u]] -= exp(alpha[t, u] + logp[t, u, labels[u]]
                                          + beta[t, u + 1] - ll)
    return -ll, G_nd
