# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled grid-operator slice kernel.

Same contract as the pure-numpy fallback in ``_gridpy``: evaluate the DP
operator on one warped-time slice and maximize over the traded proportion
per wealth node with a golden-section search plus endpoint/warm-start
candidates (ties to the smallest proportion).
"""

from libc.math cimport exp, floor, log, sqrt

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"

cdef double INV_PHI = (sqrt(5.0) - 1.0) / 2.0
cdef double INV_PHI_SQ = (3.0 - sqrt(5.0)) / 2.0


cdef int _golden_iterations(double tol):
    cdef int n = <int>(log(tol) / log(INV_PHI)) + 1
    return n if n > 1 else 1


cdef double _objective(double pi, double lxn,
                       double[:, ::1] W, double[:, ::1] gross, double[:, ::1] wq,
                       double lx0, double dlx, int n_x,
                       int kind, double gamma,
                       double u_lo, double u_hi) nogil:
    cdef Py_ssize_t i, q
    cdef Py_ssize_t I = gross.shape[0], Q = gross.shape[1]
    cdef double total = 0.0
    cdef double lev, lnxp, pos, fr, val, u_xp
    cdef Py_ssize_t cell
    for i in range(I):
        for q in range(Q):
            lev = 1.0 - pi + pi * gross[i, q]
            lnxp = lxn + log(lev)
            pos = (lnxp - lx0) / dlx
            if pos < 0.0:
                u_xp = lnxp if kind == 0 else exp(gamma * lnxp) / gamma
                val = W[i, 0] + u_xp - u_lo
            elif pos > n_x - 1.0:
                u_xp = lnxp if kind == 0 else exp(gamma * lnxp) / gamma
                val = W[i, n_x - 1] + u_xp - u_hi
            else:
                cell = <Py_ssize_t>floor(pos)
                if cell > n_x - 2:
                    cell = n_x - 2
                fr = pos - cell
                val = W[i, cell] * (1.0 - fr) + W[i, cell + 1] * fr
            total += wq[i, q] * val
    return total


def slice_objective(pi, W, gross, wq, lx, kind, gamma):
    """Vector of slice objectives, one per wealth node (see ``_gridpy``)."""
    cdef double[::1] pi_v = np.ascontiguousarray(pi, dtype=np.float64)
    cdef double[:, ::1] W_v = np.ascontiguousarray(W, dtype=np.float64)
    cdef double[:, ::1] g_v = np.ascontiguousarray(gross, dtype=np.float64)
    cdef double[:, ::1] wq_v = np.ascontiguousarray(wq, dtype=np.float64)
    cdef double[::1] lx_v = np.ascontiguousarray(lx, dtype=np.float64)
    cdef int n_x = lx_v.shape[0]
    cdef int kd = kind
    cdef double gm = gamma
    cdef double lx0 = lx_v[0], dlx = lx_v[1] - lx_v[0]
    cdef double u_lo, u_hi
    if kd == 0:
        u_lo, u_hi = lx_v[0], lx_v[n_x - 1]
    else:
        u_lo = exp(gm * lx_v[0]) / gm
        u_hi = exp(gm * lx_v[n_x - 1]) / gm
    out = np.empty(n_x)
    cdef double[::1] out_v = out
    cdef Py_ssize_t n
    for n in range(n_x):
        out_v[n] = _objective(pi_v[n], lx_v[n], W_v, g_v, wq_v,
                              lx0, dlx, n_x, kd, gm, u_lo, u_hi)
    return out


def apply_slice(W, gross, wq, lx, kind, gamma, prev_pi, pi_tol):
    """(values, argmax) of the slice objective over pi in [0, 1] per node."""
    cdef double[:, ::1] W_v = np.ascontiguousarray(W, dtype=np.float64)
    cdef double[:, ::1] g_v = np.ascontiguousarray(gross, dtype=np.float64)
    cdef double[:, ::1] wq_v = np.ascontiguousarray(wq, dtype=np.float64)
    cdef double[::1] lx_v = np.ascontiguousarray(lx, dtype=np.float64)
    cdef int n_x = lx_v.shape[0]
    cdef int kd = kind
    cdef double gm = gamma
    cdef double lx0 = lx_v[0], dlx = lx_v[1] - lx_v[0]
    cdef double u_lo, u_hi
    if kd == 0:
        u_lo, u_hi = lx_v[0], lx_v[n_x - 1]
    else:
        u_lo = exp(gm * lx_v[0]) / gm
        u_hi = exp(gm * lx_v[n_x - 1]) / gm

    cdef bint have_prev = prev_pi is not None
    cdef double[::1] prev_v
    if have_prev:
        prev_v = np.ascontiguousarray(prev_pi, dtype=np.float64)

    values = np.empty(n_x)
    argmax = np.empty(n_x)
    cdef double[::1] val_v = values
    cdef double[::1] arg_v = argmax
    cdef int iters = _golden_iterations(pi_tol) - 1
    cdef Py_ssize_t n, k, m
    cdef double a, b, dist, c, d, yc, yd, lxn
    cdef double cand[4]
    cdef double best_pi, best_val, v, p
    cdef int n_cand

    for n in range(n_x):
        lxn = lx_v[n]
        a = 0.0
        b = 1.0
        dist = 1.0
        c = a + INV_PHI_SQ * dist
        d = a + INV_PHI * dist
        yc = _objective(c, lxn, W_v, g_v, wq_v, lx0, dlx, n_x, kd, gm, u_lo, u_hi)
        yd = _objective(d, lxn, W_v, g_v, wq_v, lx0, dlx, n_x, kd, gm, u_lo, u_hi)
        for k in range(iters):
            if yc >= yd:
                b = d
                d = c
                yd = yc
                dist *= INV_PHI
                c = a + INV_PHI_SQ * dist
                yc = _objective(c, lxn, W_v, g_v, wq_v, lx0, dlx, n_x, kd, gm, u_lo, u_hi)
            else:
                a = c
                c = d
                yc = yd
                dist *= INV_PHI
                d = a + INV_PHI * dist
                yd = _objective(d, lxn, W_v, g_v, wq_v, lx0, dlx, n_x, kd, gm, u_lo, u_hi)

        n_cand = 3
        cand[0] = 0.0
        cand[1] = 0.5 * (a + b)
        cand[2] = 1.0
        if have_prev:
            cand[3] = prev_v[n]
            n_cand = 4
        # insertion sort (ascending pi) so the first max is the smallest pi
        for k in range(1, n_cand):
            p = cand[k]
            m = k
            while m > 0 and cand[m - 1] > p:
                cand[m] = cand[m - 1]
                m -= 1
            cand[m] = p
        best_pi = cand[0]
        best_val = _objective(cand[0], lxn, W_v, g_v, wq_v, lx0, dlx, n_x, kd, gm, u_lo, u_hi)
        for k in range(1, n_cand):
            v = _objective(cand[k], lxn, W_v, g_v, wq_v, lx0, dlx, n_x, kd, gm, u_lo, u_hi)
            if v > best_val:
                best_val = v
                best_pi = cand[k]
        val_v[n] = best_val
        arg_v[n] = best_pi

    return values, argmax
