# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels.

Operation order matches ``_pykernels`` exactly; the extension is built with
``-ffp-contract=off`` so no fused multiply-adds change the rounding.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()

NAME = "cython"


def gather_true_class(const double[:, :] t, const cnp.int64_t[:] y):
    cdef Py_ssize_t n = t.shape[0], i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    for i in range(n):
        o[i] = t[i, y[i]]
    return out


def ecdf_from_sorted(const double[::1] values):
    cdef Py_ssize_t n = values.shape[0], i, k = 0
    points = np.empty(n, dtype=np.float64)
    heights = np.empty(n, dtype=np.float64)
    cdef double[::1] p = points
    cdef double[::1] h = heights
    cdef double nf = <double>n
    for i in range(n):
        if i + 1 == n or values[i + 1] != values[i]:
            p[k] = values[i]
            h[k] = <double>(i + 1) / nf
            k += 1
    h[k - 1] = 1.0
    return points[:k].copy(), heights[:k].copy()


def ks_sup(const double[::1] pa, const double[::1] ha,
           const double[::1] pb, const double[::1] hb):
    cdef Py_ssize_t na = pa.shape[0], nb = pb.shape[0], i = 0, j = 0
    cdef double fa = 0.0, fb = 0.0, x, d, best = -1.0, where = 0.0
    while i < na or j < nb:
        if j >= nb or (i < na and pa[i] < pb[j]):
            x = pa[i]
            fa = ha[i]
            i += 1
        elif i >= na or pb[j] < pa[i]:
            x = pb[j]
            fb = hb[j]
            j += 1
        else:
            x = pa[i]
            fa = ha[i]
            fb = hb[j]
            i += 1
            j += 1
        d = fabs(fa - fb)
        if d > best:
            best = d
            where = x
    return best, where


def adam_update(double[::1] theta, const double[::1] grad, double[::1] m,
                double[::1] v, double lr, double beta1, double beta2,
                double eps, double bc1, double bc2):
    cdef Py_ssize_t n = theta.shape[0], i
    cdef double g, c1 = 1.0 - beta1, c2 = 1.0 - beta2
    for i in range(n):
        g = grad[i]
        m[i] = beta1 * m[i] + c1 * g
        v[i] = beta2 * v[i] + c2 * (g * g)
        theta[i] -= lr * (m[i] / bc1) / (sqrt(v[i] / bc2) + eps)
