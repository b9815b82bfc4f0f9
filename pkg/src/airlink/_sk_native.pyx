# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled spiral nearest-point decoder (see ``_sk_python`` for the reference)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, fabs, fmax, fmin, M_PI

from ._sk_python import GOLDEN, golden_iterations, spiral_grid

cnp.import_array()


cdef inline double _dist2(double w, double y1, double y2, double scale, double gamma) nogil:
    cdef double aw = fabs(w)
    cdef double d1 = y1 - scale * w * cos(gamma * aw)
    cdef double d2 = y2 - scale * w * sin(gamma * aw)
    return d1 * d1 + d2 * d2


def sk_decode_batch(y1, y2, double w_max, double delta, double gamma, int grid_n, double tol):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ya = np.ascontiguousarray(y1, dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] yb = np.ascontiguousarray(y2, dtype=np.float64).ravel()
    cdef Py_ssize_t n = ya.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n)
    if n == 0:
        return out
    w_np, gx_np, gy_np = spiral_grid(w_max, delta, gamma, grid_n)
    cdef double[::1] w = w_np
    cdef double[::1] gx = gx_np
    cdef double[::1] gy = gy_np
    cdef Py_ssize_t m = w.shape[0]
    cdef double step = w_max / (grid_n - 1)
    cdef double scale = delta / M_PI
    cdef double g = GOLDEN
    cdef int iters = golden_iterations(2.0 * step, tol)
    cdef double[::1] yv1 = ya
    cdef double[::1] yv2 = yb
    cdef double[::1] res = out
    cdef Py_ssize_t i, j, best
    cdef int it
    cdef double a, b, dd, bd, lo, hi, c, d, fc, fd, p, q

    with nogil:
        for i in range(n):
            p = yv1[i]
            q = yv2[i]
            best = 0
            bd = 1e300
            for j in range(m):
                a = p - gx[j]
                b = q - gy[j]
                dd = a * a + b * b
                if dd < bd:
                    bd = dd
                    best = j
            lo = fmax(w[best] - step, -w_max)
            hi = fmin(w[best] + step, w_max)
            c = hi - g * (hi - lo)
            d = lo + g * (hi - lo)
            fc = _dist2(c, p, q, scale, gamma)
            fd = _dist2(d, p, q, scale, gamma)
            for it in range(iters):
                if fc < fd:
                    hi = d
                    d = c
                    fd = fc
                    c = hi - g * (hi - lo)
                    fc = _dist2(c, p, q, scale, gamma)
                else:
                    lo = c
                    c = d
                    fc = fd
                    d = lo + g * (hi - lo)
                    fd = _dist2(d, p, q, scale, gamma)
            res[i] = 0.5 * (lo + hi)
    return out
