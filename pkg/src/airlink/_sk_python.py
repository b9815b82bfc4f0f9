"""Pure numpy implementation of the spiral nearest-point decoder.

Mirrors ``_sk_native.pyx`` step for step; used when the compiled module is
unavailable or ``AIRLINK_PURE_PYTHON=1``.
"""

import math

import numpy as np

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
CHUNK = 256


def golden_iterations(width, tol):
    """Fixed iteration count that shrinks a bracket of ``width`` below ``tol``."""
    if width <= tol:
        return 0
    return int(math.ceil(math.log(tol / width) / math.log(GOLDEN)))


def spiral_grid(w_max, delta, gamma, grid_n):
    pos = np.linspace(0.0, w_max, grid_n)
    w = np.concatenate([-pos[:0:-1], pos])
    scale = delta / math.pi
    return w, scale * w * np.cos(gamma * np.abs(w)), scale * w * np.sin(gamma * np.abs(w))


def _dist2(w, y1, y2, scale, gamma):
    aw = np.abs(w)
    d1 = y1 - scale * w * np.cos(gamma * aw)
    d2 = y2 - scale * w * np.sin(gamma * aw)
    return d1 * d1 + d2 * d2


def sk_decode_batch(y1, y2, w_max, delta, gamma, grid_n, tol):
    y1 = np.ascontiguousarray(y1, dtype=np.float64).ravel()
    y2 = np.ascontiguousarray(y2, dtype=np.float64).ravel()
    n = y1.size
    out = np.empty(n)
    if n == 0:
        return out
    w, gx, gy = spiral_grid(w_max, delta, gamma, grid_n)
    step = w_max / (grid_n - 1)
    scale = delta / math.pi

    best = np.empty(n, dtype=np.intp)
    for start in range(0, n, CHUNK):
        a = y1[start : start + CHUNK, None] - gx
        b = y2[start : start + CHUNK, None] - gy
        best[start : start + CHUNK] = np.argmin(a * a + b * b, axis=1)

    centre = w[best]
    lo = np.maximum(centre - step, -w_max)
    hi = np.minimum(centre + step, w_max)
    c = hi - GOLDEN * (hi - lo)
    d = lo + GOLDEN * (hi - lo)
    fc = _dist2(c, y1, y2, scale, gamma)
    fd = _dist2(d, y1, y2, scale, gamma)
    for _ in range(golden_iterations(2.0 * step, tol)):
        left = fc < fd
        # minimum in [lo, d]
        hi = np.where(left, d, hi)
        # minimum in [c, hi]
        lo = np.where(left, lo, c)
        nc = np.where(left, hi - GOLDEN * (hi - lo), d)
        nd = np.where(left, c, lo + GOLDEN * (hi - lo))
        nfc = np.where(left, _dist2(nc, y1, y2, scale, gamma), fd)
        nfd = np.where(left, fc, _dist2(nd, y1, y2, scale, gamma))
        c, d, fc, fd = nc, nd, nfc, nfd
    out[:] = 0.5 * (lo + hi)
    return out
