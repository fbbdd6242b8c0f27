# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: boundary-operator response grid and Gauss-Seidel fill."""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, floor

cnp.import_array()

DEF NAN_SENTINEL = float("nan")


cdef inline double _bilerp(const double[:, ::1] img, double x, double y,
                           Py_ssize_t h, Py_ssize_t w) noexcept nogil:
    cdef double fx, fy, top, bot
    cdef Py_ssize_t x0, y0, x1, y1
    if x < 0.0:
        x = 0.0
    elif x > w - 1.0:
        x = w - 1.0
    if y < 0.0:
        y = 0.0
    elif y > h - 1.0:
        y = h - 1.0
    x0 = <Py_ssize_t>floor(x)
    y0 = <Py_ssize_t>floor(y)
    x1 = x0 + 1
    if x1 > w - 1:
        x1 = w - 1
    y1 = y0 + 1
    if y1 > h - 1:
        y1 = h - 1
    fx = x - x0
    fy = y - y0
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def response_grid(const double[:, ::1] img,
                  const double[::1] cxs, const double[::1] cys,
                  const double[::1] rhos, const double[::1] taps,
                  const cnp.int64_t[::1] read_idx,
                  const double[::1] cos_a, const double[::1] sin_a,
                  double margin):
    """Same contract as _ops_py.response_grid (see its docstring)."""
    cdef Py_ssize_t h = img.shape[0]
    cdef Py_ssize_t w = img.shape[1]
    cdef Py_ssize_t ncen = cxs.shape[0]
    cdef Py_ssize_t nrho = rhos.shape[0]
    cdef Py_ssize_t na = cos_a.shape[0]
    cdef Py_ssize_t klen = taps.shape[0]
    cdef Py_ssize_t half = klen // 2
    cdef Py_ssize_t nread = read_idx.shape[0]

    out_np = np.empty((ncen, nrho if False else nread), dtype=np.float64)
    cdef double[:, ::1] out = out_np
    means_np = np.empty(nrho, dtype=np.float64)
    cdef double[::1] means = means_np

    cdef Py_ssize_t ic, k, a, i, t, ridx
    cdef double cx, cy, rho, acc, reach, v
    cdef double nan = <double>NAN_SENTINEL

    with nogil:
        for ic in range(ncen):
            cx = cxs[ic]
            cy = cys[ic]
            for k in range(nrho):
                rho = rhos[k]
                acc = 0.0
                for a in range(na):
                    acc += _bilerp(img, cx + rho * cos_a[a], cy + rho * sin_a[a], h, w)
                means[k] = acc / na
            for i in range(nread):
                ridx = read_idx[i]
                reach = rhos[ridx] + margin
                if (cx - reach >= 0.0 and cx + reach <= w - 1.0 and
                        cy - reach >= 0.0 and cy + reach <= h - 1.0):
                    acc = 0.0
                    for t in range(klen):
                        acc += taps[t] * means[ridx - half + t]
                    out[ic, i] = fabs(acc)
                else:
                    out[ic, i] = nan
    return out_np


def fill_masked(double[:, ::1] ch, const cnp.uint8_t[:, ::1] mask,
                double tol, long max_iters):
    """Same contract as _ops_py.fill_masked, but with row-major
    Gauss-Seidel sweeps (values update in place within a sweep)."""
    cdef Py_ssize_t h = ch.shape[0]
    cdef Py_ssize_t w = ch.shape[1]
    cdef Py_ssize_t n = 0
    cdef Py_ssize_t y, x, i
    for y in range(h):
        for x in range(w):
            if mask[y, x]:
                n += 1
    if n == 0:
        return 0, True

    ys_np = np.empty(n, dtype=np.intp)
    xs_np = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[::1] ys = ys_np
    cdef Py_ssize_t[::1] xs = xs_np
    i = 0
    for y in range(h):
        for x in range(w):
            if mask[y, x]:
                ys[i] = y
                xs[i] = x
                i += 1

    cdef double prev_delta = -1.0
    cdef double delta, s, newv, d, rho, est
    cdef long it = 0
    cdef int cnt
    cdef bint converged = 0

    with nogil:
        for it in range(1, max_iters + 1):
            delta = 0.0
            for i in range(n):
                y = ys[i]
                x = xs[i]
                s = 0.0
                cnt = 0
                if y > 0:
                    s += ch[y - 1, x]
                    cnt += 1
                if y < h - 1:
                    s += ch[y + 1, x]
                    cnt += 1
                if x > 0:
                    s += ch[y, x - 1]
                    cnt += 1
                if x < w - 1:
                    s += ch[y, x + 1]
                    cnt += 1
                newv = s / cnt
                d = fabs(newv - ch[y, x])
                if d > delta:
                    delta = d
                ch[y, x] = newv
            if delta == 0.0:
                converged = 1
                break
            if prev_delta > 0.0:
                rho = delta / prev_delta
                if rho > 0.9999:
                    rho = 0.9999
                est = delta * rho / (1.0 - rho)
                if delta < tol and est < 0.5 * tol:
                    converged = 1
                    break
            prev_delta = delta
    if converged:
        return it, True
    return max_iters, False
