"""Pure-numpy kernels; the reference/fallback for the compiled core."""
from __future__ import annotations

import numpy as np


def bilinear_clamped(img: np.ndarray, xs, ys):
    """Sample img at float coords; coordinates clamp to the border."""
    h, w = img.shape
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def response_grid(img, cxs, cys, rhos, taps, read_idx, cos_a, sin_a, margin):
    """Boundary-operator responses for every (center, read radius) pair.

    For each center, ring means of the image over the sampled arc angles
    are taken at every radius in `rhos` (uniform spacing); `taps` folds
    the radial finite difference and the Gaussian smoothing into a single
    stencil whose value is read at the `read_idx` positions.  A read at
    radius r is valid only when the circle of radius r + margin fits in
    the image box; invalid reads come back NaN.  Stencil rings beyond
    that bound clamp at the border (edge replication).
    """
    img = np.ascontiguousarray(img, dtype=np.float64)
    h, w = img.shape
    ncen = cxs.shape[0]
    nrho = rhos.shape[0]
    means = np.empty((ncen, nrho), dtype=np.float64)
    for k in range(nrho):
        sx = cxs[:, None] + rhos[k] * cos_a[None, :]
        sy = cys[:, None] + rhos[k] * sin_a[None, :]
        means[:, k] = bilinear_clamped(img, sx, sy).sum(axis=1) / cos_a.shape[0]
    klen = taps.shape[0]
    half = klen // 2
    nwin = nrho - klen + 1
    corr = np.zeros((ncen, nwin), dtype=np.float64)
    for t in range(klen):
        corr += taps[t] * means[:, t : t + nwin]
    resp = np.abs(corr[:, read_idx - half])
    reach = rhos[read_idx] + margin
    ok = (
        (cxs[:, None] - reach[None, :] >= 0.0)
        & (cxs[:, None] + reach[None, :] <= w - 1.0)
        & (cys[:, None] - reach[None, :] >= 0.0)
        & (cys[:, None] + reach[None, :] <= h - 1.0)
    )
    resp[~ok] = np.nan
    return resp


def fill_masked(ch, mask, tol, max_iters):
    """Harmonic fill of masked pixels by Jacobi relaxation, in place.

    Border pixels average over their in-bounds neighbors.  Iteration
    stops once the max per-pixel update is below tol AND the geometric
    error estimate update*rho/(1-rho) (rho measured from successive
    sweeps) drops below tol/2, so the result tracks the exact harmonic
    solution to ~tol instead of merely having small updates.

    Returns (iterations, converged).
    """
    h, w = ch.shape
    m = mask.astype(bool)
    if not m.any():
        return 0, True
    cnt = np.zeros((h, w), dtype=np.float64)
    cnt[1:, :] += 1.0
    cnt[:-1, :] += 1.0
    cnt[:, 1:] += 1.0
    cnt[:, :-1] += 1.0
    cnt_m = cnt[m]
    prev_delta = np.inf
    for it in range(1, max_iters + 1):
        s = np.zeros_like(ch)
        s[1:, :] += ch[:-1, :]
        s[:-1, :] += ch[1:, :]
        s[:, 1:] += ch[:, :-1]
        s[:, :-1] += ch[:, 1:]
        new = s[m] / cnt_m
        delta = float(np.abs(new - ch[m]).max())
        ch[m] = new
        if delta == 0.0:
            return it, True
        if np.isfinite(prev_delta) and prev_delta > 0.0:
            rho = min(delta / prev_delta, 0.9999)
            est = delta * rho / (1.0 - rho)
            if delta < tol and est < 0.5 * tol:
                return it, True
        prev_delta = delta
    return max_iters, False
