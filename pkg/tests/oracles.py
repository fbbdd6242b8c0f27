"""Independent oracles used by the test suite.

These deliberately avoid the search/selection code paths they check:
the localization oracle sweeps the full parameter grid instead of the
coarse-to-fine search, the gradient oracle uses central finite
differences, and the threshold oracle brute-forces candidate cuts.
"""
import math

import numpy as np

from iristwin import _kernels
from iristwin.extraction import _arc_angles, _dog_taps
from iristwin.verifier import EncoderState, contrastive_loss, encode, pair_distance


def exhaustive_localize(eye, cfg):
    """Brute-force argmax of the boundary response over the full lattice
    (every center at refine_step, every radius at refine_step)."""
    gray = np.ascontiguousarray(eye.gray(), dtype=np.float64)
    dr = cfg.refine_step
    taps, half_k = _dog_taps(cfg.sigma_r, dr)
    ext = half_k + 1
    cos_a, sin_a = _arc_angles(cfg)

    r_lo = max(cfg.r_min, (ext + 1) * dr)
    n_r = int(math.floor((cfg.r_max - r_lo) / dr)) + 1
    rhos = np.ascontiguousarray((r_lo - ext * dr) + dr * np.arange(n_r + 2 * ext))
    read_idx = np.arange(ext, ext + n_r, dtype=np.int64)
    rads = rhos[read_idx]

    margin = r_lo + dr
    xs = np.arange(margin, eye.width - 1 - margin + 1e-9, dr)
    ys = np.arange(margin, eye.height - 1 - margin + 1e-9, dr)
    gx, gy = np.meshgrid(xs, ys)
    cxs = np.ascontiguousarray(gx.ravel(), dtype=np.float64)
    cys = np.ascontiguousarray(gy.ravel(), dtype=np.float64)

    resp = _kernels.response_grid(gray, cxs, cys, rhos, taps, read_idx, cos_a, sin_a, dr)

    best_key = None
    best = None
    finite = resp[np.isfinite(resp)]
    if finite.size == 0:
        return None
    best_val = finite.max()
    for ci, ri in np.argwhere(resp == best_val):
        key = (rads[ri], cys[ci], cxs[ci])
        if best_key is None or key < best_key:
            best_key = key
            best = (float(cxs[ci]), float(cys[ci]), float(rads[ri]), float(best_val))
    return best


def fd_loss_gradient(state, pair, y, cfg, coords, h_scale=1e-5):
    """Central finite differences of the pair loss at selected coordinates."""
    w0 = np.asarray(state.w, dtype=np.float64)

    def loss_at(wv):
        st = EncoderState(
            arch=state.arch,
            w=wv,
            embed_dim=state.embed_dim,
            input_size=state.input_size,
            seed=state.seed,
        )
        E = pair_distance(encode(st, pair.left), encode(st, pair.right))
        return contrastive_loss(E, y, cfg)

    out = np.empty(len(coords))
    for j, i in enumerate(coords):
        h = h_scale * max(1.0, abs(w0[i]))
        wp = w0.copy()
        wp[i] += h
        wm = w0.copy()
        wm[i] -= h
        out[j] = (loss_at(wp) - loss_at(wm)) / (2.0 * h)
    return out


def brute_force_best_accuracy(similarities, labels):
    """Max accuracy over every candidate threshold cut of "s >= tau => REAL"."""
    sims = np.asarray(similarities, dtype=np.float64)
    ys = np.asarray(labels, dtype=np.int64)
    vals = np.unique(sims)
    candidates = [0.0, 100.0]
    candidates.extend(vals.tolist())
    candidates.extend(((vals[:-1] + vals[1:]) / 2.0).tolist())
    candidates.extend((vals + 1e-9).tolist())
    best = 0.0
    for tau in candidates:
        pred = (sims >= tau).astype(np.int64)
        best = max(best, float((pred == ys).mean()))
    return best


def strip_ramp(width: int):
    """Exact discrete-harmonic solution across a full-height vertical hole
    with constant boundary columns 0.0 (left) and 1.0 (right): linear."""
    return (np.arange(width) + 1.0) / (width + 1.0)
