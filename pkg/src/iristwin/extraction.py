"""Eye localization and iris boundary search.

The boundary operator scores a circle (cx, cy, r) by the magnitude of
the Gaussian-smoothed radial derivative of the mean image intensity
over a set of contour arcs.  Localization maximizes that response over
center and radius with a coarse-to-fine grid search; the contour is
restricted to lateral arcs by default to stay clear of eyelids.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from ._kernels import _ops_py
from .core import CircleParams, Generator, ImageBuffer, IrisCrop, IrisPair, Source
from .errors import CircleOutOfBounds, ExtractionFailed, InputTooSmall, NoIrisFound

# normalized rect: (x, y, w, h) as fractions of the face image
Rect = tuple[float, float, float, float]

MIN_FACE_SIDE = 256

# ROI defaults target pre-aligned face corpora (eyes on one horizontal
# line around 47% height).  "left" is the subject's left eye, which sits
# on the viewer's right.
DEFAULT_ROI_LEFT: Rect = (0.54, 0.36, 0.24, 0.22)
DEFAULT_ROI_RIGHT: Rect = (0.22, 0.36, 0.24, 0.22)


def _rects_overlap(a: Rect, b: Rect) -> bool:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    return ax < bx + bw and bx < ax + aw and ay < by + bh and by < ay + ah


@dataclass(frozen=True)
class ExtractionConfig:
    eye_roi_left: Rect = DEFAULT_ROI_LEFT
    eye_roi_right: Rect = DEFAULT_ROI_RIGHT
    r_min: float = 20.0
    r_max: float = 60.0
    angular_samples: int = 64
    contour_arcs: tuple[tuple[float, float], ...] = ((-45.0, 45.0), (135.0, 225.0))
    sigma_r: float = 1.5
    coarse_step: float = 4.0
    refine_step: float = 1.0
    min_operator_response: float = 0.02
    crop_size: int = 128
    roi_overrides: dict | None = None  # face_id -> {"left": rect, "right": rect}

    def __post_init__(self):
        if not 0 < self.r_min < self.r_max:
            raise ValueError("need 0 < r_min < r_max")
        if self.angular_samples < 16:
            raise ValueError("angular_samples must be >= 16")
        if not self.contour_arcs:
            raise ValueError("contour_arcs must be nonempty")
        for a, b in self.contour_arcs:
            if not b > a:
                raise ValueError(f"degenerate contour arc ({a}, {b})")
        if self.refine_step <= 0 or self.coarse_step < self.refine_step:
            raise ValueError("need 0 < refine_step <= coarse_step")
        if self.crop_size < 8:
            raise ValueError("crop_size too small")
        if _rects_overlap(self.eye_roi_left, self.eye_roi_right):
            raise ValueError("default eye ROIs must not overlap")


def _arc_angles(cfg: ExtractionConfig) -> tuple[np.ndarray, np.ndarray]:
    """cos/sin of the sampled contour angles, allocated to arcs by length."""
    spans = [b - a for a, b in cfg.contour_arcs]
    total = sum(spans)
    quotas = [cfg.angular_samples * s / total for s in spans]
    counts = [max(1, int(math.floor(q))) for q in quotas]
    # largest-remainder top-up to hit angular_samples exactly
    order = sorted(range(len(quotas)), key=lambda i: counts[i] - quotas[i])
    j = 0
    while sum(counts) < cfg.angular_samples:
        counts[order[j % len(order)]] += 1
        j += 1
    while sum(counts) > cfg.angular_samples and j < 10 * len(counts):
        k = max(range(len(counts)), key=lambda i: counts[i] - quotas[i])
        if counts[k] > 1:
            counts[k] -= 1
        j += 1
    thetas = []
    for (a, b), n in zip(cfg.contour_arcs, counts):
        step = (b - a) / n
        for k in range(n):
            thetas.append(math.radians(a + (k + 0.5) * step))
    th = np.asarray(thetas, dtype=np.float64)
    return np.cos(th), np.sin(th)


def _dog_taps(sigma_r: float, dr: float) -> tuple[np.ndarray, int]:
    """Radial stencil: forward differences of ring means folded with a
    Gaussian across radius.  Taps sum to zero, so constant intensity
    offsets cancel exactly."""
    half_k = max(1, int(math.ceil(3.0 * sigma_r / dr)))
    offs = (np.arange(-(half_k + 1), half_k + 1) + 0.5) * dr
    g = np.exp(-0.5 * (offs / sigma_r) ** 2)
    g /= g.sum()
    taps = np.zeros(2 * half_k + 3, dtype=np.float64)
    for j in range(-(half_k + 1), half_k + 1):
        gj = g[j + half_k + 1]
        taps[j + 1 + half_k + 1] += gj / dr
        taps[j + half_k + 1] -= gj / dr
    return taps, half_k


def _stencil_extent(cfg: ExtractionConfig) -> int:
    _, half_k = _dog_taps(cfg.sigma_r, cfg.refine_step)
    return half_k + 1


def _as_c(arr) -> np.ndarray:
    return np.ascontiguousarray(arr, dtype=np.float64)


def operator_response(image: ImageBuffer, c: CircleParams, cfg: ExtractionConfig) -> float:
    """Boundary-operator response of one circle.

    Raises CircleOutOfBounds when the circle plus one radial step does
    not fit inside the image, or when the radial stencil would reach a
    nonpositive radius.
    """
    dr = cfg.refine_step
    taps, half_k = _dog_taps(cfg.sigma_r, dr)
    ext = half_k + 1
    if c.r - ext * dr <= 0:
        raise CircleOutOfBounds(
            f"radius {c.r} too small for the radial stencil (needs > {ext * dr})"
        )
    cos_a, sin_a = _arc_angles(cfg)
    rhos = _as_c(c.r + dr * np.arange(-ext, ext + 1))
    read_idx = np.array([ext], dtype=np.int64)
    resp = _kernels.response_grid(
        _as_c(image.gray()),
        _as_c([c.cx]),
        _as_c([c.cy]),
        rhos,
        taps,
        read_idx,
        cos_a,
        sin_a,
        dr,
    )
    val = float(resp[0, 0])
    if math.isnan(val):
        raise CircleOutOfBounds(
            f"circle ({c.cx}, {c.cy}, r={c.r}) plus one radial step exceeds image bounds"
        )
    return val


def _scale_rect(rect: Rect, width: int, height: int) -> tuple[int, int, int, int]:
    x, y, w, h = rect
    return (
        int(round(x * width)),
        int(round(y * height)),
        int(round(w * width)),
        int(round(h * height)),
    )


def locate_eyes(face: ImageBuffer, cfg: ExtractionConfig, face_id: str | None = None):
    """Pixel-coordinate eye ROIs, (left, right); left = subject's left eye."""
    if face.width < MIN_FACE_SIDE or face.height < MIN_FACE_SIDE:
        raise InputTooSmall(
            f"face is {face.width}x{face.height}; need at least {MIN_FACE_SIDE} per side"
        )
    left_n, right_n = cfg.eye_roi_left, cfg.eye_roi_right
    if face_id is not None and cfg.roi_overrides and face_id in cfg.roi_overrides:
        ov = cfg.roi_overrides[face_id]
        left_n = tuple(ov["left"])
        right_n = tuple(ov["right"])
        if _rects_overlap(left_n, right_n):
            raise ValueError(f"ROI override for {face_id} has overlapping eyes")
    return _scale_rect(left_n, face.width, face.height), _scale_rect(
        right_n, face.width, face.height
    )


def load_roi_overrides(path) -> dict:
    """Per-face eye ROI override file: {face_id: {"left": [x,y,w,h], "right": [...]}}."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    out = {}
    for face_id, rois in doc.items():
        out[str(face_id)] = {
            "left": tuple(float(v) for v in rois["left"]),
            "right": tuple(float(v) for v in rois["right"]),
        }
    return out


def _argmax_with_ties(resp: np.ndarray, cxs, cys, rads) -> tuple[int, int] | None:
    """Index of max response; ties broken by smallest radius then (cy, cx)."""
    if not np.isfinite(resp).any():
        return None
    best = np.nanmax(resp)
    cand = np.argwhere(resp == best)
    key = None
    pick = None
    for ci, ri in cand:
        k = (rads[ri], cys[ci], cxs[ci])
        if key is None or k < key:
            key = k
            pick = (int(ci), int(ri))
    return pick


def daugman_localize(eye: ImageBuffer, cfg: ExtractionConfig) -> tuple[CircleParams, float]:
    """Coarse-to-fine argmax of operator_response over (cx, cy, r).

    Coarse pass on a coarse_step lattice, then refinement at refine_step
    within +-coarse_step of the coarse argmax.  The winning response
    must clear min_operator_response.
    """
    side_min = 2 * cfg.r_max + 4
    if eye.width < side_min or eye.height < side_min:
        raise InputTooSmall(
            f"eye region {eye.width}x{eye.height} below {side_min:.0f} per side"
        )
    gray = _as_c(eye.gray())
    dr = cfg.refine_step
    taps, half_k = _dog_taps(cfg.sigma_r, dr)
    ext = half_k + 1
    cos_a, sin_a = _arc_angles(cfg)

    r_lo = max(cfg.r_min, (ext + 1) * dr)
    n_r = int(math.floor((cfg.r_max - r_lo) / dr)) + 1
    rhos = _as_c((r_lo - ext * dr) + dr * np.arange(n_r + 2 * ext))
    fine_rads = rhos[ext : ext + n_r]

    cstride = max(1, int(round(cfg.coarse_step / dr)))
    coarse_read = np.arange(0, n_r, cstride, dtype=np.int64) + ext
    coarse_rads = rhos[coarse_read]

    margin = r_lo + dr
    xs = np.arange(margin, eye.width - 1 - margin + 1e-9, cfg.coarse_step)
    ys = np.arange(margin, eye.height - 1 - margin + 1e-9, cfg.coarse_step)
    if xs.size == 0 or ys.size == 0:
        raise InputTooSmall("eye region leaves no searchable center positions")
    gx, gy = np.meshgrid(xs, ys)
    cxs, cys = _as_c(gx.ravel()), _as_c(gy.ravel())

    resp = _kernels.response_grid(gray, cxs, cys, rhos, taps, coarse_read, cos_a, sin_a, dr)
    pick = _argmax_with_ties(resp, cxs, cys, coarse_rads)
    if pick is None:
        raise NoIrisFound("no circle with an in-bounds response")
    ci, ri = pick
    c0x, c0y, r0 = cxs[ci], cys[ci], coarse_rads[ri]

    # refinement lattice at refine_step around the coarse argmax
    span = int(round(cfg.coarse_step / dr))
    offs = dr * np.arange(-span, span + 1)
    fx = c0x + offs
    fy = c0y + offs
    fgx, fgy = np.meshgrid(fx, fy)
    fcxs, fcys = _as_c(fgx.ravel()), _as_c(fgy.ravel())
    r0_idx = ext + int(round((r0 - r_lo) / dr))
    lo_idx = max(ext, r0_idx - span)
    hi_idx = min(ext + n_r - 1, r0_idx + span)
    fine_read = np.arange(lo_idx, hi_idx + 1, dtype=np.int64)
    fine_r = rhos[fine_read]

    resp2 = _kernels.response_grid(gray, fcxs, fcys, rhos, taps, fine_read, cos_a, sin_a, dr)
    pick2 = _argmax_with_ties(resp2, fcxs, fcys, fine_r)
    if pick2 is None:
        raise NoIrisFound("refinement found no in-bounds response")
    ci2, ri2 = pick2
    best_resp = float(resp2[ci2, ri2])
    if best_resp < cfg.min_operator_response:
        raise NoIrisFound(
            f"best response {best_resp:.4g} below minimum {cfg.min_operator_response}"
        )
    return CircleParams(cx=float(fcxs[ci2]), cy=float(fcys[ci2]), r=float(fine_r[ri2])), best_resp


def crop_iris(eye: ImageBuffer, c: CircleParams, crop_size: int) -> IrisCrop:
    """Square crop of side 2.2*r around the circle, resampled to crop_size.

    Windows that fall outside the source are padded by edge replication
    and flagged via edge_padded.
    """
    side = 2.2 * c.r
    scale = side / crop_size
    offs = (np.arange(crop_size) + 0.5) * scale - side / 2.0
    sx = c.cx + offs[None, :]
    sy = c.cy + offs[:, None]
    padded = bool(
        (c.cx + offs[0] < 0)
        or (c.cy + offs[0] < 0)
        or (c.cx + offs[-1] > eye.width - 1)
        or (c.cy + offs[-1] > eye.height - 1)
    )
    sxx = np.broadcast_to(sx, (crop_size, crop_size))
    syy = np.broadcast_to(sy, (crop_size, crop_size))
    planes = [
        np.clip(_ops_py.bilinear_clamped(p, sxx, syy), 0.0, 1.0) for p in eye.planes()
    ]
    data = planes[0] if len(planes) == 1 else np.stack(planes, axis=2)
    out_circle = CircleParams(
        cx=(crop_size - 1) / 2.0, cy=(crop_size - 1) / 2.0, r=c.r / scale
    )
    return IrisCrop(
        image=ImageBuffer.from_array(data),
        circle=out_circle,
        occlusion_fraction=0.0,
        reconstructed=False,
        edge_padded=padded,
    )


def _sub_image(face: ImageBuffer, rect: tuple[int, int, int, int]) -> ImageBuffer:
    x, y, w, h = rect
    x0, y0 = max(0, x), max(0, y)
    x1, y1 = min(face.width, x + w), min(face.height, y + h)
    if face.channels == 1:
        return ImageBuffer.from_array(face.data[y0:y1, x0:x1])
    return ImageBuffer.from_array(face.data[y0:y1, x0:x1, :])


def extract_pair(face: ImageBuffer, cfg: ExtractionConfig, meta: dict) -> IrisPair:
    """Full per-face extraction: ROIs -> boundary search -> crops.

    meta carries face_id, source, generator and optionally provenance.
    """
    face_id = meta["face_id"]
    left_rect, right_rect = locate_eyes(face, cfg, face_id=face_id)
    crops = {}
    for side, rect in (("left", left_rect), ("right", right_rect)):
        sub = _sub_image(face, rect)
        try:
            circle, _ = daugman_localize(sub, cfg)
        except (NoIrisFound, InputTooSmall) as exc:
            raise ExtractionFailed(side, reason=str(exc)) from exc
        crops[side] = crop_iris(sub, circle, cfg.crop_size)
    return IrisPair(
        face_id=face_id,
        left=crops["left"],
        right=crops["right"],
        source=Source(meta["source"]),
        generator=Generator(meta["generator"]),
        provenance_path=str(meta.get("provenance", "")),
    )
