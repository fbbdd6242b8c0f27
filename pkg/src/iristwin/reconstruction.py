"""Occlusion detection and harmonic (diffusion) inpainting of iris crops.

Occluded pixels are found by robust luminance deviation inside the iris
circle (median +- mad_k * MAD); the fill relaxes each masked pixel to
the mean of its 4-neighbors with the unmasked pixels as boundary, so the
result satisfies the discrete Laplace equation and the maximum
principle.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import ImageBuffer, IrisCrop
from .errors import NoBoundary, ShapeError, TooOccluded

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class InpaintConfig:
    mad_k: float = 3.0
    max_iters: int = 5000
    tol: float = 1e-4
    occlusion_reject_threshold: float = 0.5

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0.0 <= self.occlusion_reject_threshold <= 1.0:
            raise ValueError("occlusion_reject_threshold must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class OcclusionMask:
    width: int
    height: int
    mask: np.ndarray  # bool, True = occluded / to fill
    fraction: float = 0.0  # masked / in-circle pixel count

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        if m.shape != (self.height, self.width):
            raise ValueError(
                f"mask shape {m.shape} does not match {(self.height, self.width)}"
            )
        m = np.ascontiguousarray(m)
        m.flags.writeable = False
        object.__setattr__(self, "mask", m)


@dataclass(frozen=True, eq=False)
class InpaintResult:
    image: ImageBuffer
    converged: bool
    iterations: int


def occlusion_mask(crop: IrisCrop, cfg: InpaintConfig) -> OcclusionMask:
    """Mask in-circle pixels whose luminance is a robust outlier.

    A pixel strictly inside the crop circle is masked iff its luminance
    deviates from the in-circle median by more than mad_k * MAD.  The
    threshold carries a 1e-9 absolute floor so a MAD of exactly zero
    (flat iris) does not flag float rounding dust as occlusion.
    """
    luma = crop.image.gray()
    h, w = luma.shape
    yy, xx = np.mgrid[0:h, 0:w]
    c = crop.circle
    inside = (xx - c.cx) ** 2 + (yy - c.cy) ** 2 < c.r**2
    n_inside = int(inside.sum())
    if n_inside == 0:
        return OcclusionMask(width=w, height=h, mask=np.zeros((h, w), dtype=bool))
    vals = luma[inside]
    med = float(np.median(vals))
    mad = float(np.median(np.abs(vals - med)))
    mask = inside & (np.abs(luma - med) > cfg.mad_k * mad + 1e-9)
    fraction = float(mask.sum()) / n_inside
    return OcclusionMask(width=w, height=h, mask=mask, fraction=fraction)


def inpaint_diffusion(image: ImageBuffer, mask: OcclusionMask, cfg: InpaintConfig) -> InpaintResult:
    """Fill masked pixels per channel so each equals the mean of its
    4-neighbors (within cfg.tol); unmasked pixels pass through untouched.

    Masked regions are seeded with the mean of their boundary ring, so
    every iterate stays inside [min, max] of the boundary values.  A run
    that exhausts max_iters returns its best iterate with converged=False.
    """
    if (mask.width, mask.height) != (image.width, image.height):
        raise ShapeError(
            f"mask {mask.width}x{mask.height} does not match image "
            f"{image.width}x{image.height}"
        )
    m = mask.mask
    if not m.any():
        return InpaintResult(image=image, converged=True, iterations=0)
    if m.all():
        raise NoBoundary("every pixel is masked; nothing to diffuse from")

    # boundary ring: unmasked pixels 4-adjacent to the mask
    ring = np.zeros_like(m)
    ring[1:, :] |= m[:-1, :]
    ring[:-1, :] |= m[1:, :]
    ring[:, 1:] |= m[:, :-1]
    ring[:, :-1] |= m[:, 1:]
    ring &= ~m

    m_u8 = np.ascontiguousarray(m, dtype=np.uint8)
    out_planes = []
    converged = True
    iterations = 0
    for plane in image.planes():
        ch = np.ascontiguousarray(plane, dtype=np.float64).copy()
        seed = float(ch[ring].mean()) if ring.any() else float(ch[~m].mean())
        ch[m] = seed
        iters, ok = _kernels.fill_masked(ch, m_u8, cfg.tol, cfg.max_iters)
        converged = converged and ok
        iterations = max(iterations, int(iters))
        out_planes.append(ch)
    data = out_planes[0] if len(out_planes) == 1 else np.stack(out_planes, axis=2)
    return InpaintResult(
        image=ImageBuffer.from_array(data), converged=converged, iterations=iterations
    )


def reconstruct_iris(crop: IrisCrop, cfg: InpaintConfig) -> IrisCrop:
    """Detect occlusion and fill it; reject crops occluded beyond the
    configured threshold instead of hallucinating most of the iris."""
    om = occlusion_mask(crop, cfg)
    if om.fraction == 0.0:
        return crop
    if om.fraction > cfg.occlusion_reject_threshold:
        raise TooOccluded(
            f"occlusion fraction {om.fraction:.3f} exceeds "
            f"{cfg.occlusion_reject_threshold}"
        )
    res = inpaint_diffusion(crop.image, om, cfg)
    if not res.converged:
        log.warning(
            "inpainting hit max_iters=%d without converging (tol=%g)",
            cfg.max_iters,
            cfg.tol,
        )
    return IrisCrop(
        image=res.image,
        circle=crop.circle,
        occlusion_fraction=om.fraction,
        reconstructed=True,
        edge_padded=crop.edge_padded,
        fill_converged=res.converged,
    )
