import numpy as np
import pytest

from iristwin.core import CircleParams, ImageBuffer, IrisCrop


def make_disc_image(
    size: int,
    cx: float,
    cy: float,
    r: float,
    inside: float = 0.25,
    outside: float = 0.85,
    noise: float = 0.0,
    seed: int = 0,
) -> ImageBuffer:
    """Dark disc on a bright background, the constructive eye fixture."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    d = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
    img = np.where(d <= r, inside, outside)
    if noise > 0:
        rng = np.random.default_rng(seed)
        img = img + rng.normal(0.0, noise, size=img.shape)
    return ImageBuffer.from_array(np.clip(img, 0.0, 1.0))


def make_face_image(
    size: int = 320,
    eye_centers=((0.34, 0.47), (0.66, 0.47)),
    iris_r_frac: float = 0.055,
    noise: float = 0.0,
    seed: int = 0,
) -> ImageBuffer:
    """Aligned-face stand-in: skin-toned canvas with two planted dark discs
    at the default eye ROI centers.  Returns (buffer); iris radius is
    iris_r_frac * size pixels at each center."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    img = np.full((size, size), 0.72)
    r = iris_r_frac * size
    for fx, fy in eye_centers:
        d = np.sqrt((xx - fx * size) ** 2 + (yy - fy * size) ** 2)
        img = np.where(d <= r, 0.22, img)
    if noise > 0:
        rng = np.random.default_rng(seed)
        img = img + rng.normal(0.0, noise, size=img.shape)
    return ImageBuffer.from_array(np.clip(img, 0.0, 1.0))


def make_wedge_crop(
    size: int = 96,
    disc_val: float = 0.3,
    wedge_val: float = 0.95,
    wedge_frac: float = 0.2,
    extra_dark_frac: float = 0.0,
    dark_val: float = 0.02,
    wedge_r_frac: float = 1.0,
):
    """Crop with a flat iris disc and an angular wedge 'occlusion'.

    Returns (crop, wedge_mask) where wedge_mask is the ground-truth
    occluded-pixel mask (bright wedge plus optional dark wedge).
    wedge_r_frac < 1 keeps the wedge away from the disc rim.
    """
    ctr = (size - 1) / 2.0
    r = size / 2.2
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    d = np.sqrt((xx - ctr) ** 2 + (yy - ctr) ** 2)
    theta = np.arctan2(yy - ctr, xx - ctr)  # [-pi, pi]
    img = np.full((size, size), 0.8)
    inside = d < r
    img[inside] = disc_val
    reach = inside & (d < wedge_r_frac * r)
    wedge = reach & (theta >= 0) & (theta < 2.0 * np.pi * wedge_frac)
    img[wedge] = wedge_val
    truth = wedge.copy()
    if extra_dark_frac > 0:
        lo = -2.0 * np.pi * extra_dark_frac
        dark = reach & (theta < 0) & (theta >= lo)
        img[dark] = dark_val
        truth |= dark
    crop = IrisCrop(
        image=ImageBuffer.from_array(img),
        circle=CircleParams(cx=ctr, cy=ctr, r=r),
    )
    return crop, truth


@pytest.fixture
def rng():
    return np.random.default_rng(20240513)
