"""Corpus ingestion, dataset layout, quality metrics and the toy corpus.

Dataset layout on disk:

    <out_root>/manifest
    <out_root>/<source>/<generator>/<side>/<face_id>.png

Grayscale crops are written as 16-bit PNG, color crops as 8-bit RGB PNG
(both lossless).  Everything downstream of the seeds is deterministic:
split assignment hashes face_id with the split seed, so re-enumerating
the corpus cannot reshuffle the splits.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .core import (
    GENUINE,
    SYNTHETIC,
    CircleParams,
    Generator,
    ImageBuffer,
    IrisCrop,
    IrisPair,
    PairLabel,
    Source,
    label_for,
)
from .errors import EmptyCorpus, ExtractionFailed, ShapeError, TooOccluded
from .extraction import ExtractionConfig, extract_pair
from .manifest import DatasetManifest, ManifestEntry, write_manifest
from .reconstruction import InpaintConfig, reconstruct_iris

INGEST_LOG = "ingest.log"


# --------------------------------------------------------------------------
# image file IO


def load_image(path) -> ImageBuffer:
    """Read an image file into a [0, 1] float buffer (grayscale or RGB)."""
    img = Image.open(path)
    if img.mode in ("I;16", "I"):
        arr = np.asarray(img, dtype=np.float64) / 65535.0
        return ImageBuffer.from_array(np.clip(arr, 0.0, 1.0))
    if img.mode == "L":
        return ImageBuffer.from_array(np.asarray(img, dtype=np.float64) / 255.0)
    rgb = img.convert("RGB")
    return ImageBuffer.from_array(np.asarray(rgb, dtype=np.float64) / 255.0)


def save_image(buf: ImageBuffer, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if buf.channels == 1:
        arr = np.round(buf.data * 65535.0).astype("<u2")
        Image.fromarray(arr).save(path, format="PNG")  # 16-bit gray
    else:
        arr = np.round(buf.data * 255.0).astype(np.uint8)
        Image.fromarray(arr, mode="RGB").save(path, format="PNG")


# --------------------------------------------------------------------------
# corpus spec and ingestion


@dataclass(frozen=True)
class CorpusGroup:
    source: Source
    generator: Generator
    pattern: str  # glob, relative to the corpus root


@dataclass(frozen=True)
class CorpusSpec:
    root: str
    groups: tuple[CorpusGroup, ...]
    split: tuple[float, float, float] = (0.7, 0.15, 0.15)
    split_seed: int = 0

    def __post_init__(self):
        if any(f <= 0 for f in self.split):
            raise ValueError("split fractions must be positive")
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1.0")


def split_assign(face_id: str, seed: int, fractions) -> str:
    """Stable split assignment from a seeded hash of face_id."""
    digest = hashlib.sha256(f"{seed}:{face_id}".encode("utf-8")).digest()
    u = int.from_bytes(digest[:8], "big") / 2.0**64
    f_train, f_val, _ = fractions
    if u < f_train:
        return "train"
    if u < f_train + f_val:
        return "val"
    return "test"


def crop_path(source: Source, generator: Generator, side: str, face_id: str) -> str:
    return f"{source.value}/{generator.value}/{side}/{face_id}.png"


def ingest(
    spec: CorpusSpec,
    ext_cfg: ExtractionConfig,
    inpaint_cfg: InpaintConfig,
    out_root,
) -> DatasetManifest:
    """Run extraction + reconstruction over a face corpus and persist the
    categorized iris dataset plus its manifest.

    Faces that fail extraction or are too occluded are logged (one line
    per failure in ingest.log) and excluded; zero survivors raise
    EmptyCorpus.
    """
    in_root = Path(spec.root)
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)

    faces: list[tuple[Path, CorpusGroup]] = []
    for group in spec.groups:
        for p in sorted(in_root.glob(group.pattern)):
            faces.append((p, group))

    entries: list[ManifestEntry] = []
    failures: list[str] = []
    for path, group in faces:
        face_id = path.stem
        meta = {
            "face_id": face_id,
            "source": group.source,
            "generator": group.generator,
            "provenance": str(path),
        }
        try:
            pair = extract_pair(load_image(path), ext_cfg, meta)
            left = reconstruct_iris(pair.left, inpaint_cfg)
            right = reconstruct_iris(pair.right, inpaint_cfg)
        except (ExtractionFailed, TooOccluded) as exc:
            failures.append(f"{face_id}\t{type(exc).__name__}\t{exc}")
            continue
        left_rel = crop_path(group.source, group.generator, "left", face_id)
        right_rel = crop_path(group.source, group.generator, "right", face_id)
        save_image(left.image, out_root / left_rel)
        save_image(right.image, out_root / right_rel)
        entries.append(
            ManifestEntry(
                face_id=face_id,
                source=group.source,
                generator=group.generator,
                left_path=left_rel,
                right_path=right_rel,
                left_circle=left.circle,
                right_circle=right.circle,
                occlusion_fractions=(left.occlusion_fraction, right.occlusion_fraction),
                reconstructed=(left.reconstructed, right.reconstructed),
                split=split_assign(face_id, spec.split_seed, spec.split),
            )
        )

    (out_root / INGEST_LOG).write_text(
        "".join(line + "\n" for line in failures), encoding="utf-8"
    )
    if not entries:
        raise EmptyCorpus("no face yielded a usable iris pair")
    manifest = DatasetManifest(
        entries=tuple(entries),
        split_seed=spec.split_seed,
        split_fractions=spec.split,
    )
    write_manifest(manifest, out_root)
    return manifest


def load_pairs(manifest: DatasetManifest, root, split: str | None = None):
    """Materialize (IrisPair, PairLabel) lists from a dataset tree."""
    root = Path(root)
    out = []
    for e in manifest.entries:
        if split is not None and e.split != split:
            continue
        left = IrisCrop(
            image=load_image(root / e.left_path),
            circle=e.left_circle,
            occlusion_fraction=e.occlusion_fractions[0],
            reconstructed=e.reconstructed[0],
        )
        right = IrisCrop(
            image=load_image(root / e.right_path),
            circle=e.right_circle,
            occlusion_fraction=e.occlusion_fractions[1],
            reconstructed=e.reconstructed[1],
        )
        pair = IrisPair(
            face_id=e.face_id,
            left=left,
            right=right,
            source=e.source,
            generator=e.generator,
            provenance_path=e.left_path,
        )
        out.append((pair, label_for(e.source)))
    return out


# --------------------------------------------------------------------------
# image quality metrics


def _box_means(x: np.ndarray, win: int) -> np.ndarray:
    """Means over all win x win windows (valid mode), via summed-area table."""
    ii = np.zeros((x.shape[0] + 1, x.shape[1] + 1), dtype=np.float64)
    ii[1:, 1:] = np.cumsum(np.cumsum(x, axis=0), axis=1)
    s = ii[win:, win:] - ii[:-win, win:] - ii[win:, :-win] + ii[:-win, :-win]
    return s / (win * win)


def _ssim_plane(a: np.ndarray, b: np.ndarray, win: int, c1: float, c2: float) -> float:
    mu_a = _box_means(a, win)
    mu_b = _box_means(b, win)
    s_aa = _box_means(a * a, win) - mu_a * mu_a
    s_bb = _box_means(b * b, win) - mu_b * mu_b
    s_ab = _box_means(a * b, win) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * s_ab + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (s_aa + s_bb + c2)
    return float(np.mean(num / den))


def image_quality_metrics(a: ImageBuffer, b: ImageBuffer) -> dict:
    """SSIM (8x8 uniform windows, constants for a 1.0 dynamic range) and
    PSNR = 10*log10(1 / MSE); identical images report PSNR = +inf."""
    if (a.width, a.height, a.channels) != (b.width, b.height, b.channels):
        raise ShapeError(
            f"images differ: {a.width}x{a.height}x{a.channels} vs "
            f"{b.width}x{b.height}x{b.channels}"
        )
    win = 8
    if a.width < win or a.height < win:
        raise ShapeError(f"images smaller than the {win}x{win} SSIM window")
    mse = float(np.mean((a.data - b.data) ** 2))
    psnr = math.inf if mse == 0.0 else 10.0 * math.log10(1.0 / mse)
    c1 = (0.01 * 1.0) ** 2
    c2 = (0.03 * 1.0) ** 2
    ssim_vals = [
        _ssim_plane(pa, pb, win, c1, c2) for pa, pb in zip(a.planes(), b.planes())
    ]
    return {"ssim": float(np.mean(ssim_vals)), "psnr": psnr}


# --------------------------------------------------------------------------
# toy corpus


def _render_toy_iris(size: int, p: dict) -> np.ndarray:
    """Radial sinusoid iris texture plus one circular specular highlight."""
    ctr = (size - 1) / 2.0
    radius = 0.42 * size
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    rho = np.sqrt((xx - ctr) ** 2 + (yy - ctr) ** 2) / radius
    img = np.full((size, size), 0.82)
    iris = rho <= 1.0
    tex = (
        p["base"]
        + 0.16 * np.sin(2.0 * np.pi * p["f1"] * rho + p["phi1"])
        + 0.08 * np.sin(2.0 * np.pi * p["f2"] * rho + p["phi2"])
    )
    img[iris] = tex[iris]
    pupil = rho <= 0.30
    img[pupil] = 0.08
    hx = ctr + p["hl_rho"] * radius * math.cos(p["hl_angle"])
    hy = ctr + p["hl_rho"] * radius * math.sin(p["hl_angle"])
    sig = 0.09 * size
    img += 0.45 * np.exp(-((xx - hx) ** 2 + (yy - hy) ** 2) / (2.0 * sig * sig))
    return np.clip(img, 0.0, 1.0)


def _draw_toy_params(rng) -> dict:
    return {
        "base": 0.40 + 0.10 * rng.random(),
        "f1": 2.5 + 2.0 * rng.random(),
        "phi1": 2.0 * np.pi * rng.random(),
        "f2": 6.0 + 3.0 * rng.random(),
        "phi2": 2.0 * np.pi * rng.random(),
        "hl_rho": 0.45 + 0.15 * rng.random(),
        "hl_angle": 2.0 * np.pi * rng.random(),
    }


def _perturb_toy_params(p: dict, asymmetry: float, rng) -> dict:
    """GAN-style left/right mismatch: texture phases and the highlight
    position move by an asymmetry-scaled amount."""
    q = dict(p)
    q["phi1"] = p["phi1"] + asymmetry * np.pi * (0.5 + 0.5 * rng.random())
    q["phi2"] = p["phi2"] + asymmetry * np.pi * (0.5 + 0.5 * rng.random())
    q["hl_angle"] = p["hl_angle"] + asymmetry * (np.pi / 1.5) * (0.5 + 0.5 * rng.random())
    q["hl_rho"] = p["hl_rho"] + asymmetry * 0.25 * (rng.random() - 0.5)
    return q


def generate_toy_pairs(
    n_real: int,
    n_gan: int,
    asymmetry: float,
    noise: float,
    seed: int,
    size: int = 64,
) -> list[tuple[IrisPair, PairLabel]]:
    """Synthetic desk-scale corpus of labeled left/right iris pairs.

    REAL pairs render the same iris twice with independent pixel noise;
    GAN pairs perturb the right crop's texture phase and highlight
    position by the asymmetry parameter.  asymmetry == 0 and noise == 0
    makes GAN pairs indistinguishable from REAL ones.
    """
    if n_real < 1 or n_gan < 1:
        raise ValueError("need at least one pair of each kind")
    if not 0.0 <= asymmetry <= 1.0:
        raise ValueError("asymmetry must lie in [0, 1]")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x70F]))
    circle = CircleParams(cx=(size - 1) / 2.0, cy=(size - 1) / 2.0, r=0.42 * size)

    def to_crop(img: np.ndarray) -> IrisCrop:
        noisy = img + rng.normal(0.0, noise, size=img.shape) if noise > 0 else img
        return IrisCrop(
            image=ImageBuffer.from_array(np.clip(noisy, 0.0, 1.0)), circle=circle
        )

    pairs: list[tuple[IrisPair, PairLabel]] = []
    for i in range(n_real + n_gan):
        is_real = i < n_real
        params = _draw_toy_params(rng)
        left_img = _render_toy_iris(size, params)
        if is_real:
            right_img = _render_toy_iris(size, params)
            source, generator = Source.REAL, Generator.NONE
            face_id = f"toy_real_{i:04d}"
        else:
            right_img = _render_toy_iris(size, _perturb_toy_params(params, asymmetry, rng))
            source = Source.GAN
            generator = Generator.PROGAN if i % 2 == 0 else Generator.STYLEGAN
            face_id = f"toy_gan_{i - n_real:04d}"
        pair = IrisPair(
            face_id=face_id,
            left=to_crop(left_img),
            right=to_crop(right_img),
            source=source,
            generator=generator,
            provenance_path=f"toy://{seed}/{face_id}",
        )
        pairs.append((pair, GENUINE if is_real else SYNTHETIC))
    return pairs


def write_pairs_dataset(pairs, out_root, split_of=None, split_seed: int = 0) -> DatasetManifest:
    """Persist in-memory pairs as a dataset tree + manifest.

    split_of maps face_id -> split name; unknown faces land in "train".
    """
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    entries = []
    for pair, _ in pairs:
        left_rel = crop_path(pair.source, pair.generator, "left", pair.face_id)
        right_rel = crop_path(pair.source, pair.generator, "right", pair.face_id)
        save_image(pair.left.image, out_root / left_rel)
        save_image(pair.right.image, out_root / right_rel)
        split = split_of(pair.face_id) if split_of else "train"
        entries.append(
            ManifestEntry(
                face_id=pair.face_id,
                source=pair.source,
                generator=pair.generator,
                left_path=left_rel,
                right_path=right_rel,
                left_circle=pair.left.circle,
                right_circle=pair.right.circle,
                occlusion_fractions=(
                    pair.left.occlusion_fraction,
                    pair.right.occlusion_fraction,
                ),
                reconstructed=(pair.left.reconstructed, pair.right.reconstructed),
                split=split,
            )
        )
    manifest = DatasetManifest(entries=tuple(entries), split_seed=split_seed)
    write_manifest(manifest, out_root)
    return manifest
