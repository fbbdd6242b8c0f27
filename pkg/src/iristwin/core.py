"""Domain value types: rasters, circles, iris crops and labeled pairs.

Everything here is an immutable value object; instances can be shared
freely across workers.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class Source(str, Enum):
    REAL = "real"
    GAN = "gan"


class Generator(str, Enum):
    NONE = "none"
    PROGAN = "progan"
    STYLEGAN = "stylegan"


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """Row-major pixel raster with float intensities in [0, 1].

    channels == 1 stores a (height, width) array, channels == 3 a
    (height, width, 3) array.  The backing array is made read-only.
    """

    width: int
    height: int
    channels: int
    data: np.ndarray

    def __post_init__(self):
        if self.channels not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {self.channels}")
        expected = (
            (self.height, self.width)
            if self.channels == 1
            else (self.height, self.width, self.channels)
        )
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.shape != expected:
            raise ValueError(f"data shape {arr.shape} does not match {expected}")
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("intensity values must lie in [0, 1]")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_array(cls, arr) -> "ImageBuffer":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 2:
            return cls(width=arr.shape[1], height=arr.shape[0], channels=1, data=arr)
        if arr.ndim == 3 and arr.shape[2] == 3:
            return cls(width=arr.shape[1], height=arr.shape[0], channels=3, data=arr)
        raise ValueError(f"unsupported array shape {arr.shape}")

    def gray(self) -> np.ndarray:
        """Scalar intensity plane; mean of the color planes for 3-channel buffers."""
        if self.channels == 1:
            return self.data
        return self.data.mean(axis=2)

    def planes(self) -> list[np.ndarray]:
        if self.channels == 1:
            return [self.data]
        return [self.data[:, :, c] for c in range(self.channels)]


@dataclass(frozen=True)
class CircleParams:
    """Iris boundary hypothesis: sub-pixel center plus radius, in pixels."""

    cx: float
    cy: float
    r: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"radius must be positive, got {self.r}")


@dataclass(frozen=True, eq=False)
class IrisCrop:
    """Square iris crop with its boundary circle in crop coordinates.

    occlusion_fraction records the pre-fill occlusion estimate;
    edge_padded and fill_converged are provenance flags set by
    crop_iris and reconstruct_iris respectively.
    """

    image: ImageBuffer
    circle: CircleParams
    occlusion_fraction: float = 0.0
    reconstructed: bool = False
    edge_padded: bool = False
    fill_converged: bool = True

    def __post_init__(self):
        if self.image.width != self.image.height:
            raise ValueError("iris crops must be square")
        if not 0.0 <= self.occlusion_fraction <= 1.0:
            raise ValueError("occlusion_fraction must lie in [0, 1]")
        if self.reconstructed and self.occlusion_fraction <= 0.0:
            raise ValueError(
                "a reconstructed crop must record its pre-fill occlusion fraction"
            )

    @property
    def crop_size(self) -> int:
        return self.image.width


@dataclass(frozen=True, eq=False)
class IrisPair:
    """Left/right iris crops from one face plus provenance."""

    face_id: str
    left: IrisCrop
    right: IrisCrop
    source: Source
    generator: Generator
    provenance_path: str = ""

    def __post_init__(self):
        if self.source is Source.REAL and self.generator is not Generator.NONE:
            raise ValueError("REAL pairs must use generator NONE")
        if self.source is Source.GAN and self.generator is Generator.NONE:
            raise ValueError("GAN pairs must name their generator")
        if self.left.crop_size != self.right.crop_size:
            raise ValueError("left and right crops must share crop_size")


@dataclass(frozen=True)
class PairLabel:
    """1 for a genuine-source (REAL face) pair, 0 for a synthetic-source pair."""

    y: int

    def __post_init__(self):
        if self.y not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.y}")


GENUINE = PairLabel(1)
SYNTHETIC = PairLabel(0)


def label_for(source: Source) -> PairLabel:
    return GENUINE if source is Source.REAL else SYNTHETIC
