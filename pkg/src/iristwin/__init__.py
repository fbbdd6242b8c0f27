"""iristwin: iris extraction, reconstruction and Siamese left/right
similarity scoring for telling GAN-synthesized faces from real ones."""

__version__ = "0.1.0"

from .core import (  # noqa: F401
    GENUINE,
    SYNTHETIC,
    CircleParams,
    Generator,
    ImageBuffer,
    IrisCrop,
    IrisPair,
    PairLabel,
    Source,
)
