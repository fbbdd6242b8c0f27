"""Exception types shared across the pipeline stages."""


class IrisTwinError(Exception):
    """Base class for all pipeline errors."""


class InputTooSmall(IrisTwinError):
    """Input image is below the minimum size a stage requires."""


class CircleOutOfBounds(IrisTwinError):
    """Circle (plus one radial sampling step) does not fit inside the image."""


class NoIrisFound(IrisTwinError):
    """Boundary search found no response above the configured minimum."""


class ExtractionFailed(IrisTwinError):
    """Iris extraction failed on one side of a face."""

    def __init__(self, side: str, reason: str = ""):
        self.side = side
        self.reason = reason
        msg = f"extraction failed on {side} eye"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class TooOccluded(IrisTwinError):
    """Occlusion fraction exceeds the reconstruction reject threshold."""


class NoBoundary(IrisTwinError):
    """Inpainting mask covers the whole image; no boundary values exist."""


class ShapeError(IrisTwinError):
    """Operands have incompatible shapes or sizes."""


class DomainError(IrisTwinError):
    """Scalar argument outside its documented domain."""


class SingleClassError(IrisTwinError):
    """Operation requires pairs of both labels but received only one."""


class EmptyDataset(IrisTwinError):
    """Evaluation requested on an empty pair list."""


class EmptyCorpus(IrisTwinError):
    """Ingestion or loading produced zero usable iris pairs."""


class EmptyReport(IrisTwinError):
    """Report rendering requested with no rows."""


class ConfigError(IrisTwinError):
    """Unusable CLI arguments or configuration file contents."""
