"""Exception hierarchy shared across the pipeline."""


class AneusegError(Exception):
    """Base class for all domain errors raised by this package."""


class VolumeError(AneusegError):
    """Invalid volumetric data (bad values, bad shape, bad spacing)."""


class GeometryError(AneusegError):
    """Two grids that should be aligned are not."""


class NiftiError(AneusegError):
    """Malformed or unsupported NIfTI-1 file."""


class PatchError(AneusegError):
    """Patch shape incompatible with the network architecture."""


class ConfigError(AneusegError):
    """Invalid or unknown configuration values."""


class TrainingError(AneusegError):
    """Training aborted (non-finite loss or gradients)."""


class CheckpointError(AneusegError):
    """Malformed or incompatible checkpoint file."""


class MetricsError(AneusegError):
    """Metric undefined for the given inputs."""


class EmptyMaskError(MetricsError):
    """Surface distances requested for an empty mask."""


class ReportError(AneusegError):
    """Report inputs missing or inconsistent."""
