"""Desk-scale 3D cerebral-aneurysm segmentation pipeline.

NIfTI I/O, spacing normalization, a from-scratch 3D U-Net with manual
reverse-mode gradients, cross-validated training, Gaussian-weighted
sliding-window ensemble inference, and a full evaluation suite — all on
NumPy/SciPy, reproducible bit-for-bit from a single seed.
"""

__version__ = "0.1.0"

from .errors import AneusegError
from .estimators import SegmentationPreprocessor, UNetSegmenter
from .volume import LabelMask, Volume3

__all__ = [
    "AneusegError",
    "LabelMask",
    "SegmentationPreprocessor",
    "UNetSegmenter",
    "Volume3",
    "__version__",
]
