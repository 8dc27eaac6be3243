"""Detector-to-tensor extraction bridge.

Turns labeled images into the tensor-directory dataset layout consumed by
the oboi toolchain, using pluggable detector adapters. This package only
talks to the downstream side through its public file formats and CLI; it
does not import it.
"""

from .config import (
    DetectorConfig,
    ExtractionConfig,
    ImageEntry,
    load_config,
    parse_config,
)
from .detectors import DETECTORS, Detection, build_detector
from .errors import (
    DetectorUnavailable,
    ExtractionFailed,
    ExtractorError,
    InvalidExtractionConfig,
)
from .extract import extract, run_validation
from .tensorfile import tensor_bytes, write_tensor

__version__ = "0.1.0"

__all__ = [
    "DETECTORS",
    "Detection",
    "DetectorConfig",
    "DetectorUnavailable",
    "ExtractionConfig",
    "ExtractionFailed",
    "ExtractorError",
    "ImageEntry",
    "InvalidExtractionConfig",
    "build_detector",
    "extract",
    "load_config",
    "parse_config",
    "run_validation",
    "tensor_bytes",
    "write_tensor",
]
