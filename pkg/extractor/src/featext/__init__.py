"""Keypoint extraction adapter: OpenCV detectors in, matcher interchange
feature-set files out."""

from .extract import ExtractionError, ExtractionSpec, available_detectors, extract

__version__ = "0.1.0"

__all__ = ["ExtractionError", "ExtractionSpec", "available_detectors", "extract"]
