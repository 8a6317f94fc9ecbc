"""Detect keypoints on an image and write an interchange feature-set file.

The output is the line-delimited JSON format the matching engine loads:
a header record {"type": "feature_set", "width", "height",
"descriptor_len", "count"} followed by one record per feature with x, y,
scale, orientation (radians in [-pi, pi)), and the descriptor vector.
Orientations are converted from OpenCV's degrees here so the interchange
stays single-unit; descriptors are L2-normalized and otherwise passed
through at whatever length the detector produces.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import cv2
import numpy as np


class ExtractionError(RuntimeError):
    """Unreadable image, unknown detector, or a detector that does not
    provide the geometry the matcher needs."""


def _detector_registry() -> dict:
    registry = {}
    for name, factory in (
        ("sift", "SIFT_create"),
        ("orb", "ORB_create"),
        ("akaze", "AKAZE_create"),
        ("kaze", "KAZE_create"),
        ("brisk", "BRISK_create"),
    ):
        if hasattr(cv2, factory):
            registry[name] = getattr(cv2, factory)
    return registry


def available_detectors() -> list[str]:
    return sorted(_detector_registry())


@dataclass(frozen=True)
class ExtractionSpec:
    image: str
    out: str
    detector: str = "sift"
    max_features: int | None = None

    def __post_init__(self) -> None:
        if self.max_features is not None and self.max_features < 1:
            raise ValueError("max_features must be >= 1")


def extract(spec: ExtractionSpec) -> int:
    """Run the detector and write the feature-set file; returns the number
    of features written."""
    registry = _detector_registry()
    if spec.detector not in registry:
        raise ExtractionError(
            f"unknown detector {spec.detector!r}; available: {available_detectors()}")
    img = cv2.imread(str(spec.image), cv2.IMREAD_GRAYSCALE)
    if img is None:
        raise ExtractionError(f"could not read image {spec.image!r}")
    height, width = img.shape[:2]

    detector = registry[spec.detector]()
    keypoints, descriptors = detector.detectAndCompute(img, None)
    if not keypoints or descriptors is None:
        raise ExtractionError(f"{spec.detector} found no features in {spec.image!r}")

    sizes = np.array([kp.size for kp in keypoints], dtype=np.float64)
    angles = np.array([kp.angle for kp in keypoints], dtype=np.float64)
    if np.any(sizes <= 0):
        raise ExtractionError(f"{spec.detector} does not provide a scale per keypoint")
    if np.any(angles < 0):
        # OpenCV marks undefined orientation as -1
        raise ExtractionError(f"{spec.detector} does not provide an orientation per keypoint")

    pts = np.array([kp.pt for kp in keypoints], dtype=np.float64)
    desc = np.asarray(descriptors, dtype=np.float64)
    norms = np.linalg.norm(desc, axis=1)
    keep = norms > 0
    pts, sizes, angles, desc, norms = (
        pts[keep], sizes[keep], angles[keep], desc[keep], norms[keep])
    if pts.shape[0] == 0:
        raise ExtractionError(f"{spec.detector} produced only degenerate descriptors")

    if spec.max_features is not None and pts.shape[0] > spec.max_features:
        responses = np.array(
            [kp.response for kp, k in zip(keypoints, keep) if k], dtype=np.float64)
        order = np.lexsort((np.arange(len(responses)), -responses))[: spec.max_features]
        order = np.sort(order)
        pts, sizes, angles, desc, norms = (
            pts[order], sizes[order], angles[order], desc[order], norms[order])

    desc = desc / norms[:, None]
    # subpixel refinement can overshoot the border by a fraction of a pixel
    eps = 1e-6
    xs = np.clip(pts[:, 0], 0.0, width - eps)
    ys = np.clip(pts[:, 1], 0.0, height - eps)
    radians = (np.deg2rad(angles) + math.pi) % (2 * math.pi) - math.pi

    with open(spec.out, "w", encoding="utf-8") as fh:
        header = {
            "type": "feature_set",
            "width": float(width),
            "height": float(height),
            "descriptor_len": int(desc.shape[1]),
            "count": int(desc.shape[0]),
        }
        fh.write(json.dumps(header) + "\n")
        for i in range(desc.shape[0]):
            fh.write(json.dumps({
                "x": float(xs[i]),
                "y": float(ys[i]),
                "scale": float(sizes[i]),
                "orientation": float(radians[i]),
                "descriptor": desc[i].tolist(),
            }) + "\n")
    return int(desc.shape[0])
