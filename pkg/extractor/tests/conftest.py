import math

import cv2
import numpy as np
import pytest


def textured_image(rng: np.random.Generator, width=480, height=360) -> np.ndarray:
    """Synthetic but feature-rich image: blobs, edges, and mild noise."""
    img = np.full((height, width), 96, dtype=np.uint8)
    for _ in range(60):
        center = (int(rng.integers(0, width)), int(rng.integers(0, height)))
        radius = int(rng.integers(4, 26))
        color = int(rng.integers(0, 256))
        cv2.circle(img, center, radius, color, -1)
    for _ in range(25):
        p0 = (int(rng.integers(0, width)), int(rng.integers(0, height)))
        p1 = (int(rng.integers(0, width)), int(rng.integers(0, height)))
        cv2.rectangle(img, p0, p1, int(rng.integers(0, 256)), 2)
    img = cv2.GaussianBlur(img, (3, 3), 0.8)
    noise = rng.normal(0, 4, img.shape)
    return np.clip(img.astype(np.float64) + noise, 0, 255).astype(np.uint8)


@pytest.fixture(scope="session")
def sample_images(tmp_path_factory):
    root = tmp_path_factory.mktemp("images")
    paths = []
    for k in range(5):
        rng = np.random.default_rng(100 + k)
        path = root / f"sample_{k}.png"
        cv2.imwrite(str(path), textured_image(rng))
        paths.append(path)
    return paths


@pytest.fixture(scope="session")
def stereo_pair(tmp_path_factory):
    """One scene viewed twice: warped copy plus the ground-truth warp."""
    root = tmp_path_factory.mktemp("stereo")
    rng = np.random.default_rng(7)
    left = textured_image(rng, width=560, height=420)
    angle_deg, scale, tx, ty = 6.0, 1.05, 18.0, -9.0
    center = (left.shape[1] / 2.0, left.shape[0] / 2.0)
    M = cv2.getRotationMatrix2D(center, angle_deg, scale)
    M[:, 2] += (tx, ty)
    right = cv2.warpAffine(left, M, (left.shape[1], left.shape[0]),
                           flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_REFLECT)
    left_path, right_path = root / "left.png", root / "right.png"
    cv2.imwrite(str(left_path), left)
    cv2.imwrite(str(right_path), right)
    H = np.vstack([M, [0.0, 0.0, 1.0]])
    return left_path, right_path, H
