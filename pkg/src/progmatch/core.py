"""Domain types and the feature-set interchange format.

A feature is a detected keypoint: position, scale, orientation, and an
appearance descriptor. Feature sets are immutable after construction and
carry their descriptors as a dense array so the numerical modules can
operate on them without per-feature boxing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Final, Iterator, NamedTuple, Sequence

import numpy as np

# Label value for a feature whose counterpart does not exist in the other
# image. Kept as an integer sentinel so label vectors stay plain int arrays.
UNMATCHED: Final[int] = -1

TWO_PI: Final[float] = 2.0 * math.pi


class FeatureSetError(ValueError):
    """Raised when a feature set violates its construction invariants."""


class ConfigError(ValueError):
    """Raised when a matcher configuration field is out of range."""


def wrap_angle(theta: float) -> float:
    """Wrap an angle in radians into [-pi, pi)."""
    return (theta + math.pi) % TWO_PI - math.pi


@dataclass(frozen=True)
class Feature:
    """One detected keypoint: position (px), scale (> 0), orientation
    (radians in [-pi, pi)), and a unit-norm descriptor vector."""

    x: float
    y: float
    scale: float
    orientation: float
    descriptor: np.ndarray

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=np.float64)


class Correspondence(NamedTuple):
    """MRF label: reference feature index paired with a target index or
    UNMATCHED."""

    ref_index: int
    target: int = UNMATCHED

    @property
    def matched(self) -> bool:
        return self.target != UNMATCHED


class FeatureSet:
    """Ordered, validated collection of features from one image.

    Descriptors are L2-normalized and orientations wrapped to [-pi, pi) at
    construction; indices are stable file order. Instances are immutable
    and safe to share across threads.
    """

    def __init__(
        self,
        width: float,
        height: float,
        positions: np.ndarray,
        scales: np.ndarray,
        orientations: np.ndarray,
        descriptors: np.ndarray,
        *,
        bounds_tolerance: float = 0.0,
    ):
        if width <= 0 or height <= 0:
            raise FeatureSetError(f"invalid image size {width}x{height}")
        positions = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
        scales = np.asarray(scales, dtype=np.float64).ravel()
        orientations = np.asarray(orientations, dtype=np.float64).ravel()
        descriptors = np.atleast_2d(np.asarray(descriptors, dtype=np.float64))
        n = positions.shape[0]
        if not (len(scales) == len(orientations) == descriptors.shape[0] == n):
            raise FeatureSetError("feature field arrays disagree in length")
        if n > 0 and descriptors.shape[1] < 1:
            raise FeatureSetError("descriptor length must be >= 1")

        for arr, name in ((positions, "position"), (scales, "scale"),
                          (orientations, "orientation"), (descriptors, "descriptor")):
            bad = np.flatnonzero(~np.isfinite(arr).reshape(max(n, 1), -1).all(axis=1)) if n else []
            if len(bad):
                raise FeatureSetError(f"feature {bad[0]}: non-finite {name}")

        bad = np.flatnonzero(scales <= 0)
        if bad.size:
            raise FeatureSetError(f"feature {bad[0]}: scale must be > 0, got {scales[bad[0]]}")

        tol = float(bounds_tolerance)
        out = (
            (positions[:, 0] < -tol) | (positions[:, 0] >= width + tol)
            | (positions[:, 1] < -tol) | (positions[:, 1] >= height + tol)
        )
        bad = np.flatnonzero(out)
        if bad.size:
            raise FeatureSetError(
                f"feature {bad[0]}: position {tuple(positions[bad[0]])} outside "
                f"[0,{width})x[0,{height})"
            )

        norms = np.linalg.norm(descriptors, axis=1)
        bad = np.flatnonzero(norms == 0)
        if bad.size:
            raise FeatureSetError(f"feature {bad[0]}: zero-norm descriptor")

        self._width = float(width)
        self._height = float(height)
        self._positions = positions
        self._positions.setflags(write=False)
        self._scales = scales
        self._scales.setflags(write=False)
        self._orientations = (orientations + math.pi) % TWO_PI - math.pi
        self._orientations.setflags(write=False)
        self._descriptors = descriptors / norms[:, None] if n else descriptors
        self._descriptors.setflags(write=False)

    @property
    def width(self) -> float:
        return self._width

    @property
    def height(self) -> float:
        return self._height

    @property
    def positions(self) -> np.ndarray:
        """(N, 2) array of x, y pixel positions."""
        return self._positions

    @property
    def scales(self) -> np.ndarray:
        return self._scales

    @property
    def orientations(self) -> np.ndarray:
        return self._orientations

    @property
    def descriptors(self) -> np.ndarray:
        """(N, D) array of unit-norm descriptors."""
        return self._descriptors

    @property
    def descriptor_len(self) -> int:
        return self._descriptors.shape[1]

    def __len__(self) -> int:
        return self._positions.shape[0]

    def __getitem__(self, i: int) -> Feature:
        return Feature(
            x=float(self._positions[i, 0]),
            y=float(self._positions[i, 1]),
            scale=float(self._scales[i]),
            orientation=float(self._orientations[i]),
            descriptor=self._descriptors[i],
        )

    def __iter__(self) -> Iterator[Feature]:
        return (self[i] for i in range(len(self)))

    @classmethod
    def from_features(
        cls,
        width: float,
        height: float,
        features: Sequence[Feature],
        *,
        bounds_tolerance: float = 0.0,
    ) -> "FeatureSet":
        if features:
            positions = np.array([[f.x, f.y] for f in features])
            scales = np.array([f.scale for f in features])
            orientations = np.array([f.orientation for f in features])
            descriptors = np.array([np.asarray(f.descriptor, dtype=np.float64) for f in features])
        else:
            positions = np.zeros((0, 2))
            scales = np.zeros(0)
            orientations = np.zeros(0)
            descriptors = np.zeros((0, 1))
        return cls(width, height, positions, scales, orientations, descriptors,
                   bounds_tolerance=bounds_tolerance)


@dataclass(frozen=True)
class MatcherConfig:
    """All matcher constants.

    lam weighs pairwise against unary energy, kappa bounds the per-feature
    candidate count, alpha is the unmatched penalty, nndr_theta / seed_count
    control seed selection, knn the graph connectivity, theta_seed the
    consistency gate (squared pixels). bp_* control message passing;
    bp_damping blends each update with the previous messages, which keeps
    loopy graphs from oscillating without moving any fixed point.
    """

    lam: float = 0.1
    kappa: int = 15
    alpha: float = 0.5
    nndr_theta: float = 0.9
    seed_count: int = 100
    knn: int = 5
    theta_seed: float = 80.0
    bp_max_iters: int = 100
    bp_epsilon: float = 1e-6
    bp_damping: float = 0.5
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ConfigError(f"lam must be >= 0, got {self.lam}")
        if self.kappa < 1:
            raise ConfigError(f"kappa must be >= 1, got {self.kappa}")
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if not 0 < self.nndr_theta <= 1:
            raise ConfigError(f"nndr_theta must be in (0, 1], got {self.nndr_theta}")
        if self.seed_count < 1:
            raise ConfigError(f"seed_count must be >= 1, got {self.seed_count}")
        if self.knn < 1:
            raise ConfigError(f"knn must be >= 1, got {self.knn}")
        if self.theta_seed < 0:
            raise ConfigError(f"theta_seed must be >= 0, got {self.theta_seed}")
        if self.bp_max_iters < 1:
            raise ConfigError(f"bp_max_iters must be >= 1, got {self.bp_max_iters}")
        if self.bp_epsilon <= 0:
            raise ConfigError(f"bp_epsilon must be > 0, got {self.bp_epsilon}")
        if not 0 <= self.bp_damping < 1:
            raise ConfigError(f"bp_damping must be in [0, 1), got {self.bp_damping}")
        if not isinstance(self.rng_seed, int):
            raise ConfigError(f"rng_seed must be an integer, got {self.rng_seed!r}")


def default_config() -> MatcherConfig:
    """Published defaults: lam=0.1, kappa=15, alpha=0.5, nndr_theta=0.9,
    seed_count=100, knn=5, theta_seed=80."""
    return MatcherConfig()


@dataclass(frozen=True)
class SimilarityTransform:
    """3x3 homogeneous 2D similarity: uniform scale, rotation, translation.

    The upper-left block must equal sigma*R with sigma > 0 and R a proper
    rotation, within 1e-9.
    """

    matrix: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValueError(f"similarity matrix must be 3x3, got {m.shape}")
        if not np.allclose(m[2], [0.0, 0.0, 1.0], atol=1e-9, rtol=0):
            raise ValueError(f"bottom row must be (0, 0, 1), got {m[2]}")
        a, b, c, d = m[0, 0], m[0, 1], m[1, 0], m[1, 1]
        sigma = math.hypot(a, c)
        if sigma <= 0:
            raise ValueError("similarity scale must be > 0")
        if abs(a - d) > 1e-9 * max(1.0, sigma) or abs(b + c) > 1e-9 * max(1.0, sigma):
            raise ValueError("upper-left block is not sigma*R with det(R) = +1")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_params(cls, scale: float, angle: float, tx: float = 0.0, ty: float = 0.0) -> "SimilarityTransform":
        c, s = scale * math.cos(angle), scale * math.sin(angle)
        return cls(np.array([[c, -s, tx], [s, c, ty], [0.0, 0.0, 1.0]]))

    @property
    def scale(self) -> float:
        return math.hypot(self.matrix[0, 0], self.matrix[1, 0])

    @property
    def angle(self) -> float:
        return math.atan2(self.matrix[1, 0], self.matrix[0, 0])

    @property
    def translation(self) -> np.ndarray:
        return self.matrix[:2, 2].copy()

    def inverse(self) -> "SimilarityTransform":
        # Closed form from (sigma, theta, t): exact and cheap.
        return SimilarityTransform.from_params(
            1.0 / self.scale, -self.angle,
            *(-_rotate(self.translation, -self.angle) / self.scale),
        )

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform (..., 2) points."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.matrix[:2, :2].T + self.matrix[:2, 2]

    def __matmul__(self, other: "SimilarityTransform") -> "SimilarityTransform":
        return SimilarityTransform(self.matrix @ other.matrix)


def _rotate(v: np.ndarray, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


# --- interchange format -------------------------------------------------
#
# Line-delimited JSON. First record is the header
#   {"type": "feature_set", "width": W, "height": H,
#    "descriptor_len": D, "count": N}
# followed by N feature records
#   {"x": ..., "y": ..., "scale": ..., "orientation": ..., "descriptor": [...]}
# Reals round-trip exactly (json uses repr); orientations are radians.


def save_feature_set(fs: FeatureSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        header = {
            "type": "feature_set",
            "width": fs.width,
            "height": fs.height,
            "descriptor_len": fs.descriptor_len,
            "count": len(fs),
        }
        fh.write(json.dumps(header) + "\n")
        for i in range(len(fs)):
            rec = {
                "x": float(fs.positions[i, 0]),
                "y": float(fs.positions[i, 1]),
                "scale": float(fs.scales[i]),
                "orientation": float(fs.orientations[i]),
                "descriptor": fs.descriptors[i].tolist(),
            }
            fh.write(json.dumps(rec) + "\n")


def load_feature_set(path, *, bounds_tolerance: float = 0.0) -> FeatureSet:
    """Load and validate an interchange file.

    Rejection errors name the offending feature index. bounds_tolerance
    permits border overshoot by that many pixels.
    """
    with open(path, "r", encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise FeatureSetError(f"{path}: empty file")
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as e:
            raise FeatureSetError(f"{path}: malformed header: {e}") from None
        if header.get("type") != "feature_set":
            raise FeatureSetError(f"{path}: not a feature_set file")
        for key in ("width", "height", "descriptor_len", "count"):
            if key not in header:
                raise FeatureSetError(f"{path}: header missing {key!r}")
        dlen = int(header["descriptor_len"])
        count = int(header["count"])

        positions = np.zeros((count, 2))
        scales = np.zeros(count)
        orientations = np.zeros(count)
        descriptors = np.zeros((count, max(dlen, 1)))
        for i in range(count):
            line = fh.readline()
            if not line.strip():
                raise FeatureSetError(f"{path}: feature {i}: missing record")
            try:
                rec = json.loads(line)
                positions[i] = (rec["x"], rec["y"])
                scales[i] = rec["scale"]
                orientations[i] = rec["orientation"]
                desc = rec["descriptor"]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise FeatureSetError(f"{path}: feature {i}: malformed record: {e}") from None
            if len(desc) != dlen:
                raise FeatureSetError(
                    f"{path}: feature {i}: descriptor length {len(desc)} != {dlen}"
                )
            descriptors[i] = desc

    try:
        return FeatureSet(
            header["width"], header["height"],
            positions, scales, orientations, descriptors,
            bounds_tolerance=bounds_tolerance,
        )
    except FeatureSetError as e:
        raise FeatureSetError(f"{path}: {e}") from None
