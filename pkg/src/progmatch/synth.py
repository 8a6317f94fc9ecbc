"""Synthetic scene generation with planted ground truth.

Scenes are feature-set pairs related by a known warp: reference features
are sampled uniformly, target features are their warped copies with
optional descriptor/position noise, a fraction of features on each side
is left without a counterpart, and repetition groups share a descriptor
to mimic repetitive structure. Generation is a pure function of its
SceneSpec, so fixed seeds give byte-identical scenes.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .core import FeatureSet, SimilarityTransform, TWO_PI, save_feature_set, load_feature_set

_SCALE_RANGE = (1.0, 3.0)


class SceneGenerationError(RuntimeError):
    """Raised when a spec cannot be realized (e.g. the warp maps almost
    every sample out of the target image)."""


@dataclass(frozen=True)
class SceneSpec:
    n_features: int
    width: float = 640.0
    height: float = 480.0
    warp: np.ndarray | SimilarityTransform = None  # type: ignore[assignment]
    descriptor_len: int = 32
    descriptor_noise_sigma: float = 0.0
    position_noise_sigma: float = 0.0
    unpaired_fraction: float = 0.0
    repetition_groups: int = 0
    repetition_group_size: int = 4
    repetition_layout: str = "random"
    deformation_amplitude: float = 0.0
    deformation_scale: float = 250.0
    rng_seed: int = 0
    region: tuple[float, float, float, float] | None = None

    def __post_init__(self) -> None:
        warp = self.warp
        if warp is None:
            warp = np.eye(3)
        elif isinstance(warp, SimilarityTransform):
            warp = warp.matrix
        warp = np.asarray(warp, dtype=np.float64)
        if warp.shape != (3, 3):
            raise ValueError(f"warp must be 3x3, got {warp.shape}")
        warp = warp.copy()
        warp.setflags(write=False)
        object.__setattr__(self, "warp", warp)
        if self.n_features < 1:
            raise ValueError("n_features must be >= 1")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")
        if self.descriptor_len < 1:
            raise ValueError("descriptor_len must be >= 1")
        if self.descriptor_noise_sigma < 0 or self.position_noise_sigma < 0:
            raise ValueError("noise sigmas must be >= 0")
        if not 0 <= self.unpaired_fraction <= 1:
            raise ValueError("unpaired_fraction must be in [0, 1]")
        if self.repetition_groups < 0 or self.repetition_group_size < 2:
            raise ValueError("invalid repetition group settings")
        if self.repetition_groups * self.repetition_group_size > self.n_features:
            raise ValueError("repetition groups exceed the feature budget")
        if self.repetition_layout not in ("random", "grid"):
            raise ValueError(f"unknown repetition layout {self.repetition_layout!r}")
        if self.deformation_amplitude < 0 or self.deformation_scale <= 0:
            raise ValueError("invalid deformation field settings")


@dataclass(frozen=True)
class GroundTruth:
    """Planted correspondences and per-feature bookkeeping.

    pairs: (P, 2) reference/target index pairs. motion_group labels each
    reference feature's warp for multi-motion scenes; traps are deliberate
    descriptor duplicates planted at the wrong warp's position.
    """

    pairs: np.ndarray
    warp: np.ndarray
    ref_unpaired: np.ndarray
    tgt_unpaired: np.ndarray
    motion_group: np.ndarray | None = None
    group_warps: tuple[np.ndarray, ...] | None = None
    traps: np.ndarray | None = None

    def pair_set(self) -> set[tuple[int, int]]:
        return {(int(i), int(j)) for i, j in self.pairs}


def _apply_homography(H: np.ndarray, pts: np.ndarray) -> np.ndarray:
    w = pts @ H[2, :2].T + H[2, 2]
    if np.any(w == 0):
        raise SceneGenerationError("warp sends a sample to infinity")
    xy = pts @ H[:2, :2].T + H[:2, 2]
    return xy / w[:, None]


def _local_similarities(H: np.ndarray, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-point (scale, angle) of the warp's local similarity part."""
    w = pts @ H[2, :2].T + H[2, 2]
    uv = (pts @ H[:2, :2].T + H[:2, 2]) / w[:, None]
    j00 = (H[0, 0] - uv[:, 0] * H[2, 0]) / w
    j01 = (H[0, 1] - uv[:, 0] * H[2, 1]) / w
    j10 = (H[1, 0] - uv[:, 1] * H[2, 0]) / w
    j11 = (H[1, 1] - uv[:, 1] * H[2, 1]) / w
    det = j00 * j11 - j01 * j10
    if np.any(det <= 0):
        raise SceneGenerationError("warp degenerate or orientation-reversing in-image")
    return np.sqrt(det), np.arctan2(j10 - j01, j00 + j11)


def _unit_rows(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    v = rng.normal(size=(n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _deformation_field(
    rng: np.random.Generator, spec: SceneSpec, pts: np.ndarray
) -> np.ndarray:
    """Sinusoidal displacement field, amplitude-bounded per coordinate."""
    amp, wavelength = spec.deformation_amplitude, spec.deformation_scale
    out = np.empty_like(pts)
    for coord in range(2):
        ang = rng.uniform(0, TWO_PI)
        phase = rng.uniform(0, TWO_PI)
        proj = pts[:, 0] * math.cos(ang) + pts[:, 1] * math.sin(ang)
        out[:, coord] = amp * np.sin(TWO_PI * proj / wavelength + phase)
    return out


def _grid_row(rng: np.random.Generator, spec: SceneSpec, count: int) -> np.ndarray:
    """Evenly spaced row of positions, in-region and warp-feasible."""
    w, h = spec.width, spec.height
    x0, y0, x1, y1 = spec.region or (0.0, 0.0, w, h)
    offsets = np.arange(count) - (count - 1) / 2.0
    for _ in range(500):
        base = np.array([rng.uniform(x0, x1), rng.uniform(y0, y1)])
        ang = rng.uniform(0, TWO_PI)
        spacing = rng.uniform(35.0, 70.0)
        pts = base + offsets[:, None] * spacing * np.array([math.cos(ang), math.sin(ang)])
        if not (
            (pts[:, 0] >= x0).all() and (pts[:, 0] < x1).all()
            and (pts[:, 1] >= y0).all() and (pts[:, 1] < y1).all()
        ):
            continue
        warped = _apply_homography(spec.warp, pts)
        if (
            (warped[:, 0] >= 0).all() and (warped[:, 0] < w).all()
            and (warped[:, 1] >= 0).all() and (warped[:, 1] < h).all()
        ):
            return pts
    raise SceneGenerationError("could not place a repetition row inside both images")


def generate(spec: SceneSpec) -> tuple[FeatureSet, FeatureSet, GroundTruth]:
    """Build one scene: (reference set, target set, ground truth)."""
    rng = np.random.default_rng(spec.rng_seed)
    n = spec.n_features
    w, h = spec.width, spec.height
    x0, y0, x1, y1 = spec.region or (0.0, 0.0, w, h)
    if not (0 <= x0 < x1 <= w and 0 <= y0 < y1 <= h):
        raise ValueError(f"region {spec.region} not inside the image")

    # rejection-sample reference positions whose warp stays in the target
    # image, so every planted pair is realizable
    positions = np.zeros((0, 2))
    drawn = 0
    budget = 200 * n + 1000
    while positions.shape[0] < n and drawn < budget:
        batch = max(n, 256)
        pts = np.column_stack([
            rng.uniform(x0, x1, batch),
            rng.uniform(y0, y1, batch),
        ])
        drawn += batch
        warped = _apply_homography(spec.warp, pts)
        ok = (
            (warped[:, 0] >= 0) & (warped[:, 0] < w)
            & (warped[:, 1] >= 0) & (warped[:, 1] < h)
        )
        positions = np.vstack([positions, pts[ok]])
    if positions.shape[0] < n:
        raise SceneGenerationError(
            f"warp maps too few samples in-bounds ({positions.shape[0]} of {n} placed)"
        )
    positions = positions[:n]

    scales = rng.uniform(*_SCALE_RANGE, n)
    orientations = rng.uniform(-math.pi, math.pi, n)
    descriptors = _unit_rows(rng, n, spec.descriptor_len)
    if spec.repetition_groups:
        shared = _unit_rows(rng, spec.repetition_groups, spec.descriptor_len)
        members = rng.permutation(n)[: spec.repetition_groups * spec.repetition_group_size]
        for g in range(spec.repetition_groups):
            grp = members[g * spec.repetition_group_size:(g + 1) * spec.repetition_group_size]
            descriptors[grp] = shared[g]
            if spec.repetition_layout == "grid":
                # repeated elements in a regular row sharing scale and
                # orientation, like windows on a facade
                positions[grp] = _grid_row(rng, spec, grp.size)
                scales[grp] = scales[grp[0]]
                orientations[grp] = orientations[grp[0]]

    n_unpaired = int(round(spec.unpaired_fraction * n))
    unpaired_ref = np.zeros(n, dtype=bool)
    if n_unpaired:
        unpaired_ref[rng.choice(n, n_unpaired, replace=False)] = True
    paired = np.flatnonzero(~unpaired_ref)

    warp_scale, warp_angle = _local_similarities(spec.warp, positions[paired])
    tgt_pos = _apply_homography(spec.warp, positions[paired])
    if spec.deformation_amplitude > 0:
        # smooth low-frequency displacement on top of the warp: nearby
        # features move together, like parallax or a slightly non-planar
        # scene relative to the ground-truth homography
        tgt_pos = tgt_pos + _deformation_field(rng, spec, positions[paired])
        eps = 1e-9
        tgt_pos[:, 0] = np.clip(tgt_pos[:, 0], 0.0, w - eps)
        tgt_pos[:, 1] = np.clip(tgt_pos[:, 1], 0.0, h - eps)
    if spec.position_noise_sigma > 0:
        noise = rng.normal(scale=spec.position_noise_sigma, size=tgt_pos.shape)
        # clipped at 3 sigma so planted pairs stay within a hard bound
        limit = 3.0 * spec.position_noise_sigma
        tgt_pos = tgt_pos + np.clip(noise, -limit, limit)
        eps = 1e-9
        tgt_pos[:, 0] = np.clip(tgt_pos[:, 0], 0.0, w - eps)
        tgt_pos[:, 1] = np.clip(tgt_pos[:, 1], 0.0, h - eps)
    tgt_scale = scales[paired] * warp_scale
    tgt_orient = (orientations[paired] + warp_angle + math.pi) % TWO_PI - math.pi
    tgt_desc = descriptors[paired].copy()
    if spec.descriptor_noise_sigma > 0:
        tgt_desc += rng.normal(scale=spec.descriptor_noise_sigma, size=tgt_desc.shape)
        tgt_desc /= np.linalg.norm(tgt_desc, axis=1, keepdims=True)

    # unpaired clutter on the target side
    n_clutter = int(round(spec.unpaired_fraction * n))
    clutter_pos = np.column_stack([
        rng.uniform(0, w, n_clutter), rng.uniform(0, h, n_clutter)
    ])
    clutter_scale = rng.uniform(*_SCALE_RANGE, n_clutter)
    clutter_orient = rng.uniform(-math.pi, math.pi, n_clutter)
    clutter_desc = _unit_rows(rng, n_clutter, spec.descriptor_len) if n_clutter else (
        np.zeros((0, spec.descriptor_len))
    )

    ref_set = FeatureSet(w, h, positions, scales, orientations, descriptors)
    tgt_set = FeatureSet(
        w, h,
        np.vstack([tgt_pos, clutter_pos]),
        np.concatenate([tgt_scale, clutter_scale]),
        np.concatenate([tgt_orient, clutter_orient]),
        np.vstack([tgt_desc, clutter_desc]),
    )
    pairs = np.column_stack([paired, np.arange(paired.size)])
    tgt_unpaired = np.zeros(len(tgt_set), dtype=bool)
    tgt_unpaired[paired.size:] = True
    gt = GroundTruth(
        pairs=pairs,
        warp=spec.warp,
        ref_unpaired=unpaired_ref,
        tgt_unpaired=tgt_unpaired,
    )
    return ref_set, tgt_set, gt


def two_motion_scene(
    spec_a: SceneSpec,
    spec_b: SceneSpec,
    *,
    cross_traps: int = 0,
) -> tuple[FeatureSet, FeatureSet, GroundTruth]:
    """Union of two independently warped feature groups in one image pair.

    cross_traps plants, per group, that many target features that copy a
    paired reference descriptor (with the group's descriptor noise) but sit
    at the *other* group's warped position: appearance matches that only
    geometry can reject.
    """
    if (spec_a.width, spec_a.height) != (spec_b.width, spec_b.height):
        raise ValueError("both groups must share one image size")
    if spec_a.descriptor_len != spec_b.descriptor_len:
        raise ValueError("both groups must share one descriptor length")
    ref_a, tgt_a, gt_a = generate(spec_a)
    ref_b, tgt_b, gt_b = generate(spec_b)
    w, h = spec_a.width, spec_a.height

    def merge(a: FeatureSet, b: FeatureSet, extra=None) -> FeatureSet:
        parts = [a, b] + ([extra] if extra is not None else [])
        return FeatureSet(
            w, h,
            np.vstack([p.positions for p in parts]),
            np.concatenate([p.scales for p in parts]),
            np.concatenate([p.orientations for p in parts]),
            np.vstack([p.descriptors for p in parts]),
        )

    rng = np.random.default_rng(spec_a.rng_seed ^ 0x7A5C3)
    traps: list[tuple[int, int]] = []
    trap_feats = None
    if cross_traps:
        trap_pos, trap_scale, trap_orient, trap_desc = [], [], [], []
        plans = [
            (gt_a.pairs[:, 0], ref_a, spec_b.warp, spec_a.descriptor_noise_sigma, 0),
            (gt_b.pairs[:, 0], ref_b, spec_a.warp, spec_b.descriptor_noise_sigma, len(ref_a)),
        ]
        for refs, ref_set, other_warp, noise, offset in plans:
            order = rng.permutation(refs)
            placed = 0
            for f in order:
                if placed >= cross_traps:
                    break
                p = _apply_homography(other_warp, ref_set.positions[int(f)][None, :])[0]
                if not (0 <= p[0] < w and 0 <= p[1] < h):
                    continue
                s, ang = _local_similarities(other_warp, ref_set.positions[int(f)][None, :])
                d = ref_set.descriptors[int(f)].copy()
                if noise > 0:
                    d += rng.normal(scale=noise, size=d.shape)
                    d /= np.linalg.norm(d)
                trap_pos.append(p)
                trap_scale.append(ref_set.scales[int(f)] * s[0])
                trap_orient.append((ref_set.orientations[int(f)] + ang[0] + math.pi) % TWO_PI - math.pi)
                trap_desc.append(d)
                traps.append((int(f) + offset, len(tgt_a) + len(tgt_b) + len(trap_pos) - 1))
                placed += 1
        if trap_pos:
            trap_feats = FeatureSet(
                w, h,
                np.array(trap_pos), np.array(trap_scale),
                np.array(trap_orient), np.array(trap_desc),
            )

    ref = merge(ref_a, ref_b)
    tgt = merge(tgt_a, tgt_b, trap_feats)
    pairs_b = gt_b.pairs + np.array([len(ref_a), len(tgt_a)])
    pairs = np.vstack([gt_a.pairs, pairs_b])
    n_traps = len(traps)
    gt = GroundTruth(
        pairs=pairs,
        warp=gt_a.warp,
        ref_unpaired=np.concatenate([gt_a.ref_unpaired, gt_b.ref_unpaired]),
        tgt_unpaired=np.concatenate([
            gt_a.tgt_unpaired, gt_b.tgt_unpaired, np.ones(n_traps, dtype=bool)
        ]),
        motion_group=np.concatenate([
            np.zeros(len(ref_a), dtype=np.int64), np.ones(len(ref_b), dtype=np.int64)
        ]),
        group_warps=(gt_a.warp, gt_b.warp),
        traps=np.array(traps, dtype=np.int64).reshape(-1, 2),
    )
    return ref, tgt, gt


# -- scene bundles on disk -------------------------------------------------

REFERENCE_FILE = "reference.jsonl"
TARGET_FILE = "target.jsonl"
GROUND_TRUTH_FILE = "ground_truth.json"


def save_scene(out_dir, ref: FeatureSet, tgt: FeatureSet, gt: GroundTruth) -> list[str]:
    """Write the two feature-set files plus the ground-truth file; returns
    the paths written."""
    os.makedirs(out_dir, exist_ok=True)
    ref_path = os.path.join(out_dir, REFERENCE_FILE)
    tgt_path = os.path.join(out_dir, TARGET_FILE)
    gt_path = os.path.join(out_dir, GROUND_TRUTH_FILE)
    save_feature_set(ref, ref_path)
    save_feature_set(tgt, tgt_path)
    payload: dict = {
        "pairs": gt.pairs.tolist(),
        "warp": [float(v) for v in gt.warp.ravel()],
        "ref_unpaired": gt.ref_unpaired.astype(int).tolist(),
        "tgt_unpaired": gt.tgt_unpaired.astype(int).tolist(),
    }
    if gt.motion_group is not None:
        payload["motion_group"] = gt.motion_group.tolist()
    if gt.group_warps is not None:
        payload["group_warps"] = [[float(v) for v in m.ravel()] for m in gt.group_warps]
    if gt.traps is not None:
        payload["traps"] = gt.traps.tolist()
    with open(gt_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")
    return [ref_path, tgt_path, gt_path]


def load_ground_truth(path) -> GroundTruth:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    pairs = np.array(payload["pairs"], dtype=np.int64).reshape(-1, 2)
    warp = np.array(payload["warp"], dtype=np.float64).reshape(3, 3)
    return GroundTruth(
        pairs=pairs,
        warp=warp,
        ref_unpaired=np.array(payload.get("ref_unpaired", []), dtype=bool),
        tgt_unpaired=np.array(payload.get("tgt_unpaired", []), dtype=bool),
        motion_group=(
            np.array(payload["motion_group"], dtype=np.int64)
            if "motion_group" in payload else None
        ),
        group_warps=(
            tuple(np.array(m, dtype=np.float64).reshape(3, 3) for m in payload["group_warps"])
            if "group_warps" in payload else None
        ),
        traps=(
            np.array(payload["traps"], dtype=np.int64).reshape(-1, 2)
            if "traps" in payload else None
        ),
    )


def load_scene(scene_dir) -> tuple[FeatureSet, FeatureSet, GroundTruth]:
    ref = load_feature_set(os.path.join(scene_dir, REFERENCE_FILE))
    tgt = load_feature_set(os.path.join(scene_dir, TARGET_FILE))
    gt = load_ground_truth(os.path.join(scene_dir, GROUND_TRUTH_FILE))
    return ref, tgt, gt
