"""Similarity-transform algebra and the bidirectional transfer measure.

A feature's pose maps the axis-aligned unit patch at the origin onto the
feature's patch. Warping a point through one correspondence's pose pair and
comparing against the other correspondence's endpoint gives the one-way
transfer distance (squared pixels); summing the four forward/backward
directions gives the pairwise energy between two correspondences.

Scalar entry points operate on `Correspondence` values; the `*_table`
kernel evaluates whole candidate-label blocks at once and is what the MRF
and gating code call. Both share the same arithmetic, term by term, so
their results agree bitwise.
"""

from __future__ import annotations

import math

import numpy as np

from .core import UNMATCHED, Correspondence, Feature, FeatureSet, SimilarityTransform


def pose_of(f: Feature) -> SimilarityTransform:
    """Pose of a feature: scale sigma, rotation theta, translation (x, y)."""
    if f.scale <= 0:
        raise ValueError(f"feature scale must be > 0, got {f.scale}")
    return SimilarityTransform.from_params(f.scale, f.orientation, f.x, f.y)


def _one_way(
    sx: float, sy: float, ss: float, so: float,
    tx: float, ty: float, ts: float, to: float,
    px: float, py: float, qx: float, qy: float,
) -> float:
    # Warp (px, py) through T_t . T_s^{-1}, i.e. by relative scale ts/ss and
    # relative rotation to-so about feature s, then compare with (qx, qy).
    scale = ts / ss
    ang = to - so
    c, s = math.cos(ang), math.sin(ang)
    rx, ry = px - sx, py - sy
    wx = scale * (c * rx - s * ry) + tx
    wy = scale * (s * rx + c * ry) + ty
    dx, dy = wx - qx, wy - qy
    return dx * dx + dy * dy


def transfer_distance(ref: FeatureSet, tgt: FeatureSet, c: Correspondence, c_prime: Correspondence) -> float:
    """One-way transfer distance of c_prime under c, in squared pixels.

    Zero if either correspondence is unmatched.
    """
    if c.target == UNMATCHED or c_prime.target == UNMATCHED:
        return 0.0
    s = ref[c.ref_index]
    t = tgt[c.target]
    sp = ref[c_prime.ref_index]
    tp = tgt[c_prime.target]
    return _one_way(s.x, s.y, s.scale, s.orientation,
                    t.x, t.y, t.scale, t.orientation,
                    sp.x, sp.y, tp.x, tp.y)


def pairwise_energy(ref: FeatureSet, tgt: FeatureSet, c: Correspondence, c_prime: Correspondence) -> float:
    """Bidirectional transfer measure between two correspondences.

    Sum of the four one-way transfer distances: both orderings in the
    forward direction plus both orderings of the inverse correspondences
    (target-to-reference). Zero when either correspondence is unmatched.
    The two-term grouping makes the result exactly symmetric in its
    arguments.
    """
    if c.target == UNMATCHED or c_prime.target == UNMATCHED:
        return 0.0
    if c.ref_index == c_prime.ref_index:
        raise ValueError("pairwise energy of a correspondence with itself is undefined")
    s = ref[c.ref_index]
    t = tgt[c.target]
    sp = ref[c_prime.ref_index]
    tp = tgt[c_prime.target]
    fwd = (
        _one_way(s.x, s.y, s.scale, s.orientation, t.x, t.y, t.scale, t.orientation,
                 sp.x, sp.y, tp.x, tp.y)
        + _one_way(sp.x, sp.y, sp.scale, sp.orientation, tp.x, tp.y, tp.scale, tp.orientation,
                   s.x, s.y, t.x, t.y)
    )
    bwd = (
        _one_way(t.x, t.y, t.scale, t.orientation, s.x, s.y, s.scale, s.orientation,
                 tp.x, tp.y, sp.x, sp.y)
        + _one_way(tp.x, tp.y, tp.scale, tp.orientation, sp.x, sp.y, sp.scale, sp.orientation,
                   t.x, t.y, s.x, s.y)
    )
    return fwd + bwd


def _warp_points(rel: np.ndarray, scale: np.ndarray, ang: np.ndarray) -> np.ndarray:
    """scale * R(ang) applied to (..., 2) offsets; scale/ang broadcast over rel[..., 0]."""
    c, s = np.cos(ang), np.sin(ang)
    rx, ry = rel[..., 0], rel[..., 1]
    return np.stack((scale * (c * rx - s * ry), scale * (s * rx + c * ry)), axis=-1)


def pairwise_energy_table(
    ref: FeatureSet,
    tgt: FeatureSet,
    si: np.ndarray,
    sj: np.ndarray,
    ta: np.ndarray,
    tb: np.ndarray,
) -> np.ndarray:
    """Pairwise energies for batched label blocks.

    si, sj: (E,) reference indices of the two nodes of each pair.
    ta: (E, A) candidate targets of node i, tb: (E, B) of node j, with
    UNMATCHED entries allowed. Returns (E, A, B); rows/columns of
    unmatched labels are zero.
    """
    rp, rs, ro = ref.positions, ref.scales, ref.orientations
    tp, tscales, torient = tgt.positions, tgt.scales, tgt.orientations

    ia = np.maximum(ta, 0)
    ib = np.maximum(tb, 0)
    # node-side geometry, (E, ...) broadcast shapes
    xs, ss, os_ = rp[si], rs[si], ro[si]                      # (E,2), (E,), (E,)
    xsp, ssp, osp = rp[sj], rs[sj], ro[sj]
    xta, sta, ota = tp[ia], tscales[ia], torient[ia]          # (E,A,2), (E,A), (E,A)
    xtb, stb, otb = tp[ib], tscales[ib], torient[ib]          # (E,B,...)

    # forward: warp x_{s'} through (s -> ta), compare x_{tb}; and vice versa
    w1 = _warp_points((xsp - xs)[:, None, :], sta / ss[:, None], ota - os_[:, None]) + xta
    d1 = w1[:, :, None, :] - xtb[:, None, :, :]
    t1 = np.square(d1).sum(axis=-1)                            # (E,A,B)

    w2 = _warp_points((xs - xsp)[:, None, :], stb / ssp[:, None], otb - osp[:, None]) + xtb
    d2 = w2[:, None, :, :] - xta[:, :, None, :]
    t2 = np.square(d2).sum(axis=-1)

    # backward: inverse correspondences, target-to-reference warps
    rel3 = xtb[:, None, :, :] - xta[:, :, None, :]             # (E,A,B,2)
    w3 = _warp_points(rel3, (ss[:, None] / sta)[:, :, None], (os_[:, None] - ota)[:, :, None])
    d3 = w3 + (xs - xsp)[:, None, None, :]
    t3 = np.square(d3).sum(axis=-1)

    rel4 = xta[:, :, None, :] - xtb[:, None, :, :]
    w4 = _warp_points(rel4, (ssp[:, None] / stb)[:, None, :], (osp[:, None] - otb)[:, None, :])
    d4 = w4 + (xsp - xs)[:, None, None, :]
    t4 = np.square(d4).sum(axis=-1)

    out = (t1 + t2) + (t3 + t4)
    valid = (ta >= 0)[:, :, None] & (tb >= 0)[:, None, :]
    return np.where(valid, out, 0.0)


def local_similarity(H: np.ndarray, point: np.ndarray) -> tuple[float, float]:
    """(scale, angle) of the closest similarity to a homography's Jacobian
    at a point. For an exact similarity warp this recovers its scale and
    rotation everywhere."""
    H = np.asarray(H, dtype=np.float64)
    x, y = float(point[0]), float(point[1])
    w = H[2, 0] * x + H[2, 1] * y + H[2, 2]
    if w == 0:
        raise ValueError("point on the line at infinity of the warp")
    px = (H[0, 0] * x + H[0, 1] * y + H[0, 2]) / w
    py = (H[1, 0] * x + H[1, 1] * y + H[1, 2]) / w
    j00 = (H[0, 0] - px * H[2, 0]) / w
    j01 = (H[0, 1] - px * H[2, 1]) / w
    j10 = (H[1, 0] - py * H[2, 0]) / w
    j11 = (H[1, 1] - py * H[2, 1]) / w
    det = j00 * j11 - j01 * j10
    if det <= 0:
        raise ValueError("warp is orientation-reversing or degenerate at this point")
    angle = math.atan2(j10 - j01, j00 + j11)
    return math.sqrt(det), angle
