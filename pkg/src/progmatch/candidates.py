"""Descriptor-space candidate generation and spatial KNN.

Candidate search is exhaustive (no approximate index): distances are
computed blockwise from the Gram matrix, and every top-k selection breaks
ties by lower index so results are fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import UNMATCHED, Correspondence, FeatureSet

_BLOCK_ROWS = 256


def descriptor_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean distance between two descriptor vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"descriptor length mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def _topk_rows(dist: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-row k smallest entries of a (R, N) matrix, ordered by
    (value, column index). Exact under ties."""
    r, n = dist.shape
    k = min(k, n)
    if k == n:
        order = np.argsort(dist, axis=1, kind="stable")[:, :k]
        return order, np.take_along_axis(dist, order, axis=1)

    m = min(n, 2 * k + 8)
    part = np.argpartition(dist, m - 1, axis=1)[:, :m]
    part_d = np.take_along_axis(dist, part, axis=1)
    # order the partitioned block by (value, column index)
    sub = np.lexsort((part, part_d), axis=1)
    idx = np.take_along_axis(part, sub, axis=1)
    val = np.take_along_axis(part_d, sub, axis=1)
    # a tie at the k-th value may extend past the block; redo those rows exactly
    unsafe = np.flatnonzero(val[:, m - 1] <= val[:, k - 1])
    for row in unsafe:
        order = np.argsort(dist[row], kind="stable")
        idx[row, :k] = order[:k]
        val[row, :k] = dist[row, order[:k]]
    return idx[:, :k], val[:, :k]


def candidate_arrays(ref: FeatureSet, tgt: FeatureSet, kappa: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-min(kappa, |tgt|) descriptor matches for every reference feature.

    Returns (indices, distances), both (N, k), rows sorted ascending by
    distance with ties to lower target index.
    """
    if len(ref) == 0 or len(tgt) == 0:
        raise ValueError("candidate search requires non-empty feature sets")
    if kappa < 1:
        raise ValueError(f"kappa must be >= 1, got {kappa}")
    k = min(kappa, len(tgt))
    a = ref.descriptors
    b = tgt.descriptors
    b_sq = np.einsum("ij,ij->i", b, b)
    out_idx = np.empty((len(ref), k), dtype=np.int64)
    out_dist = np.empty((len(ref), k), dtype=np.float64)
    for lo in range(0, len(ref), _BLOCK_ROWS):
        hi = min(lo + _BLOCK_ROWS, len(ref))
        blk = a[lo:hi]
        d2 = np.einsum("ij,ij->i", blk, blk)[:, None] + b_sq[None, :] - 2.0 * (blk @ b.T)
        np.maximum(d2, 0.0, out=d2)
        idx, val = _topk_rows(d2, k)
        out_idx[lo:hi] = idx
        out_dist[lo:hi] = np.sqrt(val)
    return out_idx, out_dist


@dataclass(frozen=True)
class CandidateList:
    """Per-reference-feature candidate matches, ascending by descriptor
    distance; conceptually always extended by the UNMATCHED label."""

    ref_index: int
    entries: tuple[tuple[int, float], ...]


def top_kappa(ref: FeatureSet, tgt: FeatureSet, kappa: int) -> list[CandidateList]:
    """Exhaustive top-kappa candidate lists (kappa clamps to |tgt|)."""
    idx, dist = candidate_arrays(ref, tgt, kappa)
    return [
        CandidateList(i, tuple((int(j), float(d)) for j, d in zip(idx[i], dist[i])))
        for i in range(len(ref))
    ]


def nndr_match(ref: FeatureSet, tgt: FeatureSet, theta: float) -> list[Correspondence]:
    """Nearest-neighbor distance-ratio matching.

    Accepts a feature with its nearest neighbor iff d1/d2 < theta; exact
    duplicates (d2 = 0) count as ratio 1. theta = 1.0 is the plain
    nearest-neighbor baseline and accepts everything.
    """
    if not 0 < theta <= 1:
        raise ValueError(f"theta must be in (0, 1], got {theta}")
    if len(tgt) < 2:
        raise ValueError("nndr_match requires at least 2 target features")
    idx, dist = candidate_arrays(ref, tgt, 2)
    if theta >= 1.0:
        accept = np.ones(len(ref), dtype=bool)
    else:
        d1, d2 = dist[:, 0], dist[:, 1]
        ratio = np.where(d2 > 0, d1 / np.where(d2 > 0, d2, 1.0), 1.0)
        accept = ratio < theta
    return [Correspondence(i, int(idx[i, 0])) for i in np.flatnonzero(accept)]


class SpatialIndex:
    """Exact K-nearest-neighbor queries over one feature set's positions.

    Brute force, blockwise; ties broken by lower index. Read-only after
    construction.
    """

    def __init__(self, positions: np.ndarray):
        pos = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
        if pos.shape[0] < 1:
            raise ValueError("spatial index requires at least one position")
        self._pos = pos.copy()
        self._pos.setflags(write=False)

    def __len__(self) -> int:
        return self._pos.shape[0]

    @property
    def positions(self) -> np.ndarray:
        return self._pos

    def neighbors_of(self, node: int, k: int) -> np.ndarray:
        """Indices of the min(k, N-1) nearest other features to `node`."""
        if not 0 <= node < len(self):
            raise IndexError(f"node {node} out of range")
        d = np.square(self._pos - self._pos[node]).sum(axis=1)[None, :]
        d[0, node] = np.inf
        k = min(k, len(self) - 1)
        if k <= 0:
            return np.empty(0, dtype=np.int64)
        idx, _ = _topk_rows(d, k)
        return idx[0]

    def knn_of_points(self, points: np.ndarray, k: int) -> np.ndarray:
        """(Q, min(k, N)) nearest indices for external query points."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        k = min(k, len(self))
        out = np.empty((pts.shape[0], k), dtype=np.int64)
        for lo in range(0, pts.shape[0], _BLOCK_ROWS):
            hi = min(lo + _BLOCK_ROWS, pts.shape[0])
            d = (
                np.square(pts[lo:hi])
                .sum(axis=1)[:, None]
                + np.square(self._pos).sum(axis=1)[None, :]
                - 2.0 * (pts[lo:hi] @ self._pos.T)
            )
            idx, _ = _topk_rows(d, k)
            out[lo:hi] = idx
        return out


def knn_neighbors(index: SpatialIndex, node: int, k: int) -> np.ndarray:
    """K nearest features to `node` by pixel distance, excluding itself."""
    return index.neighbors_of(node, k)


def knn_edges(positions: np.ndarray, k: int) -> list[tuple[int, int]]:
    """Undirected edge list connecting every feature to its K nearest
    neighbors (union-symmetrized, deduplicated, i < j)."""
    index = SpatialIndex(positions)
    n = len(index)
    if n < 2:
        return []
    k = min(k, n - 1)
    # query k+1 and drop the self entry, leaving each node's k nearest others
    nn = index.knn_of_points(index.positions, k + 1)
    edges = set()
    for i in range(n):
        taken = 0
        for j in nn[i]:
            j = int(j)
            if j == i:
                continue
            taken += 1
            if taken > k:
                break
            edges.add((i, j) if i < j else (j, i))
    return sorted(edges)
