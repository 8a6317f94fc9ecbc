"""Putative-match-ratio, precision, and matching-score evaluation.

A putative match counts as an inlier when the target position lies
strictly within `tol` pixels (default 10) of the reference position warped
by the ground-truth homography. Precision of an empty putative set is
defined as 0 so reports stay total.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import FeatureSet

DEFAULT_TOL = 10.0


@dataclass(frozen=True)
class MetricReport:
    """Counts plus the three percentages. ms equals pmr * precision / 100
    per pair by construction."""

    n_features: int
    n_putative: int
    n_inlier: int
    pmr: float
    precision: float
    ms: float

    @classmethod
    def from_counts(cls, n_features: int, n_putative: int, n_inlier: int) -> "MetricReport":
        if not 0 <= n_inlier <= n_putative:
            raise ValueError("inlier count must be within [0, putative count]")
        if n_features < 1:
            raise ValueError("n_features must be >= 1")
        pmr = 100.0 * n_putative / n_features
        precision = 100.0 * n_inlier / n_putative if n_putative else 0.0
        ms = 100.0 * n_inlier / n_features
        return cls(n_features, n_putative, n_inlier, pmr, precision, ms)

    def record(self) -> dict:
        return {
            "n_features": self.n_features,
            "n_putative": self.n_putative,
            "n_inlier": self.n_inlier,
            "pmr": self.pmr,
            "precision": self.precision,
            "ms": self.ms,
        }


def _as_pairs(matches: Iterable) -> list[tuple[int, int]]:
    pairs = []
    for m in matches:
        if hasattr(m, "ref_index"):
            pairs.append((int(m.ref_index), int(m.target)))
        elif hasattr(m, "ref"):
            pairs.append((int(m.ref), int(m.tgt)))
        else:
            i, j = m[0], m[1]
            pairs.append((int(i), int(j)))
    return pairs


def _project(H: np.ndarray, pts: np.ndarray) -> np.ndarray:
    w = pts @ H[2, :2].T + H[2, 2]
    return (pts @ H[:2, :2].T + H[:2, 2]) / w[:, None]


def _check_homography(H: np.ndarray) -> np.ndarray:
    H = np.asarray(H, dtype=np.float64).reshape(3, 3)
    if abs(np.linalg.det(H)) < 1e-12:
        raise ValueError("ground-truth homography is singular")
    return H


def is_inlier(
    ref: FeatureSet,
    tgt: FeatureSet,
    match,
    H: np.ndarray,
    tol: float = DEFAULT_TOL,
) -> bool:
    """Whether one putative match lands strictly within tol pixels of the
    warped reference position."""
    (i, j), = _as_pairs([match])
    H = _check_homography(H)
    warped = _project(H, ref.positions[i][None, :])[0]
    return bool(np.linalg.norm(warped - tgt.positions[j]) < tol)


def score(
    matches: Iterable,
    ref: FeatureSet,
    tgt: FeatureSet,
    H: np.ndarray,
    tol: float = DEFAULT_TOL,
) -> MetricReport:
    """MetricReport for a putative match list against a ground-truth warp."""
    pairs = _as_pairs(matches)
    H = _check_homography(H)
    if pairs:
        arr = np.asarray(pairs, dtype=np.int64)
        if arr[:, 0].min() < 0 or arr[:, 0].max() >= len(ref):
            raise IndexError("match reference index out of range")
        if arr[:, 1].min() < 0 or arr[:, 1].max() >= len(tgt):
            raise IndexError("match target index out of range")
        warped = _project(H, ref.positions[arr[:, 0]])
        dist = np.linalg.norm(warped - tgt.positions[arr[:, 1]], axis=1)
        n_inlier = int((dist < tol).sum())
    else:
        n_inlier = 0
    return MetricReport.from_counts(len(ref), len(pairs), n_inlier)


def overlay_records(
    matches: Iterable,
    ref: FeatureSet,
    tgt: FeatureSet,
    H: np.ndarray,
    tol: float = DEFAULT_TOL,
) -> list[dict]:
    """Per-match overlay data for external plotting."""
    H = _check_homography(H)
    out = []
    for i, j in _as_pairs(matches):
        out.append({
            "ref_xy": [float(ref.positions[i, 0]), float(ref.positions[i, 1])],
            "tgt_xy": [float(tgt.positions[j, 0]), float(tgt.positions[j, 1])],
            "inlier": is_inlier(ref, tgt, (i, j), H, tol),
        })
    return out


def compare(rows: Sequence[tuple[str, str, MetricReport]]) -> str:
    """Aligned comparison table.

    rows are (matcher name, level label, report); reports are averaged per
    (matcher, level) cell and per matcher overall, one block per metric.
    """
    if not rows:
        return "(no reports)"
    matchers: list[str] = []
    levels: list[str] = []
    for name, level, _ in rows:
        if name not in matchers:
            matchers.append(name)
        if level not in levels:
            levels.append(level)
    cells: dict[tuple[str, str], list[MetricReport]] = {}
    for name, level, report in rows:
        cells.setdefault((name, level), []).append(report)

    def mean(values: list[float]) -> float:
        return sum(values) / len(values)

    lines = []
    width = max(len(m) for m in matchers + ["matcher"]) + 2
    for metric in ("pmr", "precision", "ms"):
        lines.append(metric.upper())
        header = "matcher".ljust(width) + "".join(f"{lvl:>10}" for lvl in levels) + f"{'avg':>10}"
        lines.append(header)
        for name in matchers:
            vals = []
            row = name.ljust(width)
            for level in levels:
                reports = cells.get((name, level))
                if reports:
                    v = mean([getattr(r, metric) for r in reports])
                    vals.append(v)
                    row += f"{v:>10.2f}"
                else:
                    row += f"{'-':>10}"
            row += f"{mean(vals):>10.2f}" if vals else f"{'-':>10}"
            lines.append(row)
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"


def report_lines(named_reports: Sequence[tuple[str, MetricReport]]) -> str:
    """Line-delimited report records."""
    return "".join(
        json.dumps({"name": name, **report.record()}) + "\n"
        for name, report in named_reports
    )
