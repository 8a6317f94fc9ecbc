"""Progressive candidate search: seeds, gating, expansion, and the
end-to-end matcher.

The pipeline selects confident seed correspondences with a descriptor
ratio test, solves the seed MRF, then repeatedly admits leftover features
whose candidates are geometrically consistent with nearby seed
correspondences, solving a seed-anchored MRF per round. Features decoded
UNMATCHED return to the pool and may be admitted again once the seed set
has grown. A non-progressive reference matcher (one MRF over everything)
is included for ablation runs.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .candidates import SpatialIndex, candidate_arrays, knn_edges
from .core import UNMATCHED, Correspondence, FeatureSet, MatcherConfig
from .geometry import pairwise_energy_table
from .mrf import GraphNode, MatchGraph, decode, run_bp


class InsufficientSeedsError(RuntimeError):
    """Fewer than two reference features pass the seed ratio test."""


@dataclass(frozen=True)
class SeedState:
    """Fixed correspondences accumulated so far. refs/targets are aligned;
    membership never shrinks across rounds."""

    refs: np.ndarray
    targets: np.ndarray
    round: int

    def __post_init__(self) -> None:
        refs = np.asarray(self.refs, dtype=np.int64)
        targets = np.asarray(self.targets, dtype=np.int64)
        if refs.size != targets.size:
            raise ValueError("seed refs and targets disagree in length")
        if np.any(targets == UNMATCHED):
            raise ValueError("seed correspondences must be matched")
        if np.unique(refs).size != refs.size:
            raise ValueError("duplicate seed reference indices")
        refs.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, "refs", refs)
        object.__setattr__(self, "targets", targets)

    def __len__(self) -> int:
        return int(self.refs.size)


@dataclass(frozen=True)
class ExpansionRecord:
    """One round of the progressive loop: which features were admitted,
    their pruned label lists (always ending in UNMATCHED), and how the BP
    solve went."""

    round: int
    added: tuple[int, ...]
    gamma: dict[int, np.ndarray]
    bp_iterations: int
    bp_converged: bool
    unmatched_count: int
    matched_count: int
    bp_deltas: tuple[float, ...] = ()


class MatchRecord(NamedTuple):
    ref: int
    tgt: int
    belief: float
    round: int


@dataclass
class MatchOutcome:
    """Putative matches plus per-round diagnostics."""

    matches: list[MatchRecord]
    records: list[ExpansionRecord]
    n_ref: int
    n_tgt: int
    config: MatcherConfig
    timings: dict[str, float] = field(default_factory=dict)

    def correspondences(self) -> list[Correspondence]:
        return [Correspondence(m.ref, m.tgt) for m in self.matches]

    def as_pairs(self) -> set[tuple[int, int]]:
        return {(m.ref, m.tgt) for m in self.matches}


class ProgressiveMatcher:
    """Single-use matcher for one image pair."""

    def __init__(self, ref: FeatureSet, tgt: FeatureSet, config: MatcherConfig):
        if len(ref) == 0 or len(tgt) == 0:
            raise ValueError("both feature sets must be non-empty")
        self.ref = ref
        self.tgt = tgt
        self.config = config
        t0 = time.perf_counter()
        self.cand_idx, self.cand_dist = candidate_arrays(ref, tgt, config.kappa)
        self.candidate_time = time.perf_counter() - t0
        self._round_matches: list[MatchRecord] = []

    # -- seed selection ---------------------------------------------------

    def seed_order(self) -> np.ndarray:
        """Reference features passing the ratio test, best descriptor
        score first (ties to lower index)."""
        d1 = self.cand_dist[:, 0]
        if self.cand_dist.shape[1] >= 2:
            d2 = self.cand_dist[:, 1]
            ratio = np.where(d2 > 0, d1 / np.where(d2 > 0, d2, 1.0), 1.0)
        else:
            # single-feature target image: the lone candidate is unambiguous
            ratio = np.zeros_like(d1)
        passing = np.flatnonzero(ratio < self.config.nndr_theta)
        return passing[np.lexsort((passing, d1[passing]))]

    def select_seeds(self) -> MatchGraph:
        """Initial MRF over the top seed candidates: full top-kappa labels
        plus UNMATCHED on every node, KNN edges among the selected."""
        order = self.seed_order()
        if order.size < 2:
            raise InsufficientSeedsError(
                f"insufficient seeds: {order.size} of {len(self.ref)} features "
                f"pass the ratio test (theta={self.config.nndr_theta})"
            )
        selected = np.sort(order[: self.config.seed_count])
        nodes = [
            GraphNode(int(s), np.append(self.cand_idx[s], UNMATCHED))
            for s in selected
        ]
        edges = knn_edges(self.ref.positions[selected], self.config.knn)
        return MatchGraph(self.ref, self.tgt, nodes, edges)

    # -- consistency gate -------------------------------------------------

    def _gate(self, features: np.ndarray, seeds: SeedState) -> dict[int, np.ndarray]:
        """Admit candidates of the given leftover features whose pairwise
        energy against one of the K nearest seed correspondences stays
        below theta_seed. Returns {feature: surviving targets + UNMATCHED}."""
        if features.size == 0 or len(seeds) == 0:
            return {}
        k = min(self.config.knn, len(seeds))
        seed_index = SpatialIndex(self.ref.positions[seeds.refs])
        nearest = seed_index.knn_of_points(self.ref.positions[features], k)

        f_rep = np.repeat(features, k)
        seed_slot = nearest.ravel()
        table = pairwise_energy_table(
            self.ref,
            self.tgt,
            f_rep,
            seeds.refs[seed_slot],
            self.cand_idx[f_rep],
            seeds.targets[seed_slot][:, None],
        )
        # (F, K, A) -> best seed per candidate
        best = table[:, :, 0].reshape(features.size, k, -1).min(axis=1)
        keep = best < self.config.theta_seed
        out: dict[int, np.ndarray] = {}
        for row, f in enumerate(features):
            survivors = self.cand_idx[f][keep[row]]
            if survivors.size:
                out[int(f)] = np.append(survivors, UNMATCHED)
        return out

    def consistency_gate(self, f: int, seeds: SeedState) -> np.ndarray | None:
        """Pruned label list for one leftover feature, or None when no
        candidate is consistent with its nearby seeds."""
        if f in seeds.refs:
            raise ValueError(f"feature {f} is already a seed")
        return self._gate(np.array([f], dtype=np.int64), seeds).get(int(f))

    # -- expansion --------------------------------------------------------

    def _leftovers(self, seeds: SeedState) -> np.ndarray:
        mask = np.ones(len(self.ref), dtype=bool)
        mask[seeds.refs] = False
        return np.flatnonzero(mask)

    def expand_round(self, seeds: SeedState) -> tuple[ExpansionRecord, SeedState]:
        """One progressive round: gate leftovers, solve the seed-anchored
        MRF, promote matched extended nodes to seeds."""
        round_no = seeds.round + 1
        gamma = self._gate(self._leftovers(seeds), seeds)
        if not gamma:
            record = ExpansionRecord(round_no, (), {}, 0, True, 0, 0)
            return record, SeedState(seeds.refs, seeds.targets, round_no)

        extended = sorted(gamma)
        nodes = [
            GraphNode(int(r), np.array([t]), fixed=True)
            for r, t in zip(seeds.refs, seeds.targets)
        ]
        nodes += [GraphNode(f, gamma[f]) for f in extended]

        n_seeds = len(seeds)
        all_refs = np.concatenate([seeds.refs, np.array(extended, dtype=np.int64)])
        index = SpatialIndex(self.ref.positions[all_refs])
        k = min(self.config.knn, len(all_refs) - 1)
        edges: set[tuple[int, int]] = set()
        if k > 0:
            nn = index.knn_of_points(self.ref.positions[extended], k + 1)
            for row, f in enumerate(extended):
                me = n_seeds + row
                taken = 0
                for j in nn[row]:
                    j = int(j)
                    if j == me:
                        continue
                    taken += 1
                    if taken > k:
                        break
                    edges.add((me, j) if j > me else (j, me))
        graph = MatchGraph(self.ref, self.tgt, nodes, sorted(edges))

        result = run_bp(graph, self.config)
        assignment = decode(graph, result)

        new_refs = list(seeds.refs)
        new_targets = list(seeds.targets)
        matched: list[MatchRecord] = []
        unmatched = 0
        for pos, f in enumerate(extended):
            c = assignment[n_seeds + pos]
            if c.target == UNMATCHED:
                unmatched += 1
                continue
            belief = result.beliefs[n_seeds + pos]
            assert belief is not None
            matched.append(MatchRecord(f, c.target, float(belief.min()), round_no))
            new_refs.append(f)
            new_targets.append(c.target)

        self._round_matches.extend(matched)
        record = ExpansionRecord(
            round_no,
            tuple(extended),
            gamma,
            result.iterations,
            result.converged,
            unmatched,
            len(matched),
            tuple(result.deltas),
        )
        return record, SeedState(np.array(new_refs), np.array(new_targets), round_no)

    # -- full pipeline ----------------------------------------------------

    def run(self) -> MatchOutcome:
        t_start = time.perf_counter()
        self._round_matches = []

        graph = self.select_seeds()
        result = run_bp(graph, self.config)
        assignment = decode(graph, result)
        matched: list[MatchRecord] = []
        refs, targets = [], []
        unmatched = 0
        for node, c, belief in zip(graph.nodes, assignment, result.beliefs):
            if c.target == UNMATCHED:
                unmatched += 1
                continue
            assert belief is not None
            matched.append(MatchRecord(node.ref_index, c.target, float(belief.min()), 0))
            refs.append(node.ref_index)
            targets.append(c.target)
        records = [
            ExpansionRecord(
                0,
                tuple(node.ref_index for node in graph.nodes),
                {node.ref_index: node.targets for node in graph.nodes},
                result.iterations,
                result.converged,
                unmatched,
                len(matched),
                tuple(result.deltas),
            )
        ]
        self._round_matches.extend(matched)
        state = SeedState(np.array(refs, dtype=np.int64), np.array(targets, dtype=np.int64), 0)

        if len(state) > 0:
            for _ in range(len(self.ref) + 1):
                record, state = self.expand_round(state)
                records.append(record)
                if record.matched_count == 0:
                    break

        outcome = MatchOutcome(
            matches=sorted(self._round_matches, key=lambda m: (m.round, m.ref)),
            records=records,
            n_ref=len(self.ref),
            n_tgt=len(self.tgt),
            config=self.config,
            timings={
                "candidates_s": self.candidate_time,
                "total_s": time.perf_counter() - t_start + self.candidate_time,
            },
        )
        return outcome


def match(ref: FeatureSet, tgt: FeatureSet, config: MatcherConfig | None = None) -> MatchOutcome:
    """End-to-end progressive matching of two feature sets."""
    return ProgressiveMatcher(ref, tgt, config or MatcherConfig()).run()


def match_non_progressive(
    ref: FeatureSet, tgt: FeatureSet, config: MatcherConfig | None = None
) -> MatchOutcome:
    """Ablation reference: one MRF over every reference feature with full
    top-kappa labels, plain BP, no seeding or gating."""
    config = config or MatcherConfig()
    if len(ref) == 0 or len(tgt) == 0:
        raise ValueError("both feature sets must be non-empty")
    t0 = time.perf_counter()
    cand_idx, _ = candidate_arrays(ref, tgt, config.kappa)
    nodes = [
        GraphNode(i, np.append(cand_idx[i], UNMATCHED)) for i in range(len(ref))
    ]
    edges = knn_edges(ref.positions, config.knn)
    graph = MatchGraph(ref, tgt, nodes, edges)
    result = run_bp(graph, config)
    assignment = decode(graph, result)
    matches = []
    unmatched = 0
    for i, c in enumerate(assignment):
        if c.target == UNMATCHED:
            unmatched += 1
            continue
        belief = result.beliefs[i]
        assert belief is not None
        matches.append(MatchRecord(c.ref_index, c.target, float(belief.min()), 0))
    record = ExpansionRecord(
        0,
        tuple(range(len(ref))),
        {i: nodes[i].targets for i in range(len(ref))},
        result.iterations,
        result.converged,
        unmatched,
        len(matches),
        tuple(result.deltas),
    )
    return MatchOutcome(
        matches=matches,
        records=[record],
        n_ref=len(ref),
        n_tgt=len(tgt),
        config=config,
        timings={"total_s": time.perf_counter() - t0},
    )


# -- match file I/O -------------------------------------------------------


def save_matches(outcome: MatchOutcome, path) -> None:
    """Line-delimited match records followed by one diagnostics record."""
    with open(path, "w", encoding="utf-8") as fh:
        for m in outcome.matches:
            fh.write(json.dumps(
                {"ref": m.ref, "tgt": m.tgt, "belief": m.belief, "round": m.round}
            ) + "\n")
        diag = {
            "type": "diagnostics",
            "n_ref": outcome.n_ref,
            "n_tgt": outcome.n_tgt,
            "n_matches": len(outcome.matches),
            "rounds": [
                {
                    "round": r.round,
                    "extended": len(r.added),
                    "matched": r.matched_count,
                    "unmatched": r.unmatched_count,
                    "bp_iterations": r.bp_iterations,
                    "bp_converged": r.bp_converged,
                }
                for r in outcome.records
            ],
        }
        fh.write(json.dumps(diag) + "\n")


def load_matches(path) -> tuple[list[MatchRecord], dict | None]:
    records: list[MatchRecord] = []
    diagnostics = None
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec.get("type") == "diagnostics":
                diagnostics = rec
                continue
            records.append(MatchRecord(
                int(rec["ref"]), int(rec["tgt"]),
                float(rec.get("belief", 0.0)), int(rec.get("round", 0)),
            ))
    return records, diagnostics
