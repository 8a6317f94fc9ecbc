"""MRF over reference features and min-sum belief propagation.

Each node's labels are candidate correspondences plus the UNMATCHED label;
unary energy is descriptor distance (or the unmatched penalty alpha), and
edges carry the bidirectional transfer measure weighted by lambda. Messages
follow a synchronous flooding schedule from zero initialization and are
min-normalized after every update; fixed (seed) nodes emit messages but
never receive any.

Energy bookkeeping note: the reported pairwise total follows the
double-counted neighborhood sum (each undirected edge contributes twice),
while the message equations apply lambda * e_psi once per edge. The
quantity message passing actually minimizes is therefore
``unary + lambda * pairwise_total / 2``, exposed as
``EnergyBreakdown.bp_objective``; the exact solver in `oracle` minimizes
the same functional.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .candidates import descriptor_distance
from .core import UNMATCHED, Correspondence, FeatureSet, MatcherConfig
from .geometry import pairwise_energy, pairwise_energy_table

# Unary padding for label slots beyond a node's list; large enough to never
# win a min, small enough to stay far from float64 overflow in sums.
_PAD = 1e15


@dataclass(frozen=True)
class GraphNode:
    """One MRF node: a reference feature, its candidate labels (target
    indices, UNMATCHED as -1), and whether the label is fixed (seed)."""

    ref_index: int
    targets: np.ndarray
    fixed: bool = False

    def __post_init__(self) -> None:
        t = np.asarray(self.targets, dtype=np.int64).ravel()
        t.setflags(write=False)
        object.__setattr__(self, "targets", t)
        if t.size < 1:
            raise ValueError(f"node {self.ref_index}: empty label list")
        matched = t[t != UNMATCHED]
        if np.unique(matched).size != matched.size:
            raise ValueError(f"node {self.ref_index}: duplicate candidate targets")
        if self.fixed:
            if t.size != 1 or t[0] == UNMATCHED:
                raise ValueError(
                    f"node {self.ref_index}: fixed node must have exactly one matched label"
                )
        elif UNMATCHED not in t:
            raise ValueError(f"node {self.ref_index}: non-fixed node must include UNMATCHED")

    @property
    def n_labels(self) -> int:
        return int(self.targets.size)


class MatchGraph:
    """MRF over selected reference features with undirected KNN edges."""

    def __init__(
        self,
        ref: FeatureSet,
        tgt: FeatureSet,
        nodes: Sequence[GraphNode],
        edges: Sequence[tuple[int, int]],
    ):
        self.ref = ref
        self.tgt = tgt
        self.nodes = list(nodes)
        n = len(self.nodes)
        for node in self.nodes:
            if not 0 <= node.ref_index < len(ref):
                raise ValueError(f"node ref_index {node.ref_index} out of range")
            bad = node.targets[(node.targets != UNMATCHED) & (
                (node.targets < 0) | (node.targets >= len(tgt)))]
            if bad.size:
                raise ValueError(f"node {node.ref_index}: target {bad[0]} out of range")
        seen = set()
        normalized = []
        for i, j in edges:
            if i == j:
                raise ValueError(f"self-edge at node {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge ({i}, {j}) out of range")
            key = (i, j) if i < j else (j, i)
            if key in seen:
                continue
            seen.add(key)
            normalized.append(key)
        self.edges = sorted(normalized)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def neighbors(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in self.nodes]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        return adj


@dataclass(frozen=True)
class EnergyBreakdown:
    """Unary total, double-counted pairwise total, and their lambda-weighted
    combination. `bp_objective` is the single-count functional message
    passing minimizes."""

    unary_total: float
    pairwise_total: float
    lam: float
    combined: float = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "combined", self.unary_total + self.lam * self.pairwise_total)

    @property
    def bp_objective(self) -> float:
        return self.unary_total + self.lam * (self.pairwise_total / 2.0)


def unary_energy(ref: FeatureSet, tgt: FeatureSet, c: Correspondence, alpha: float) -> float:
    """Descriptor distance of a matched correspondence, alpha otherwise."""
    if c.target == UNMATCHED:
        return float(alpha)
    return descriptor_distance(ref.descriptors[c.ref_index], tgt.descriptors[c.target])


def total_energy(
    graph: MatchGraph,
    assignment: Sequence[Correspondence],
    lam: float,
    alpha: float,
) -> EnergyBreakdown:
    """Energy of one full assignment (one chosen label per node).

    Pairwise follows the double neighborhood sum: every undirected edge
    contributes its (symmetric) energy twice.
    """
    if len(assignment) != graph.n_nodes:
        raise ValueError(f"assignment length {len(assignment)} != {graph.n_nodes} nodes")
    for node, c in zip(graph.nodes, assignment):
        if c.ref_index != node.ref_index:
            raise ValueError(f"assignment ref {c.ref_index} does not match node {node.ref_index}")
        if c.target not in node.targets:
            raise ValueError(f"node {node.ref_index}: label {c.target} not in its list")
    unary = sum(unary_energy(graph.ref, graph.tgt, c, alpha) for c in assignment)
    undirected = sum(
        pairwise_energy(graph.ref, graph.tgt, assignment[i], assignment[j])
        for i, j in graph.edges
    )
    return EnergyBreakdown(float(unary), 2.0 * undirected, float(lam))


@dataclass
class BPResult:
    """Beliefs per non-fixed node (None for fixed), plus schedule
    diagnostics. `deltas` holds the max message change of each iteration."""

    beliefs: list[np.ndarray | None]
    iterations: int
    converged: bool
    deltas: list[float]
    message_shapes: list[tuple[int, int]]


def _message_targets(node: GraphNode) -> np.ndarray:
    # Every correspondence variable's label space includes UNMATCHED. A
    # fixed node's decode never changes, but its emitted messages still
    # minimize over {fixed label, UNMATCHED}; this caps the penalty a seed
    # can impose on its neighbors at alpha, which is what lets the graph
    # effectively cut edges toward geometrically alien regions (independent
    # motions, occlusions) instead of forcing them unmatched.
    if node.fixed:
        return np.append(node.targets, UNMATCHED)
    return node.targets


def _compiled_unary(graph: MatchGraph, alpha: float, lmax: int) -> np.ndarray:
    n = graph.n_nodes
    unary = np.full((n, lmax), _PAD)
    ref_desc = graph.ref.descriptors
    tgt_desc = graph.tgt.descriptors
    for i, node in enumerate(graph.nodes):
        t = _message_targets(node)
        row = np.empty(t.size)
        matched = t != UNMATCHED
        if matched.any():
            diffs = tgt_desc[t[matched]] - ref_desc[node.ref_index]
            row[matched] = np.sqrt(np.square(diffs).sum(axis=1))
        row[~matched] = alpha
        unary[i, : t.size] = row
    return unary


def _edge_tables(graph: MatchGraph, lmax: int) -> np.ndarray:
    """(E, lmax, lmax) pairwise tables for the undirected edge list, padded
    with UNMATCHED (zero energy) label slots."""
    ne = len(graph.edges)
    tables = np.zeros((ne, lmax, lmax))
    if ne == 0:
        return tables
    si = np.array([graph.nodes[i].ref_index for i, _ in graph.edges], dtype=np.int64)
    sj = np.array([graph.nodes[j].ref_index for _, j in graph.edges], dtype=np.int64)
    ta = np.full((ne, lmax), UNMATCHED, dtype=np.int64)
    tb = np.full((ne, lmax), UNMATCHED, dtype=np.int64)
    for e, (i, j) in enumerate(graph.edges):
        ti = _message_targets(graph.nodes[i])
        tj = _message_targets(graph.nodes[j])
        ta[e, : ti.size] = ti
        tb[e, : tj.size] = tj
    block = max(1, (1 << 20) // (lmax * lmax))
    for lo in range(0, ne, block):
        hi = min(lo + block, ne)
        tables[lo:hi] = pairwise_energy_table(
            graph.ref, graph.tgt, si[lo:hi], sj[lo:hi], ta[lo:hi], tb[lo:hi]
        )
    return tables


def run_bp(
    graph: MatchGraph,
    config: MatcherConfig,
    *,
    normalize: bool = True,
) -> BPResult:
    """Min-sum message passing with a synchronous flooding schedule.

    Stops when the largest absolute message change drops below
    config.bp_epsilon or after config.bp_max_iters sweeps; non-convergence
    is reported via the result, never raised.
    """
    n = graph.n_nodes
    label_counts = np.array([_message_targets(node).size for node in graph.nodes])
    lmax = int(label_counts.max()) if n else 1
    unary = _compiled_unary(graph, config.alpha, lmax)
    fixed = np.array([node.fixed for node in graph.nodes], dtype=bool)

    tables = _edge_tables(graph, lmax)

    # directed edges: src -> dst exists unless dst is fixed
    src, dst, tab_idx, transposed = [], [], [], []
    for e, (i, j) in enumerate(graph.edges):
        if not fixed[j]:
            src.append(i)
            dst.append(j)
            tab_idx.append(e)
            transposed.append(False)
        if not fixed[i]:
            src.append(j)
            dst.append(i)
            tab_idx.append(e)
            transposed.append(True)
    ned = len(src)
    shapes = [
        (int(label_counts[s]), int(label_counts[d])) for s, d in zip(src, dst)
    ]

    if ned == 0:
        beliefs: list[np.ndarray | None] = [
            None if node.fixed else unary[i, : node.n_labels].copy()
            for i, node in enumerate(graph.nodes)
        ]
        return BPResult(beliefs, 0, True, [], shapes)

    src_a = np.array(src)
    dst_a = np.array(dst)
    dir_tables = np.empty((ned, lmax, lmax))
    for d in range(ned):
        t = tables[tab_idx[d]]
        dir_tables[d] = t.T if transposed[d] else t
    rev = np.full(ned, -1, dtype=np.int64)
    by_pair = {(s, t): d for d, (s, t) in enumerate(zip(src, dst))}
    for d, (s, t) in enumerate(zip(src, dst)):
        rev[d] = by_pair.get((t, s), -1)
    has_rev = rev >= 0

    recv_valid = np.arange(lmax)[None, :] < label_counts[dst_a][:, None]

    lam_tables = config.lam * dir_tables
    messages = np.zeros((ned, lmax))
    deltas: list[float] = []
    converged = False
    iterations = 0
    for iterations in range(1, config.bp_max_iters + 1):
        totals = unary.copy()
        np.add.at(totals, dst_a, messages)
        vec = totals[src_a]
        vec[has_rev] -= messages[rev[has_rev]]
        new_messages = (vec[:, :, None] + lam_tables).min(axis=1)
        if config.bp_damping > 0 and iterations > 1:
            new_messages *= 1.0 - config.bp_damping
            new_messages += config.bp_damping * messages
        new_messages[~recv_valid] = _PAD
        if normalize:
            new_messages -= new_messages.min(axis=1, keepdims=True)
        delta = float(np.abs(new_messages - messages)[recv_valid].max())
        messages = new_messages
        deltas.append(delta)
        if delta < config.bp_epsilon:
            converged = True
            break

    totals = unary.copy()
    np.add.at(totals, dst_a, messages)
    beliefs = [
        None if node.fixed else totals[i, : node.n_labels].copy()
        for i, node in enumerate(graph.nodes)
    ]
    return BPResult(beliefs, iterations, converged, deltas, shapes)


def decode(graph: MatchGraph, result: BPResult) -> list[Correspondence]:
    """Per-node argmin over beliefs; ties go to the lower target index,
    with UNMATCHED losing all ties. Fixed nodes keep their label."""
    out = []
    for node, belief in zip(graph.nodes, result.beliefs):
        if node.fixed:
            out.append(Correspondence(node.ref_index, int(node.targets[0])))
            continue
        assert belief is not None
        best = belief.min()
        tied = node.targets[belief == best]
        matched = tied[tied != UNMATCHED]
        choice = int(matched.min()) if matched.size else UNMATCHED
        out.append(Correspondence(node.ref_index, choice))
    return out
