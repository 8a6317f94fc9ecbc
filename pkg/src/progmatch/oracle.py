"""Exact brute-force minimizer for small match graphs.

Enumerates every label assignment with branch-and-bound pruning and
returns the global minimum of the same functional belief propagation
optimizes (unary plus lambda times the single-count edge sum, see
`mrf.EnergyBreakdown.bp_objective`). Intended as a test oracle; a guard
rejects state spaces beyond ten million assignments.

Energies here are built from the scalar `geometry.pairwise_energy` and
descriptor distances, not from the vectorized kernels the BP path uses,
so the two routes stay independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Correspondence
from .geometry import pairwise_energy
from .mrf import EnergyBreakdown, MatchGraph, total_energy, unary_energy

STATE_SPACE_LIMIT = 10_000_000


class StateSpaceError(ValueError):
    """Raised when the assignment space exceeds the enumeration guard."""


@dataclass(frozen=True)
class OracleResult:
    """Globally minimal assignment, its energy breakdown, the minimized
    objective value, and the size of the enumerated label space."""

    best_assignment: list[Correspondence]
    best_energy: EnergyBreakdown
    best_objective: float
    enumerated: int


def exhaustive_minimize(graph: MatchGraph, lam: float, alpha: float) -> OracleResult:
    """Exact minimizer over all label assignments.

    Ties are broken lexicographically by node order then label order
    (first minimizer in enumeration order wins). All label-pair energies
    are non-negative, so partial sums prune soundly.
    """
    n = graph.n_nodes
    counts = [node.n_labels for node in graph.nodes]
    space = math.prod(counts)
    if space > STATE_SPACE_LIMIT:
        raise StateSpaceError(f"state space {space} exceeds {STATE_SPACE_LIMIT}")

    unaries = [
        np.array([
            unary_energy(graph.ref, graph.tgt, Correspondence(node.ref_index, int(t)), alpha)
            for t in node.targets
        ])
        for node in graph.nodes
    ]
    # edges to already-assigned nodes only, as (earlier_node, table) pairs
    back_edges: list[list[tuple[int, np.ndarray]]] = [[] for _ in range(n)]
    for i, j in graph.edges:
        ni, nj = graph.nodes[i], graph.nodes[j]
        table = np.array([
            [
                pairwise_energy(
                    graph.ref, graph.tgt,
                    Correspondence(ni.ref_index, int(ti)),
                    Correspondence(nj.ref_index, int(tj)),
                )
                for tj in nj.targets
            ]
            for ti in ni.targets
        ])
        back_edges[j].append((i, table))

    best_cost = math.inf
    best_labels: list[int] | None = None
    labels = [0] * n

    def descend(k: int, cost: float) -> None:
        nonlocal best_cost, best_labels
        if k == n:
            if cost < best_cost:
                best_cost = cost
                best_labels = labels.copy()
            return
        pair_cost = np.zeros(counts[k])
        for i, table in back_edges[k]:
            pair_cost += table[labels[i]]
        node_cost = unaries[k] + lam * pair_cost
        for a in range(counts[k]):
            c = cost + node_cost[a]
            if c < best_cost:
                labels[k] = a
                descend(k + 1, c)
        labels[k] = 0

    descend(0, 0.0)
    if best_labels is None:
        # every assignment is infinite (alpha = inf with unmatched-only
        # nodes); fall back to the lexicographically first one
        best_labels = [0] * n
        best_cost = math.inf

    assignment = [
        Correspondence(node.ref_index, int(node.targets[a]))
        for node, a in zip(graph.nodes, best_labels)
    ]
    breakdown = total_energy(graph, assignment, lam, alpha)
    return OracleResult(assignment, breakdown, float(best_cost), space)


def random_tree_graph(
    rng: np.random.Generator,
    max_nodes: int = 10,
    max_labels: int = 5,
) -> tuple[MatchGraph, float, float]:
    """Random tree-structured match graph over random feature sets.

    Returns (graph, lam, alpha). Trees are where min-sum decoding is exact,
    so these drive the BP-vs-oracle equivalence checks.
    """
    from .core import FeatureSet  # local import keeps module import light
    from .mrf import GraphNode

    n = int(rng.integers(2, max_nodes + 1))
    m = int(rng.integers(3, 9))
    size = 200.0

    def feature_set(count: int) -> FeatureSet:
        return FeatureSet(
            size, size,
            rng.uniform(0, size, (count, 2)),
            rng.uniform(0.5, 3.0, count),
            rng.uniform(-math.pi, math.pi, count),
            rng.normal(size=(count, 8)),
        )

    ref = feature_set(n)
    tgt = feature_set(m)
    nodes = []
    for i in range(n):
        n_cands = int(rng.integers(1, max_labels))
        cands = rng.choice(m, size=min(n_cands, m), replace=False)
        nodes.append(GraphNode(i, np.append(np.sort(cands), -1)))
    edges = [(int(rng.integers(0, i)), i) for i in range(1, n)]
    lam = float(rng.choice([0.0, 0.01, 0.1, 0.5, 1.0]))
    alpha = float(rng.uniform(0.2, 1.5))
    return MatchGraph(ref, tgt, nodes, edges), lam, alpha


def bp_oracle_suite(n_graphs: int, rng_seed: int = 0):
    """Yield (decode objective, oracle objective) over random tree graphs."""
    from .core import MatcherConfig
    from .mrf import decode, run_bp

    rng = np.random.default_rng(rng_seed)
    for _ in range(n_graphs):
        graph, lam, alpha = random_tree_graph(rng)
        config = MatcherConfig(lam=lam, alpha=alpha, bp_max_iters=200, bp_epsilon=1e-12)
        assignment = decode(graph, run_bp(graph, config))
        bp_value = total_energy(graph, assignment, lam, alpha).bp_objective
        oracle_value = exhaustive_minimize(graph, lam, alpha).best_objective
        yield bp_value, oracle_value
