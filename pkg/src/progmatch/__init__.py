"""Geometry-aware local feature matching.

Formulates matching as an MRF over reference features with an explicit
unmatched label, scores correspondence pairs with a bidirectional transfer
measure built from position/scale/orientation, solves with min-sum belief
propagation, and searches candidates progressively from confident seeds.
"""

from .core import (
    UNMATCHED,
    ConfigError,
    Correspondence,
    Feature,
    FeatureSet,
    FeatureSetError,
    MatcherConfig,
    SimilarityTransform,
    default_config,
    load_feature_set,
    save_feature_set,
)
from .candidates import (
    CandidateList,
    SpatialIndex,
    descriptor_distance,
    knn_neighbors,
    nndr_match,
    top_kappa,
)
from .geometry import pairwise_energy, pose_of, transfer_distance
from .mrf import (
    BPResult,
    EnergyBreakdown,
    GraphNode,
    MatchGraph,
    decode,
    run_bp,
    total_energy,
    unary_energy,
)
from .oracle import OracleResult, StateSpaceError, exhaustive_minimize
from .progressive import (
    ExpansionRecord,
    InsufficientSeedsError,
    MatchOutcome,
    MatchRecord,
    ProgressiveMatcher,
    SeedState,
    load_matches,
    match,
    match_non_progressive,
    save_matches,
)
from .synth import (
    GroundTruth,
    SceneGenerationError,
    SceneSpec,
    generate,
    load_scene,
    save_scene,
    two_motion_scene,
)
from .evaluation import MetricReport, compare, is_inlier, overlay_records, score

__version__ = "0.1.0"

__all__ = [
    "UNMATCHED",
    "BPResult",
    "CandidateList",
    "ConfigError",
    "Correspondence",
    "EnergyBreakdown",
    "ExpansionRecord",
    "Feature",
    "FeatureSet",
    "FeatureSetError",
    "GraphNode",
    "GroundTruth",
    "InsufficientSeedsError",
    "MatchGraph",
    "MatchOutcome",
    "MatchRecord",
    "MatcherConfig",
    "MetricReport",
    "OracleResult",
    "ProgressiveMatcher",
    "SceneGenerationError",
    "SceneSpec",
    "SeedState",
    "SimilarityTransform",
    "SpatialIndex",
    "StateSpaceError",
    "compare",
    "decode",
    "default_config",
    "descriptor_distance",
    "exhaustive_minimize",
    "generate",
    "is_inlier",
    "knn_neighbors",
    "load_feature_set",
    "load_matches",
    "load_scene",
    "match",
    "match_non_progressive",
    "nndr_match",
    "overlay_records",
    "pairwise_energy",
    "pose_of",
    "run_bp",
    "save_feature_set",
    "save_matches",
    "save_scene",
    "score",
    "top_kappa",
    "total_energy",
    "transfer_distance",
    "two_motion_scene",
    "unary_energy",
]
