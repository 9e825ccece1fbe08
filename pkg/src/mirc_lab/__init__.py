"""mirc-lab: minimal recognisable configuration experiments for video.

Builds hierarchical corner-crop reductions of short clips, runs the
human-in-the-loop search for minimal recognisable crops (MIRCs), scrambles
their temporal structure under validity constraints, scores free-text
responses, and compares human and model recognition through recognition-gap,
reduction-rate, and feature-retention analyses.
"""

from .geometry import Corner, CropRect, OverlapReport, child_rect, overlap
from .reduction import (
    MircRole,
    NodeStatus,
    QuadrantNode,
    ReductionConfig,
    ReductionTree,
    expand_level,
    full_expansion,
    label_mircs,
)
from .scramble import (
    ScramblePlan,
    is_valid_permutation,
    materialize,
    partition_blocks,
    sample_scramble,
    valid_permutations,
)
from .scoring import (
    ScoringConfig,
    ScoredResponse,
    SpellCorrector,
    clean,
    node_accuracy,
    score_response,
    semantic_score,
)
from .metrics import (
    ClassOperatingPoint,
    GapSummary,
    MeasureKind,
    PairKind,
    PairRecord,
    ai_recognition_gap,
    calibrate_threshold,
    gap_statistics,
    human_recognition_gap,
    make_pair,
    mirc_operating_points,
    pairs_from_tree,
    reduction_rate,
)
from .features import (
    ALL_FEATURES,
    RetentionRatio,
    TemporalCategoryTable,
    TransitionDirection,
    TransitionRecord,
    attach_feature_deltas,
    correlation_matrix,
    detect_transitions,
    node_retention_ratios,
    retention,
    temporal_category_stats,
    transition_delta_stats,
)
from .dataset import (
    Clip,
    ConfidenceRecord,
    DatasetManifest,
    EmbeddingTable,
    ResponseRecord,
    Split,
    TrialKind,
    load_manifest,
    summarize,
)

__version__ = "0.1.0"

__all__ = [
    "Corner",
    "CropRect",
    "OverlapReport",
    "child_rect",
    "overlap",
    "MircRole",
    "NodeStatus",
    "QuadrantNode",
    "ReductionConfig",
    "ReductionTree",
    "expand_level",
    "full_expansion",
    "label_mircs",
    "ScramblePlan",
    "is_valid_permutation",
    "materialize",
    "partition_blocks",
    "sample_scramble",
    "valid_permutations",
    "ScoringConfig",
    "ScoredResponse",
    "SpellCorrector",
    "clean",
    "node_accuracy",
    "score_response",
    "semantic_score",
    "ClassOperatingPoint",
    "GapSummary",
    "MeasureKind",
    "PairKind",
    "PairRecord",
    "ai_recognition_gap",
    "calibrate_threshold",
    "gap_statistics",
    "human_recognition_gap",
    "make_pair",
    "mirc_operating_points",
    "pairs_from_tree",
    "reduction_rate",
    "ALL_FEATURES",
    "RetentionRatio",
    "TemporalCategoryTable",
    "TransitionDirection",
    "TransitionRecord",
    "attach_feature_deltas",
    "correlation_matrix",
    "detect_transitions",
    "node_retention_ratios",
    "retention",
    "temporal_category_stats",
    "transition_delta_stats",
    "Clip",
    "ConfidenceRecord",
    "DatasetManifest",
    "EmbeddingTable",
    "ResponseRecord",
    "Split",
    "TrialKind",
    "load_manifest",
    "summarize",
]
