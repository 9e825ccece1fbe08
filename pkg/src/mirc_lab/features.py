"""Feature retention and prediction-transition analysis.

For every crop we measure how much of each visual feature survives: the
ratio of summed per-pixel map values inside the crop (over all frames) to
the sum over the full video.  Object features use binary segmentation masks;
mid-level features use conspicuity channel maps in [0, 1].

Over a reduction tree we then locate the edges where the verb prediction
flips (failure: correct to incorrect; recovery: incorrect to correct) and
describe each flip by its per-feature retention change, feeding the mean
change, the cross-feature correlation structure, and the low- vs
high-temporal action comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .geometry import CropRect
from .metrics import MeasureKind, PairRecord

OBJECT_FEATURES = ("active_hand", "active_object", "contextual_objects", "background")
CHANNEL_FEATURES = (
    "dkl_colour",
    "intensity",
    "orientation",
    "colour",
    "flicker",
    "contrast",
    "motion",
)
ALL_FEATURES = OBJECT_FEATURES + CHANNEL_FEATURES

LTA_VERBS = frozenset({"wash", "cut", "peel"})


class FeatureAbsentError(ValueError):
    """The feature has zero total activation, so the ratio is undefined."""


class ScrambledMapsMissingError(ValueError):
    """A scrambled node has no recomputed maps; intact maps must not be reused."""


@dataclass(frozen=True)
class RetentionRatio:
    node_id: str
    feature: str
    s_q: float
    s_f: float
    p: float | None  # None when the feature is absent from the full video


def retention(
    full_maps: np.ndarray,
    rect: CropRect,
    node_id: str = "",
    feature: str = "",
    quadrant_maps: np.ndarray | None = None,
) -> RetentionRatio:
    """Fraction of a map's total value retained inside a crop.

    full_maps is (frames, height, width) for the unscrambled full video.
    For scrambled nodes, pass the externally recomputed in-crop maps as
    quadrant_maps (frames, rect.h, rect.w); otherwise the crop is sliced out
    of full_maps directly.  Whole pixels belong to the crop iff their
    integer coordinates fall inside the rect.
    """
    if full_maps.ndim != 3:
        raise ValueError(f"expected (frames, h, w) maps, got shape {full_maps.shape}")
    frames, height, width = full_maps.shape
    if rect.x < 0 or rect.y < 0 or rect.x2 > width or rect.y2 > height:
        raise ValueError(f"rect {rect.to_tuple()} outside {width}x{height} frame")
    s_f = float(np.sum(full_maps, dtype=np.float64))
    if quadrant_maps is None:
        quad = full_maps[:, rect.y : rect.y2, rect.x : rect.x2]
    else:
        if quadrant_maps.shape != (frames, rect.h, rect.w):
            raise ValueError(
                f"quadrant maps shape {quadrant_maps.shape} does not match "
                f"{frames} frames of {rect.h}x{rect.w}"
            )
        quad = quadrant_maps
    s_q = float(np.sum(quad, dtype=np.float64))
    p = s_q / s_f if s_f > 0 else None
    return RetentionRatio(node_id=node_id, feature=feature, s_q=s_q, s_f=s_f, p=p)


def node_retention_ratios(
    node,
    full_maps: Mapping[str, np.ndarray],
    scrambled_maps: Mapping[str, np.ndarray] | None = None,
) -> dict[str, RetentionRatio]:
    """Retention ratios of one node for every supplied feature map.

    Object masks are order-invariant, so intact masks serve scrambled nodes
    too; conspicuity channels are not, so a scrambled node must bring its
    own recomputed channel maps or the channel is refused.
    """
    out: dict[str, RetentionRatio] = {}
    for feature, maps in full_maps.items():
        quad = None
        if node.is_scrambled and feature in CHANNEL_FEATURES:
            if scrambled_maps is None or feature not in scrambled_maps:
                raise ScrambledMapsMissingError(
                    f"{node.node_id}: no recomputed {feature} maps for scrambled node"
                )
            quad = scrambled_maps[feature]
        out[feature] = retention(
            maps, node.rect, node_id=node.node_id, feature=feature, quadrant_maps=quad
        )
    return out


class TransitionDirection(str, Enum):
    FAILURE = "failure"  # correct -> incorrect
    RECOVERY = "recovery"  # incorrect -> correct


@dataclass
class TransitionRecord:
    parent_node_id: str
    child_node_id: str
    direction: TransitionDirection
    classifier: str
    feature_deltas: dict[str, float | None] = field(default_factory=dict)


def detect_transitions(
    tree,
    correctness: Mapping[str, bool],
    classifier: str,
) -> list[TransitionRecord]:
    """Find parent-child edges where the verb prediction flips.

    Edges with either end missing from the correctness map are skipped, which
    naturally drops children that were never tested (the human protocol stops
    below failed nodes).  Only intact (spatial) edges are examined.
    """
    records: list[TransitionRecord] = []
    for node_id in sorted(tree.nodes):
        parent = tree.nodes[node_id]
        if parent.is_scrambled or node_id not in correctness:
            continue
        for child in tree.children_of(node_id):
            if child.node_id not in correctness:
                continue
            before, after = correctness[node_id], correctness[child.node_id]
            if before == after:
                continue
            records.append(
                TransitionRecord(
                    parent_node_id=node_id,
                    child_node_id=child.node_id,
                    direction=(
                        TransitionDirection.FAILURE if before else TransitionDirection.RECOVERY
                    ),
                    classifier=classifier,
                )
            )
    return records


def attach_feature_deltas(
    transitions: Iterable[TransitionRecord],
    ratios: Mapping[str, Mapping[str, RetentionRatio]],
) -> list[TransitionRecord]:
    """Fill per-feature retention changes (child minus parent) on each flip.

    A feature undefined at either end stays None and is excluded from the
    downstream statistics.
    """
    out = []
    for t in transitions:
        parent_r = ratios[t.parent_node_id]
        child_r = ratios[t.child_node_id]
        for feature in ALL_FEATURES:
            pr = parent_r.get(feature)
            cr = child_r.get(feature)
            if pr is None or cr is None or pr.p is None or cr.p is None:
                t.feature_deltas[feature] = None
            else:
                t.feature_deltas[feature] = cr.p - pr.p
        out.append(t)
    return out


@dataclass(frozen=True)
class FeatureDeltaStat:
    feature: str
    mean_delta: float | None
    n: int
    excluded: int


def transition_delta_stats(
    transitions: Iterable[TransitionRecord],
    direction: TransitionDirection,
    classifier: str | None = None,
) -> dict[str, FeatureDeltaStat]:
    """Mean per-feature retention change over flips in one direction."""
    selected = [
        t
        for t in transitions
        if t.direction == direction and (classifier is None or t.classifier == classifier)
    ]
    out = {}
    for feature in ALL_FEATURES:
        deltas = [
            t.feature_deltas[feature]
            for t in selected
            if t.feature_deltas.get(feature) is not None
        ]
        out[feature] = FeatureDeltaStat(
            feature=feature,
            mean_delta=(math.fsum(deltas) / len(deltas)) if deltas else None,
            n=len(deltas),
            excluded=len(selected) - len(deltas),
        )
    return out


def correlation_matrix(
    transitions: Iterable[TransitionRecord],
    direction: TransitionDirection,
    features: Sequence[str] = ALL_FEATURES,
) -> tuple[list[str], np.ndarray]:
    """Pearson correlations between per-flip feature changes.

    Transitions missing any requested feature delta are dropped.  Features
    with zero variance across the remaining flips get NaN rows/columns
    (undefined, reported as such, never zero-filled).
    """
    rows = []
    for t in transitions:
        if t.direction != direction:
            continue
        vals = [t.feature_deltas.get(f) for f in features]
        if any(v is None for v in vals):
            continue
        rows.append(vals)
    if len(rows) < 2:
        raise ValueError(f"need at least 2 {direction.value} transitions, got {len(rows)}")
    data = np.asarray(rows, dtype=np.float64)
    centered = data - data.mean(axis=0)
    denom = np.sqrt((centered**2).sum(axis=0))
    matrix = np.full((len(features), len(features)), np.nan)
    for i in range(len(features)):
        for j in range(len(features)):
            if denom[i] == 0 or denom[j] == 0:
                continue
            matrix[i, j] = float((centered[:, i] * centered[:, j]).sum() / (denom[i] * denom[j]))
    return list(features), matrix


@dataclass
class TemporalCategoryTable:
    """Verb to LTA / HTA category mapping covering a whole vocabulary."""

    categories: dict[str, str]

    def __post_init__(self):
        bad = {v: c for v, c in self.categories.items() if c not in ("lta", "hta")}
        if bad:
            raise ValueError(f"unknown categories: {bad}")

    @classmethod
    def default(cls, vocabulary: Iterable[str]) -> "TemporalCategoryTable":
        return cls({v: ("lta" if v in LTA_VERBS else "hta") for v in vocabulary})

    def category(self, verb: str) -> str:
        return self.categories[verb]


@dataclass(frozen=True)
class CategoryImprovement:
    category: str
    pair_count: int
    improved_count: int
    improved_percent: float


@dataclass
class TemporalComparison:
    classifier: str
    by_category: dict[str, CategoryImprovement]
    welch_t: float | None
    welch_p: float | None
    student_t: float | None
    student_p: float | None
    video_welch_t: float | None
    video_welch_p: float | None
    video_count: int
    notes: list[str] = field(default_factory=list)


def temporal_category_stats(
    pairs: Iterable[PairRecord],
    categories: TemporalCategoryTable,
) -> dict[str, TemporalComparison]:
    """LTA vs HTA improvement rates after temporal scrambling.

    A pair improved when its delta is negative (the scrambled variant scored
    higher).  Gaps are compared between categories with an unequal-variance
    t-test, plus a stricter variant aggregating per unique source video
    before testing; the equal-variance statistic is carried along for
    reference.
    """
    by_classifier: dict[str, list[PairRecord]] = {}
    for p in pairs:
        name = "human" if p.measure_kind == MeasureKind.HUMAN_ACCURACY else "ai"
        by_classifier.setdefault(name, []).append(p)

    out: dict[str, TemporalComparison] = {}
    for name, plist in sorted(by_classifier.items()):
        cat_deltas: dict[str, list[float]] = {"lta": [], "hta": []}
        cat_videos: dict[str, dict[str, list[float]]] = {"lta": {}, "hta": {}}
        for p in plist:
            cat = categories.category(p.verb_class)
            cat_deltas[cat].append(p.delta)
            cat_videos[cat].setdefault(p.clip_id, []).append(p.delta)
        by_category = {}
        for cat in ("hta", "lta"):
            deltas = cat_deltas[cat]
            improved = sum(1 for d in deltas if d < 0)
            by_category[cat] = CategoryImprovement(
                category=cat,
                pair_count=len(deltas),
                improved_count=improved,
                improved_percent=(
                    round(100.0 * improved / len(deltas), 2) if deltas else 0.0
                ),
            )
        notes = []
        welch_t = welch_p = student_t = student_p = None
        video_t = video_p = None
        video_count = 0
        if len(cat_deltas["lta"]) >= 2 and len(cat_deltas["hta"]) >= 2:
            wr = stats.ttest_ind(cat_deltas["lta"], cat_deltas["hta"], equal_var=False)
            welch_t, welch_p = float(wr.statistic), float(wr.pvalue)
            sr = stats.ttest_ind(cat_deltas["lta"], cat_deltas["hta"], equal_var=True)
            student_t, student_p = float(sr.statistic), float(sr.pvalue)
            lta_means = [math.fsum(v) / len(v) for _, v in sorted(cat_videos["lta"].items())]
            hta_means = [math.fsum(v) / len(v) for _, v in sorted(cat_videos["hta"].items())]
            video_count = len(lta_means) + len(hta_means)
            if len(lta_means) >= 2 and len(hta_means) >= 2:
                vr = stats.ttest_ind(lta_means, hta_means, equal_var=False)
                video_t, video_p = float(vr.statistic), float(vr.pvalue)
            else:
                notes.append("too few videos per category for the aggregated test")
        else:
            thin = [c for c in ("lta", "hta") if len(cat_deltas[c]) < 2]
            notes.append(f"under 2 pairs in {', '.join(thin)}; significance tests skipped")
        out[name] = TemporalComparison(
            classifier=name,
            by_category=by_category,
            welch_t=welch_t,
            welch_p=welch_p,
            student_t=student_t,
            student_p=student_p,
            video_welch_t=video_t,
            video_welch_p=video_p,
            video_count=video_count,
            notes=notes,
        )
    return out
