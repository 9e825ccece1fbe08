"""Recognition-gap and reduction-rate metrics over parent-child crop pairs.

The atom of both metrics is a pair: a parent crop and one of its children
(or a MIRC and its temporally scrambled variant) with an accuracy or model
confidence at each end.  The signed change delta = a_parent - a_child is
positive when recognition degrades under reduction.

Human and model numbers are made comparable through class-wise operating
points: for each action class the model's MIRC confidence threshold is set
so that the fraction of MIRCs at or above it matches the class's mean human
MIRC accuracy; the model's gap is then measured only over qualifying pairs.

All aggregation uses exactly-rounded summation (math.fsum) so results do not
depend on pair order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

HISTOGRAM_BIN_WIDTH = 0.1
HISTOGRAM_EDGES = tuple(-1.0 + i * HISTOGRAM_BIN_WIDTH for i in range(21))


class PairKind(str, Enum):
    ANY_PARENT_CHILD = "any_parent_child"
    MIRC_SUB_MIRC = "mirc_sub_mirc"
    SPATIOTEMPORAL_MIRC_SUB_MIRC = "spatiotemporal_mirc_sub_mirc"


class MeasureKind(str, Enum):
    HUMAN_ACCURACY = "human_accuracy"
    MODEL_CONFIDENCE = "model_confidence"


class NoOperatingPointError(ValueError):
    pass


@dataclass(frozen=True)
class PairRecord:
    parent_node_id: str
    child_node_id: str
    a_parent: float
    a_child: float
    delta: float
    level: int
    pair_kind: PairKind
    measure_kind: MeasureKind
    verb_class: str
    clip_id: str

    def __post_init__(self):
        for name in ("a_parent", "a_child"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.delta != self.a_parent - self.a_child:
            raise ValueError(
                f"stored delta {self.delta} != a_parent - a_child "
                f"{self.a_parent - self.a_child}"
            )

    def to_dict(self) -> dict:
        d = {
            "parent_node_id": self.parent_node_id,
            "child_node_id": self.child_node_id,
            "a_parent": self.a_parent,
            "a_child": self.a_child,
            "delta": self.delta,
            "level": self.level,
            "pair_kind": self.pair_kind.value,
            "measure_kind": self.measure_kind.value,
            "verb_class": self.verb_class,
            "clip_id": self.clip_id,
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PairRecord":
        return cls(
            parent_node_id=d["parent_node_id"],
            child_node_id=d["child_node_id"],
            a_parent=d["a_parent"],
            a_child=d["a_child"],
            delta=d["delta"],
            level=d["level"],
            pair_kind=PairKind(d["pair_kind"]),
            measure_kind=MeasureKind(d["measure_kind"]),
            verb_class=d["verb_class"],
            clip_id=d["clip_id"],
        )


def make_pair(
    parent_node_id: str,
    child_node_id: str,
    a_parent: float,
    a_child: float,
    level: int,
    pair_kind: PairKind,
    measure_kind: MeasureKind,
    verb_class: str,
    clip_id: str,
) -> PairRecord:
    return PairRecord(
        parent_node_id=parent_node_id,
        child_node_id=child_node_id,
        a_parent=a_parent,
        a_child=a_child,
        delta=a_parent - a_child,
        level=level,
        pair_kind=pair_kind,
        measure_kind=measure_kind,
        verb_class=verb_class,
        clip_id=clip_id,
    )


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def _population_std(values: Sequence[float]) -> float:
    m = _mean(values)
    return math.sqrt(math.fsum((v - m) ** 2 for v in values) / len(values))


@dataclass(frozen=True)
class GapSummary:
    n: int
    mean: float
    std: float


def _gap_by_class(pairs: Sequence[PairRecord]) -> dict[str, GapSummary]:
    by_class: dict[str, list[float]] = {}
    for p in pairs:
        by_class.setdefault(p.verb_class, []).append(p.delta)
    return {
        cls: GapSummary(n=len(g), mean=_mean(g), std=_population_std(g))
        for cls, g in sorted(by_class.items())
    }


def human_recognition_gap(
    pairs: Iterable[PairRecord], kind: PairKind = PairKind.MIRC_SUB_MIRC
) -> dict[str, GapSummary]:
    """Per-class mean and std of accuracy drop over MIRC / sub-MIRC pairs."""
    selected = [
        p
        for p in pairs
        if p.measure_kind == MeasureKind.HUMAN_ACCURACY and p.pair_kind == kind
    ]
    return _gap_by_class(selected)


@dataclass(frozen=True)
class ClassOperatingPoint:
    """Model confidence threshold matched to human MIRC accuracy for a class.

    tl is chosen so the fraction of the class's MIRC confidences at or above
    it is as close to the target X as the sample allows (k-th largest with
    k = round(X * N)); ties pull every equal confidence into the qualifying
    set, so the achieved fraction is reported alongside.
    """

    verb_class: str
    target_fraction: float
    tl: float
    qualifying_mirc_ids: frozenset[str]
    achieved_fraction: float


def calibrate_threshold(
    confidences: Mapping[str, float], target_fraction: float, verb_class: str = ""
) -> ClassOperatingPoint:
    if not confidences:
        raise NoOperatingPointError(f"no MIRC confidences for class {verb_class!r}")
    if not 0.0 <= target_fraction <= 1.0:
        raise ValueError(f"target fraction must be in [0, 1], got {target_fraction}")
    n = len(confidences)
    values = sorted(confidences.values(), reverse=True)
    k = math.floor(target_fraction * n + 0.5)
    if k == 0:
        tl = math.nextafter(values[0], math.inf)
    else:
        tl = values[k - 1]
    qualifying = frozenset(nid for nid, c in confidences.items() if c >= tl)
    return ClassOperatingPoint(
        verb_class=verb_class,
        target_fraction=target_fraction,
        tl=tl,
        qualifying_mirc_ids=qualifying,
        achieved_fraction=len(qualifying) / n,
    )


def mirc_operating_points(
    pairs: Iterable[PairRecord], kind: PairKind = PairKind.MIRC_SUB_MIRC
) -> dict[str, ClassOperatingPoint]:
    """Calibrate per-class thresholds from a mixed human + model pair table.

    The target fraction for each class is the mean human accuracy over its
    unique MIRC parents; the threshold is then placed on the model
    confidences of the same parents.
    """
    human_acc: dict[str, dict[str, float]] = {}
    model_conf: dict[str, dict[str, float]] = {}
    for p in pairs:
        if p.pair_kind != kind:
            continue
        store = human_acc if p.measure_kind == MeasureKind.HUMAN_ACCURACY else model_conf
        store.setdefault(p.verb_class, {})[p.parent_node_id] = p.a_parent
    points = {}
    for cls in sorted(model_conf):
        if cls not in human_acc:
            continue
        x = _mean(list(human_acc[cls].values()))
        points[cls] = calibrate_threshold(model_conf[cls], x, verb_class=cls)
    return points


def ai_recognition_gap(
    pairs: Iterable[PairRecord],
    operating_points: Mapping[str, ClassOperatingPoint],
    kind: PairKind = PairKind.MIRC_SUB_MIRC,
) -> dict[str, GapSummary | None]:
    """Per-class confidence gap over pairs whose MIRC clears the threshold.

    A class whose qualifying set is empty maps to None (undefined), never 0.
    """
    by_class: dict[str, list[float]] = {}
    for p in pairs:
        if p.measure_kind != MeasureKind.MODEL_CONFIDENCE or p.pair_kind != kind:
            continue
        op = operating_points.get(p.verb_class)
        if op is None:
            continue
        by_class.setdefault(p.verb_class, [])
        if p.a_parent >= op.tl:
            by_class[p.verb_class].append(p.delta)
    out: dict[str, GapSummary | None] = {}
    for cls, gaps in sorted(by_class.items()):
        if gaps:
            out[cls] = GapSummary(n=len(gaps), mean=_mean(gaps), std=_population_std(gaps))
        else:
            out[cls] = None
    return out


def histogram_bin(delta: float) -> int:
    """Index of the 0.1-wide bin over [-1, 1] holding delta.

    Bins are lower-inclusive, upper-exclusive; the last bin is closed so
    delta = 1.0 lands in bin 19.
    """
    if not -1.0 <= delta <= 1.0:
        raise ValueError(f"delta outside [-1, 1]: {delta}")
    for i in range(20):
        if HISTOGRAM_EDGES[i] <= delta < HISTOGRAM_EDGES[i + 1]:
            return i
    return 19


@dataclass
class ReductionRateReport:
    arr: float | None
    histogram: list[int]
    per_level_means: dict[int, float | None]
    per_level_counts: dict[int, int]
    pair_count: int
    positive_count: int

    def to_dict(self) -> dict:
        return {
            "arr": self.arr,
            "histogram": {
                "edges": list(HISTOGRAM_EDGES),
                "counts": list(self.histogram),
            },
            "per_level_means": {str(k): v for k, v in sorted(self.per_level_means.items())},
            "per_level_counts": {str(k): v for k, v in sorted(self.per_level_counts.items())},
            "pair_count": self.pair_count,
            "positive_count": self.positive_count,
        }


def reduction_rate(
    pairs: Iterable[PairRecord], restrict: PairKind | None = None
) -> ReductionRateReport:
    """Average reduction rate: mean of strictly positive deltas.

    The histogram covers every delta (degradations and improvements alike);
    per-level means condition on positive deltas only, as the rate does.
    With no degrading pair the rate is undefined (None), never 0.
    """
    selected = [p for p in pairs if restrict is None or p.pair_kind == restrict]
    if not selected:
        raise ValueError("no pairs to aggregate")
    counts = [0] * 20
    positives: list[float] = []
    level_all: dict[int, int] = {}
    level_pos: dict[int, list[float]] = {}
    for p in selected:
        counts[histogram_bin(p.delta)] += 1
        level_all[p.level] = level_all.get(p.level, 0) + 1
        if p.delta > 0:
            positives.append(p.delta)
            level_pos.setdefault(p.level, []).append(p.delta)
    per_level_means = {
        lvl: (_mean(level_pos[lvl]) if lvl in level_pos else None) for lvl in level_all
    }
    return ReductionRateReport(
        arr=_mean(positives) if positives else None,
        histogram=counts,
        per_level_means=per_level_means,
        per_level_counts=level_all,
        pair_count=len(selected),
        positive_count=len(positives),
    )


def pairs_from_tree(
    tree,
    verb_class: str,
    confidences: Mapping[str, float] | None = None,
) -> list[PairRecord]:
    """Extract every measurable parent-child pair from a labelled tree.

    Emits, for each measure with data at both ends of an edge: all tested
    parent-child pairs, MIRC / sub-MIRC pairs, and MIRC / scrambled-variant
    pairs.  Model confidence for a node is looked up in `confidences` by
    node id.
    """
    from .reduction import MircRole

    conf = confidences or {}
    pairs: list[PairRecord] = []

    def emit(parent, child, kind: PairKind) -> None:
        if parent.is_tested and child.is_tested:
            pairs.append(
                make_pair(
                    parent.node_id,
                    child.node_id,
                    parent.human_accuracy,
                    child.human_accuracy,
                    child.level,
                    kind,
                    MeasureKind.HUMAN_ACCURACY,
                    verb_class,
                    tree.clip_id,
                )
            )
        if parent.node_id in conf and child.node_id in conf:
            pairs.append(
                make_pair(
                    parent.node_id,
                    child.node_id,
                    conf[parent.node_id],
                    conf[child.node_id],
                    child.level,
                    kind,
                    MeasureKind.MODEL_CONFIDENCE,
                    verb_class,
                    tree.clip_id,
                )
            )

    for node_id in sorted(tree.nodes):
        parent = tree.nodes[node_id]
        if parent.is_scrambled:
            continue
        for child in tree.children_of(node_id, include_scrambled=True):
            if child.is_scrambled:
                if parent.mirc_role == MircRole.MIRC:
                    emit(parent, child, PairKind.SPATIOTEMPORAL_MIRC_SUB_MIRC)
                continue
            emit(parent, child, PairKind.ANY_PARENT_CHILD)
            if (
                parent.mirc_role == MircRole.MIRC
                and child.mirc_role == MircRole.SUB_MIRC
            ):
                emit(parent, child, PairKind.MIRC_SUB_MIRC)
    return pairs


@dataclass(frozen=True)
class GapStatistics:
    n: int
    minimum: float
    maximum: float
    mean: float
    std: float

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "min": self.minimum,
            "max": self.maximum,
            "mean": self.mean,
            "std": self.std,
        }


def gap_statistics(gaps: Sequence[float]) -> GapStatistics:
    """Order statistics plus population mean/std of a gap list."""
    if not gaps:
        raise ValueError("need at least one gap")
    return GapStatistics(
        n=len(gaps),
        minimum=min(gaps),
        maximum=max(gaps),
        mean=_mean(gaps),
        std=_population_std(gaps),
    )
