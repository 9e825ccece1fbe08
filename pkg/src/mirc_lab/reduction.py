"""Hierarchical corner-crop reduction trees.

A clip's reduction tree starts from one level-0 rectangle and recursively
spawns four corner-anchored children per recognised node.  Because the number
of candidate quadrants grows exponentially, expansion applies four pruning
rules that exploit spatial overlap between candidates and previously
unrecognised regions, keeping the tested set small while still pinning down
the minimal recognisable crop (MIRC) of every clip.

Nodes recognised by at least the configured threshold whose tested children
all fall below it are labelled MIRC; those failing children are sub-MIRCs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

from .geometry import Corner, CropRect, child_rect, intersection_area, overlap

CORNER_ORDER = (Corner.UL, Corner.BL, Corner.UR, Corner.BR)


class NodeStatus(str, Enum):
    UNTESTED = "untested"
    TESTED = "tested"
    PRUNED_PRESUMED_UNRECOGNISABLE = "pruned_presumed_unrecognisable"


class MircRole(str, Enum):
    NONE = "none"
    MIRC = "mirc"
    SUB_MIRC = "sub_mirc"
    SPATIOTEMPORAL_MIRC = "spatiotemporal_mirc"
    SPATIOTEMPORAL_SUB_MIRC = "spatiotemporal_sub_mirc"


class TreeIntegrityError(ValueError):
    pass


class UnresolvedLeafWarning(UserWarning):
    """A recognised node ran out of testable children before being confirmed."""


@dataclass
class ReductionConfig:
    """Knobs of the reduction search.

    scale_factor is the per-dimension child/parent size ratio; values at or
    below 0.5 make the overlap-based pruning rules vacuous (disjoint
    quadrants) and are flagged, not rejected.
    """

    scale_factor: float = 0.8
    max_level: int = 7
    recognition_threshold: float = 0.50
    cluster_overlap: float = 0.95
    containment_share: float = 0.65
    max_quadrants_per_level: int = 16

    def __post_init__(self):
        if not 0.0 < self.scale_factor < 1.0:
            raise ValueError(f"scale_factor must be in (0, 1), got {self.scale_factor}")
        if self.scale_factor <= 0.5:
            warnings.warn(
                f"scale_factor {self.scale_factor} <= 0.5 produces non-overlapping "
                "children; overlap pruning rules will never fire",
                stacklevel=2,
            )
        for name in ("recognition_threshold", "cluster_overlap", "containment_share"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must be in (0, 1], got {v}")
        if self.max_level < 0:
            raise ValueError("max_level must be >= 0")
        if self.max_quadrants_per_level < 1:
            raise ValueError("max_quadrants_per_level must be >= 1")


def corner_path_str(path: tuple[Corner, ...]) -> str:
    return "".join(c.value for c in path)


def parse_corner_path(s: str) -> tuple[Corner, ...]:
    if len(s) % 2 != 0:
        raise ValueError(f"malformed corner path {s!r}")
    return tuple(Corner(s[i : i + 2]) for i in range(0, len(s), 2))


def node_id_for(
    clip_id: str, level: int, path: tuple[Corner, ...], scramble_seed: int | None = None
) -> str:
    nid = f"{clip_id}/L{level}/{corner_path_str(path)}"
    if scramble_seed is not None:
        nid += f"/scr{scramble_seed}"
    return nid


@dataclass
class QuadrantNode:
    """One crop (or its temporally scrambled variant) in a reduction tree."""

    node_id: str
    clip_id: str
    level: int
    corner_path: tuple[Corner, ...]
    rect: CropRect
    status: NodeStatus = NodeStatus.UNTESTED
    human_accuracy: float | None = None
    model_confidence: float | None = None
    mirc_role: MircRole = MircRole.NONE
    parent_id: str | None = None
    children: list[str] = field(default_factory=list)
    # temporal variant bookkeeping: None means intact frame order
    scramble_seed: int | None = None
    scramble_permutation: tuple[int, ...] | None = None
    source_id: str | None = None  # intact node a scrambled variant derives from

    @property
    def is_scrambled(self) -> bool:
        return self.scramble_permutation is not None

    @property
    def is_tested(self) -> bool:
        return self.status == NodeStatus.TESTED

    def corner_rank(self) -> tuple[int, ...]:
        return tuple(c.rank for c in self.corner_path)

    def mark_tested(self, accuracy: float) -> None:
        if not 0.0 <= accuracy <= 1.0:
            raise ValueError(f"accuracy must be in [0, 1], got {accuracy}")
        self.status = NodeStatus.TESTED
        self.human_accuracy = accuracy

    def to_dict(self) -> dict:
        d = {
            "node_id": self.node_id,
            "clip_id": self.clip_id,
            "level": self.level,
            "corner_path": corner_path_str(self.corner_path),
            "rect": list(self.rect.to_tuple()),
            "status": self.status.value,
            "human_accuracy": self.human_accuracy,
            "model_confidence": self.model_confidence,
            "mirc_role": self.mirc_role.value,
            "parent_id": self.parent_id,
            "children": list(self.children),
        }
        if self.scramble_permutation is not None:
            d["scramble_seed"] = self.scramble_seed
            d["scramble_permutation"] = list(self.scramble_permutation)
            d["source_id"] = self.source_id
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "QuadrantNode":
        perm = d.get("scramble_permutation")
        return cls(
            node_id=d["node_id"],
            clip_id=d["clip_id"],
            level=d["level"],
            corner_path=parse_corner_path(d["corner_path"]),
            rect=CropRect(*d["rect"]),
            status=NodeStatus(d["status"]),
            human_accuracy=d.get("human_accuracy"),
            model_confidence=d.get("model_confidence"),
            mirc_role=MircRole(d.get("mirc_role", "none")),
            parent_id=d.get("parent_id"),
            children=list(d.get("children", [])),
            scramble_seed=d.get("scramble_seed"),
            scramble_permutation=tuple(perm) if perm is not None else None,
            source_id=d.get("source_id"),
        )


class ReductionTree:
    """All quadrant nodes of one clip, keyed by node id."""

    def __init__(self, clip_id: str, root_rect: CropRect):
        self.clip_id = clip_id
        root = QuadrantNode(
            node_id=node_id_for(clip_id, 0, ()),
            clip_id=clip_id,
            level=0,
            corner_path=(),
            rect=root_rect,
        )
        self.root_id = root.node_id
        self.nodes: dict[str, QuadrantNode] = {root.node_id: root}

    @property
    def root(self) -> QuadrantNode:
        return self.nodes[self.root_id]

    def add(self, node: QuadrantNode) -> QuadrantNode:
        if node.node_id in self.nodes:
            raise TreeIntegrityError(f"duplicate node id {node.node_id}")
        self.nodes[node.node_id] = node
        if node.parent_id is not None:
            self.nodes[node.parent_id].children.append(node.node_id)
        return node

    def at_level(self, level: int, include_scrambled: bool = False) -> list[QuadrantNode]:
        out = [
            n
            for n in self.nodes.values()
            if n.level == level and (include_scrambled or not n.is_scrambled)
        ]
        out.sort(key=lambda n: (n.corner_rank(), n.node_id))
        return out

    def children_of(self, node_id: str, include_scrambled: bool = False) -> list[QuadrantNode]:
        kids = [self.nodes[c] for c in self.nodes[node_id].children]
        if not include_scrambled:
            kids = [k for k in kids if not k.is_scrambled]
        return kids

    def intact_nodes(self) -> list[QuadrantNode]:
        return [n for n in self.nodes.values() if not n.is_scrambled]

    def scrambled_nodes(self) -> list[QuadrantNode]:
        return [n for n in self.nodes.values() if n.is_scrambled]

    def max_populated_level(self) -> int:
        return max(n.level for n in self.intact_nodes())

    def validate(self) -> None:
        for n in self.nodes.values():
            if not n.is_scrambled and n.level != len(n.corner_path):
                raise TreeIntegrityError(
                    f"{n.node_id}: level {n.level} != path length {len(n.corner_path)}"
                )
            if n.parent_id is not None:
                parent = self.nodes[n.parent_id]
                if not n.is_scrambled and not parent.rect.contains(n.rect):
                    raise TreeIntegrityError(f"{n.node_id} not contained in parent rect")
            if n.is_scrambled:
                src = self.nodes[n.source_id]
                if src.rect != n.rect:
                    raise TreeIntegrityError(f"{n.node_id} rect differs from source")
            if (n.human_accuracy is not None) != (n.status == NodeStatus.TESTED):
                raise TreeIntegrityError(
                    f"{n.node_id}: accuracy present iff tested violated"
                )

    def to_dict(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "root_id": self.root_id,
            "nodes": {nid: n.to_dict() for nid, n in sorted(self.nodes.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReductionTree":
        tree = cls.__new__(cls)
        tree.clip_id = d["clip_id"]
        tree.root_id = d["root_id"]
        tree.nodes = {nid: QuadrantNode.from_dict(nd) for nid, nd in d["nodes"].items()}
        return tree


def _unrecognised_rects(
    tree: ReductionTree, up_to_level: int, threshold: float
) -> list[CropRect]:
    """Rects known or presumed unrecognisable at levels <= up_to_level."""
    rects = []
    for n in tree.intact_nodes():
        if n.level > up_to_level:
            continue
        if n.status == NodeStatus.PRUNED_PRESUMED_UNRECOGNISABLE:
            rects.append(n.rect)
        elif n.is_tested and n.human_accuracy < threshold:
            rects.append(n.rect)
    return rects


def _cluster_by_iou(nodes: list[QuadrantNode], min_iou: float) -> list[list[QuadrantNode]]:
    """Single-linkage clusters over the pairwise IoU >= min_iou graph."""
    parent = list(range(len(nodes)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(nodes)):
        for j in range(i + 1, len(nodes)):
            if overlap(nodes[i].rect, nodes[j].rect).iou >= min_iou:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[rj] = ri
    clusters: dict[int, list[QuadrantNode]] = {}
    for i, n in enumerate(nodes):
        clusters.setdefault(find(i), []).append(n)
    return list(clusters.values())


def apply_accuracies(
    tree: ReductionTree, level: int, accuracies: Mapping[str, float]
) -> None:
    """Mark level nodes tested with the supplied per-node accuracies."""
    for n in tree.at_level(level):
        if n.status == NodeStatus.PRUNED_PRESUMED_UNRECOGNISABLE:
            continue
        if n.node_id in accuracies:
            n.mark_tested(accuracies[n.node_id])


def expand_level(
    tree: ReductionTree,
    level: int,
    accuracies: Mapping[str, float],
    config: ReductionConfig,
) -> list[QuadrantNode]:
    """Select the next level's quadrants to test.

    Applies, in order: (1) children are generated only under level nodes
    recognised at or above the threshold; (2) candidates fully contained in
    any earlier unrecognised rect are kept in the tree but marked presumed
    unrecognisable; (3) near-duplicate candidates (pairwise IoU >=
    cluster_overlap) are collapsed to one representative; (4) survivors are
    ranked, preferring candidates sharing >= containment_share of their area
    with an earlier unrecognised rect, then greatest cumulative intersection
    with the other survivors, and truncated to max_quadrants_per_level.

    Returns the nodes added for testing, in rank order.  All ordering is
    deterministic: ties fall back to corner-path order UL < BL < UR < BR,
    then clip id.
    """
    apply_accuracies(tree, level, accuracies)
    unresolved = [
        n
        for n in tree.at_level(level)
        if n.status not in (NodeStatus.TESTED, NodeStatus.PRUNED_PRESUMED_UNRECOGNISABLE)
    ]
    if unresolved:
        raise TreeIntegrityError(
            f"level {level} has unresolved nodes: {[n.node_id for n in unresolved]}"
        )
    if level >= config.max_level:
        return []

    thr = config.recognition_threshold
    parents = [
        n for n in tree.at_level(level) if n.is_tested and n.human_accuracy >= thr
    ]
    if not parents:
        return []

    candidates: list[QuadrantNode] = []
    for p in parents:
        for corner in CORNER_ORDER:
            path = p.corner_path + (corner,)
            candidates.append(
                QuadrantNode(
                    node_id=node_id_for(tree.clip_id, level + 1, path),
                    clip_id=tree.clip_id,
                    level=level + 1,
                    corner_path=path,
                    rect=child_rect(p.rect, corner, config.scale_factor),
                    parent_id=p.node_id,
                )
            )

    # rule 2: full containment in an earlier unrecognised rect
    bad_rects = _unrecognised_rects(tree, level, thr)
    survivors: list[QuadrantNode] = []
    for c in candidates:
        if any(intersection_area(c.rect, bad) == c.rect.area for bad in bad_rects):
            c.status = NodeStatus.PRUNED_PRESUMED_UNRECOGNISABLE
            tree.add(c)
        else:
            survivors.append(c)

    # rule 3: collapse near-duplicate clusters to one representative
    representatives: list[QuadrantNode] = []
    for cluster in _cluster_by_iou(survivors, config.cluster_overlap):
        cluster.sort(key=lambda n: (n.corner_rank(), n.clip_id))
        representatives.append(cluster[0])

    # rule 4: rank and truncate to the per-level testing budget
    def near_unrecognised(n: QuadrantNode) -> bool:
        return any(
            overlap(n.rect, bad).share_of_first >= config.containment_share
            for bad in bad_rects
        )

    def cumulative_intersection(n: QuadrantNode) -> int:
        return sum(
            intersection_area(n.rect, o.rect) for o in representatives if o is not n
        )

    representatives.sort(
        key=lambda n: (
            not near_unrecognised(n),
            -cumulative_intersection(n),
            n.corner_rank(),
            n.clip_id,
        )
    )
    selected = representatives[: config.max_quadrants_per_level]
    for n in selected:
        tree.add(n)
    return selected


@dataclass
class LabelReport:
    mircs: list[str] = field(default_factory=list)
    sub_mircs: list[str] = field(default_factory=list)
    unresolved_leaves: list[str] = field(default_factory=list)


def label_mircs(
    tree: ReductionTree,
    accuracies: Mapping[str, float] | None = None,
    threshold: float = 0.50,
) -> LabelReport:
    """Assign MIRC / sub-MIRC roles from recognition accuracies.

    A tested node at or above the threshold whose resolved children (tested
    or presumed-unrecognisable) all fall below it is a MIRC; its tested
    below-threshold children are sub-MIRCs.  Presumed-unrecognisable children
    count as below threshold but are not themselves labelled.  A recognised
    node with no resolved children cannot be confirmed and is reported as an
    unresolved leaf.
    """
    if accuracies:
        for n in tree.intact_nodes():
            if n.status == NodeStatus.UNTESTED and n.node_id in accuracies:
                n.mark_tested(accuracies[n.node_id])

    report = LabelReport()
    for n in tree.intact_nodes():
        n.mirc_role = MircRole.NONE
    for n in tree.intact_nodes():
        if not (n.is_tested and n.human_accuracy >= threshold):
            continue
        kids = tree.children_of(n.node_id)
        resolved = [
            k
            for k in kids
            if k.is_tested or k.status == NodeStatus.PRUNED_PRESUMED_UNRECOGNISABLE
        ]
        if not resolved:
            report.unresolved_leaves.append(n.node_id)
            warnings.warn(
                f"{n.node_id}: recognised but has no resolved children",
                UnresolvedLeafWarning,
                stacklevel=2,
            )
            continue
        below = [
            k
            for k in resolved
            if k.status == NodeStatus.PRUNED_PRESUMED_UNRECOGNISABLE
            or k.human_accuracy < threshold
        ]
        if len(below) == len(resolved):
            n.mirc_role = MircRole.MIRC
            report.mircs.append(n.node_id)
            for k in below:
                if k.is_tested:
                    k.mirc_role = MircRole.SUB_MIRC
                    report.sub_mircs.append(k.node_id)
    return report


def full_expansion(clip_id: str, root_rect: CropRect, config: ReductionConfig) -> ReductionTree:
    """Expand every corner child down to max_level with no pruning.

    Only useful for small max_level; the node count is the geometric series
    (4^(max_level+1) - 1) / 3.
    """
    tree = ReductionTree(clip_id, root_rect)
    frontier = [tree.root]
    for level in range(config.max_level):
        nxt = []
        for p in frontier:
            for corner in CORNER_ORDER:
                path = p.corner_path + (corner,)
                node = QuadrantNode(
                    node_id=node_id_for(clip_id, level + 1, path),
                    clip_id=clip_id,
                    level=level + 1,
                    corner_path=path,
                    rect=child_rect(p.rect, corner, config.scale_factor),
                    parent_id=p.node_id,
                )
                tree.add(node)
                nxt.append(node)
        frontier = nxt
    return tree


def trees_to_dict(trees: Iterable[ReductionTree]) -> dict:
    return {t.clip_id: t.to_dict() for t in trees}


def trees_from_dict(d: Mapping[str, dict]) -> dict[str, ReductionTree]:
    return {cid: ReductionTree.from_dict(td) for cid, td in d.items()}
