"""Batch pipeline steps shared by the command-line interface.

Each function maps one on-disk artifact to the next: responses are scored
into a table, scored tables turn into per-node accuracies, accuracies drive
tree expansion, labelled trees yield scramble plans, pairs, retention
ratios, transitions, and reports.  Artifacts carry the seed that produced
them in a header line (CSV) or meta object (JSON), and all writers are
deterministic: same inputs and seed, same bytes.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import rng
from .dataset import (
    DatasetManifest,
    EmbeddingTable,
    TrialKind,
    load_confidences,
    load_conspicuity_set,
    load_dictionary,
    load_mask_set,
    load_responses,
)
from .features import (
    ALL_FEATURES,
    CHANNEL_FEATURES,
    RetentionRatio,
    TransitionRecord,
    TransitionDirection,
    node_retention_ratios,
)
from .geometry import CropRect
from .metrics import PairRecord, pairs_from_tree
from .reduction import (
    ReductionConfig,
    ReductionTree,
    expand_level,
    label_mircs,
    trees_from_dict,
    trees_to_dict,
)
from .scoring import ScoringConfig, SpellCorrector, score_response
from .scramble import attach_scrambled_variant


# -- artifact io ---------------------------------------------------------------


def write_json_artifact(path: Path, payload: dict, seed: int) -> None:
    doc = {"meta": {"tool": "mirc-lab", "seed": seed}, **payload}
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def read_json_artifact(path: Path) -> dict:
    return json.loads(Path(path).read_text())


def write_csv_artifact(
    path: Path, fieldnames: Sequence[str], rows: Iterable[Mapping], seed: int
) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# mirc-lab seed={seed}\n")
        writer = csv.DictWriter(fh, fieldnames=list(fieldnames))
        writer.writeheader()
        writer.writerows(rows)


def read_csv_artifact(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


# -- scoring -------------------------------------------------------------------

SCORED_FIELDS = (
    "participant_id",
    "node_id",
    "trial_kind",
    "cleaned_text",
    "CS",
    "CS_A",
    "CS_O",
    "S_sim",
    "correct",
    "flags",
)


def score_responses_file(
    manifest: DatasetManifest,
    config: ScoringConfig,
    responses_path: Path | None = None,
    sentence_path: Path | None = None,
    word_path: Path | None = None,
) -> tuple[list[dict], list[dict]]:
    """Score every response row; returns (scored rows, excluded rows).

    Responses whose embeddings are missing are excluded and reported, never
    given default scores; responses that clean to nothing are kept, scored
    incorrect.
    """
    from .scoring import MissingEmbeddingError

    responses = load_responses(responses_path or manifest.responses_path)
    sentence = EmbeddingTable.from_csv(
        sentence_path or manifest.sentence_embeddings_path, name="sentence"
    )
    word = EmbeddingTable.from_csv(word_path or manifest.word_embeddings_path, name="word")
    corrector = None
    if manifest.dictionary_path is not None and manifest.dictionary_path.exists():
        corrector = SpellCorrector(
            load_dictionary(manifest.dictionary_path), config.spell_max_edit_distance
        )
    rows, excluded = [], []
    for rec in responses:
        clip = manifest.clips[rec.node_id.split("/")[0]]
        try:
            scored = score_response(
                rec.participant_id,
                rec.node_id,
                rec.raw_text,
                clip.gt_label,
                sentence,
                word,
                config,
                corrector,
            )
        except MissingEmbeddingError as exc:
            excluded.append(
                {
                    "participant_id": rec.participant_id,
                    "node_id": rec.node_id,
                    "reason": str(exc),
                }
            )
            continue
        rows.append(
            {
                "participant_id": scored.participant_id,
                "node_id": scored.node_id,
                "trial_kind": rec.trial_kind.value,
                "cleaned_text": scored.cleaned_text,
                "CS": "" if scored.cs is None else repr(scored.cs),
                "CS_A": "" if scored.cs_a is None else repr(scored.cs_a),
                "CS_O": "" if scored.cs_o is None else repr(scored.cs_o),
                "S_sim": "" if scored.s_sim is None else repr(scored.s_sim),
                "correct": str(scored.correct).lower(),
                "flags": ";".join(scored.flags),
            }
        )
    return rows, excluded


def node_accuracies_from_scored(rows: Iterable[Mapping]) -> dict[str, float]:
    """Per-node recognition accuracy over main-trial scored rows."""
    by_node: dict[str, list[bool]] = {}
    for row in rows:
        if row.get("trial_kind", TrialKind.MAIN.value) != TrialKind.MAIN.value:
            continue
        by_node.setdefault(row["node_id"], []).append(row["correct"] == "true")
    return {
        nid: sum(flags) / len(flags) for nid, flags in sorted(by_node.items()) if flags
    }


# -- tree construction ---------------------------------------------------------


def build_trees(
    manifest: DatasetManifest,
    accuracies: Mapping[str, float],
    config: ReductionConfig,
) -> tuple[dict[str, ReductionTree], list[str]]:
    """Expand every test clip level by level from recorded accuracies.

    Expansion of a clip stops early when a selected node has no accuracy
    yet; those node ids are returned as the untested frontier.
    """
    from .dataset import ClipRole

    trees: dict[str, ReductionTree] = {}
    untested: list[str] = []
    for clip in manifest.clips_by_role(ClipRole.TEST):
        tree = ReductionTree(clip.clip_id, CropRect(0, 0, clip.width, clip.height))
        trees[clip.clip_id] = tree
        for level in range(config.max_level + 1):
            frontier = [
                n for n in tree.at_level(level) if n.status.value == "untested"
            ]
            missing = [n.node_id for n in frontier if n.node_id not in accuracies]
            if missing:
                untested.extend(missing)
                break
            selected = expand_level(tree, level, accuracies, config)
            if not selected:
                break
    return trees, untested


def label_all(
    trees: Mapping[str, ReductionTree], threshold: float
) -> dict[str, list[str]]:
    report = {"mircs": [], "sub_mircs": [], "unresolved_leaves": []}
    for clip_id in sorted(trees):
        r = label_mircs(trees[clip_id], threshold=threshold)
        report["mircs"] += r.mircs
        report["sub_mircs"] += r.sub_mircs
        report["unresolved_leaves"] += r.unresolved_leaves
    return report


def attach_scrambles(
    trees: Mapping[str, ReductionTree],
    manifest: DatasetManifest,
    root_seed: int,
    accuracies: Mapping[str, float] | None = None,
    n_blocks: int = 5,
    only_mircs: bool = True,
) -> dict[str, dict]:
    """Add scrambled variants of labelled MIRCs; returns plans by node id.

    Per-node seeds derive from the root seed and the source node id, so a
    re-run with the same seed reproduces identical plans.
    """
    from .reduction import MircRole

    plans: dict[str, dict] = {}
    accuracies = accuracies or {}
    for clip_id in sorted(trees):
        tree = trees[clip_id]
        clip = manifest.clips[clip_id]
        sources = [
            n.node_id
            for n in sorted(tree.intact_nodes(), key=lambda n: n.node_id)
            if (n.mirc_role == MircRole.MIRC if only_mircs else n.is_tested)
        ]
        for source_id in sources:
            seed = rng.derive_seed(root_seed, "scramble", source_id)
            node, plan = attach_scrambled_variant(
                tree, source_id, clip.frame_count, seed, n_blocks
            )
            if node.node_id in accuracies:
                node.mark_tested(accuracies[node.node_id])
            plans[node.node_id] = plan.to_dict()
    return plans


def save_trees(path: Path, trees: Mapping[str, ReductionTree], seed: int, extra: dict | None = None) -> None:
    payload = {"trees": trees_to_dict(list(trees.values()))}
    if extra:
        payload.update(extra)
    write_json_artifact(path, payload, seed)


def load_trees(path: Path) -> dict[str, ReductionTree]:
    return trees_from_dict(read_json_artifact(path)["trees"])


# -- pairs and correctness -----------------------------------------------------


def build_pairs(
    trees: Mapping[str, ReductionTree],
    manifest: DatasetManifest,
    confidences_path: Path | None = None,
) -> list[PairRecord]:
    conf_by_node: dict[str, float] = {}
    path = confidences_path or manifest.confidences_path
    if path is not None and path.exists():
        gt_verbs = {
            nid: manifest.clips[nid.split("/")[0]].verb_class
            for tree in trees.values()
            for nid in tree.nodes
        }
        records = load_confidences(path, gt_verbs)
        conf_by_node = {nid: r.gt_verb_confidence for nid, r in records.items()}
    pairs: list[PairRecord] = []
    for clip_id in sorted(trees):
        verb = manifest.clips[clip_id].verb_class
        pairs.extend(pairs_from_tree(trees[clip_id], verb, conf_by_node))
    return pairs


def verb_correctness(
    trees: Mapping[str, ReductionTree],
    manifest: DatasetManifest,
    classifier: str,
    threshold: float = 0.5,
    confidences_path: Path | None = None,
) -> dict[str, bool]:
    """Per-node verb correctness for transition analysis.

    Humans: a node counts correct when its recognition accuracy reaches the
    threshold.  Model: the argmax verb must equal the clip's ground truth.
    """
    out: dict[str, bool] = {}
    if classifier == "human":
        for tree in trees.values():
            for n in tree.intact_nodes():
                if n.is_tested:
                    out[n.node_id] = n.human_accuracy >= threshold
    elif classifier == "ai":
        path = confidences_path or manifest.confidences_path
        gt_verbs = {
            nid: manifest.clips[nid.split("/")[0]].verb_class
            for tree in trees.values()
            for nid in tree.nodes
        }
        for nid, rec in load_confidences(path, gt_verbs).items():
            out[nid] = rec.predicted_verb() == gt_verbs[nid]
    else:
        raise ValueError(f"classifier must be human|ai, not {classifier!r}")
    return out


# -- retention ratios ----------------------------------------------------------


def ratios_for_trees(
    trees: Mapping[str, ReductionTree],
    manifest: DatasetManifest,
    skip_missing_channel_maps: bool = True,
) -> tuple[dict[str, dict[str, RetentionRatio]], list[str]]:
    """Retention ratios for every tested node, object masks plus channels.

    Scrambled nodes reuse intact masks (order-invariant) but must have their
    own recomputed channel maps declared; without them the node's channels
    are skipped and reported.
    """
    ratios: dict[str, dict[str, RetentionRatio]] = {}
    skipped: list[str] = []
    for clip_id in sorted(trees):
        tree = trees[clip_id]
        clip = manifest.clips[clip_id]
        masks = load_mask_set(manifest, clip_id)
        channels = load_conspicuity_set(manifest, clip_id, (clip.width, clip.height))
        full_maps = {**masks.masks, **channels.maps}
        for node in sorted(tree.nodes.values(), key=lambda n: n.node_id):
            if not node.is_tested:
                continue
            scrambled_maps = None
            if node.is_scrambled:
                declared = [
                    (node.node_id, ch) in manifest.map_dirs for ch in CHANNEL_FEATURES
                ]
                if all(declared):
                    node_set = load_conspicuity_set(
                        manifest, node.node_id, (clip.width, clip.height)
                    )
                    r = node.rect
                    scrambled_maps = {
                        ch: m[:, r.y : r.y2, r.x : r.x2] for ch, m in node_set.maps.items()
                    }
                elif skip_missing_channel_maps:
                    skipped.append(node.node_id)
                    object_only = {k: full_maps[k] for k in masks.masks}
                    ratios[node.node_id] = node_retention_ratios(node, object_only)
                    continue
            ratios[node.node_id] = node_retention_ratios(node, full_maps, scrambled_maps)
    return ratios, skipped


def ratios_to_rows(ratios: Mapping[str, Mapping[str, RetentionRatio]]) -> list[dict]:
    rows = []
    for node_id in sorted(ratios):
        row = {"node_id": node_id}
        for feature in ALL_FEATURES:
            r = ratios[node_id].get(feature)
            row[feature] = "" if r is None or r.p is None else repr(r.p)
        rows.append(row)
    return rows


def rows_to_ratios(rows: Iterable[Mapping]) -> dict[str, dict[str, RetentionRatio]]:
    out: dict[str, dict[str, RetentionRatio]] = {}
    for row in rows:
        node_id = row["node_id"]
        out[node_id] = {}
        for feature in ALL_FEATURES:
            raw = row.get(feature, "")
            if raw == "":
                continue
            out[node_id][feature] = RetentionRatio(
                node_id=node_id, feature=feature, s_q=-1.0, s_f=-1.0, p=float(raw)
            )
    return out


def transitions_to_rows(transitions: Iterable[TransitionRecord]) -> list[dict]:
    return [
        {
            "parent_node_id": t.parent_node_id,
            "child_node_id": t.child_node_id,
            "direction": t.direction.value,
            "classifier": t.classifier,
        }
        for t in transitions
    ]


def rows_to_transitions(rows: Iterable[Mapping]) -> list[TransitionRecord]:
    return [
        TransitionRecord(
            parent_node_id=row["parent_node_id"],
            child_node_id=row["child_node_id"],
            direction=TransitionDirection(row["direction"]),
            classifier=row["classifier"],
        )
        for row in rows
    ]
