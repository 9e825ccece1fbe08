"""Synthetic mini-dataset generator.

Builds a tiny but complete on-disk dataset (frames, masks, conspicuity maps,
embeddings, spell dictionary, scripted crowd responses, model confidences)
whose scripted accuracies drive the reduction of every clip to one MIRC at
level 2, four sub-MIRC children, and one scrambled variant.  The response
script uses the same expansion code as the batch pipeline, so re-running the
pipeline over the generated files reproduces the same trees bit for bit.

Everything is derived from one seed; two builds with the same seed write
byte-identical files.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from . import rng
from .dataset import MASK_CATEGORIES, VERB_CLASSES
from .features import CHANNEL_FEATURES
from .geometry import Corner, CropRect
from .reduction import ReductionConfig, ReductionTree, expand_level, label_mircs
from .scramble import attach_scrambled_variant, materialize

FRAME_W, FRAME_H = 64, 48
FRAME_COUNT = 10
QUOTA = 20

TEST_CLIPS = (
    ("clipA", "easy", "close", "close fridge"),
    ("clipB", "easy", "pour", "pour water"),
    ("clipC", "hard", "wash", "wash pan"),
)
PRACTICE_CLIPS = tuple(
    (f"practice{i}", "easy", verb, label)
    for i, (verb, label) in enumerate(
        [
            ("open", "open door"),
            ("cut", "cut bread"),
            ("take", "take cup"),
            ("put", "put plate"),
            ("hang", "hang towel"),
        ],
        start=1,
    )
)
CATCH_CLIPS = (
    ("catch1", "easy", "open", "open jar"),
    ("catch2", "easy", "close", "close drawer"),
)

WRONG_LABEL = "dance floor"

# scripted human accuracy: one recognised chain root -> UL -> ULUL, which dies
# at level 3, leaving ULUL as the MIRC of every clip
_LEVEL1 = {Corner.UL: 0.65, Corner.BL: 0.35, Corner.UR: 0.40, Corner.BR: 0.30}
_LEVEL2 = {Corner.UL: 0.55, Corner.BL: 0.20, Corner.UR: 0.25, Corner.BR: 0.30}
_LEVEL3 = {Corner.UL: 0.40, Corner.BL: 0.20, Corner.UR: 0.30, Corner.BR: 0.10}
SCRAMBLED_ACCURACY = 0.40


def scripted_accuracy(level: int, corner_path: tuple[Corner, ...]) -> float:
    if level == 0:
        return 0.90
    table = {1: _LEVEL1, 2: _LEVEL2, 3: _LEVEL3}[level]
    return table[corner_path[-1]]


def scripted_ai_correct(level: int, corner_path: tuple[Corner, ...]) -> bool:
    # alternate by level so every tested edge is a prediction flip
    return level % 2 == 0


def simulate_trees(pipeline_seed: int, config: ReductionConfig | None = None):
    """Run the scripted protocol; returns (trees, accuracies, scramble plans)."""
    config = config or ReductionConfig(max_level=3)
    trees: dict[str, ReductionTree] = {}
    accuracies: dict[str, float] = {}
    plans: dict[str, object] = {}
    for clip_id, _split, _verb, _label in TEST_CLIPS:
        tree = ReductionTree(clip_id, CropRect(0, 0, FRAME_W, FRAME_H))
        trees[clip_id] = tree
        accuracies[tree.root_id] = scripted_accuracy(0, ())
        for level in range(config.max_level + 1):
            selected = expand_level(tree, level, accuracies, config)
            if not selected:
                break
            for node in selected:
                accuracies[node.node_id] = scripted_accuracy(level + 1, node.corner_path)
        report = label_mircs(tree, accuracies, config.recognition_threshold)
        for mirc_id in report.mircs:
            seed = rng.derive_seed(pipeline_seed, "scramble", mirc_id)
            node, plan = attach_scrambled_variant(tree, mirc_id, FRAME_COUNT, seed)
            node.mark_tested(SCRAMBLED_ACCURACY)
            accuracies[node.node_id] = SCRAMBLED_ACCURACY
            plans[node.node_id] = plan
    return trees, accuracies, plans


def _write_frames(clip_dir: Path, seed: int) -> None:
    clip_dir.mkdir(parents=True, exist_ok=True)
    gen = rng.generator(seed)
    base = gen.integers(0, 200, size=(FRAME_H, FRAME_W, 3), dtype=np.uint8)
    for f in range(FRAME_COUNT):
        frame = base.copy()
        x = 4 + 5 * f
        frame[10:30, x : x + 12] = (250, 120 + 10 * f, 40)
        Image.fromarray(frame, "RGB").save(clip_dir / f"frame_{f:04d}.png")


def _write_masks(mask_root: Path, clip_id: str, seed: int) -> list[dict]:
    entries = []
    gen = rng.generator(seed)
    boxes = {
        "active_hand": (6, 12, 18, 20),
        "active_object": (20, 16, 16, 14),
        "contextual_objects": (44, 6, 16, 36),
    }
    for category in MASK_CATEGORIES:
        cat_dir = mask_root / clip_id / category
        cat_dir.mkdir(parents=True, exist_ok=True)
        x, y, w, h = boxes[category]
        for f in range(FRAME_COUNT):
            m = np.zeros((FRAME_H, FRAME_W), dtype=np.uint8)
            dx = int(gen.integers(0, 4))
            m[y : y + h, x + dx : x + dx + w] = 255
            Image.fromarray(m, "L").save(cat_dir / f"frame_{f:04d}.png")
        entries.append(
            {"clip_id": clip_id, "category": category, "dir": str(cat_dir.relative_to(mask_root.parent))}
        )
    return entries


def _quantized_maps(gen, frames: int) -> np.ndarray:
    # values k/256 so float64 sums are exact and partition checks close exactly
    return (gen.integers(0, 256, size=(frames, FRAME_H, FRAME_W)) / 256.0).astype(np.float32)


def _write_map_dir(map_dir: Path, maps: np.ndarray, channel: str) -> None:
    map_dir.mkdir(parents=True, exist_ok=True)
    for f in range(maps.shape[0]):
        data = struct.pack(f"<{FRAME_H * FRAME_W}f", *maps[f].ravel().tolist())
        (map_dir / f"frame_{f:04d}.f32").write_bytes(data)
    (map_dir / "meta.json").write_text(
        json.dumps(
            {"width": FRAME_W, "height": FRAME_H, "frames": maps.shape[0], "channel": channel},
            sort_keys=True,
        )
    )


def _write_maps(
    map_root: Path, clip_id: str, seed: int, scrambled: dict[str, object]
) -> tuple[list[dict], dict[str, np.ndarray]]:
    """Write full-clip channel maps plus recomputed maps for scrambled nodes."""
    entries = []
    full: dict[str, np.ndarray] = {}
    for ci, channel in enumerate(CHANNEL_FEATURES):
        gen = rng.generator(rng.derive_seed(seed, clip_id, channel))
        maps = _quantized_maps(gen, FRAME_COUNT)
        full[channel] = maps
        chan_dir = map_root / clip_id / channel
        _write_map_dir(chan_dir, maps, channel)
        entries.append(
            {"clip_id": clip_id, "channel": channel, "dir": str(chan_dir.relative_to(map_root.parent))}
        )
    for node_id, plan in scrambled.items():
        if not node_id.startswith(f"{clip_id}/"):
            continue
        order = materialize(FRAME_COUNT, plan)
        safe = node_id.replace("/", "_")
        for channel in CHANNEL_FEATURES:
            # stand-in for the externally recomputed post-shuffle maps: the
            # intact maps in scrambled frame order
            chan_dir = map_root / safe / channel
            _write_map_dir(chan_dir, full[channel][order], channel)
            entries.append(
                {
                    "node_id": node_id,
                    "channel": channel,
                    "dir": str(chan_dir.relative_to(map_root.parent)),
                }
            )
    return entries, full


def build_mini_dataset(root: str | Path, pipeline_seed: int = 7) -> Path:
    """Materialise the dataset under `root`; returns the manifest path."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    trees, accuracies, plans = simulate_trees(pipeline_seed)

    clips_meta = []
    for clip_id, split, verb, label in TEST_CLIPS:
        clips_meta.append((clip_id, split, verb, label, "test"))
    for clip_id, split, verb, label in PRACTICE_CLIPS:
        clips_meta.append((clip_id, split, verb, label, "practice"))
    for clip_id, split, verb, label in CATCH_CLIPS:
        clips_meta.append((clip_id, split, verb, label, "catch"))

    manifest_clips = []
    for clip_id, split, verb, label, role in clips_meta:
        _write_frames(root / "frames" / clip_id, rng.derive_seed(pipeline_seed, "frames", clip_id))
        manifest_clips.append(
            {
                "clip_id": clip_id,
                "split": split,
                "verb_class": verb,
                "gt_label": label,
                "frame_dir": f"frames/{clip_id}",
                "fps": 10.0,
                "width": FRAME_W,
                "height": FRAME_H,
                "role": role,
            }
        )

    mask_entries = []
    map_entries = []
    for clip_id, *_ in TEST_CLIPS:
        mask_entries += _write_masks(
            root / "masks", clip_id, rng.derive_seed(pipeline_seed, "masks", clip_id)
        )
        entries, _full = _write_maps(
            root / "maps", clip_id, rng.derive_seed(pipeline_seed, "maps"), plans
        )
        map_entries += entries

    # responses: k correct answers (the GT label itself) and quota-k wrong ones
    gt_by_clip = {c[0]: c[3] for c in clips_meta}
    response_rows = []
    for node_id in sorted(accuracies):
        clip_id = node_id.split("/")[0]
        correct_n = round(accuracies[node_id] * QUOTA)
        for i in range(QUOTA):
            text = gt_by_clip[clip_id] if i < correct_n else WRONG_LABEL
            response_rows.append(
                {
                    "participant_id": f"crowd{i:03d}",
                    "node_id": node_id,
                    "trial_kind": "main",
                    "response_time_ms": 4500,
                    "raw_text": text,
                }
            )
    responses_path = root / "responses.csv"
    with open(responses_path, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["participant_id", "node_id", "trial_kind", "response_time_ms", "raw_text"]
        )
        writer.writeheader()
        writer.writerows(response_rows)

    # model confidences: ground-truth verb dominant on even levels, a rival
    # verb dominant on odd levels, so every edge flips the verb prediction
    verb_by_clip = {c[0]: c[2] for c in clips_meta}
    conf_rows = []
    for node_id in sorted(accuracies):
        clip_id, level_part = node_id.split("/")[0], node_id.split("/")[1]
        level = int(level_part[1:])
        gt_verb = verb_by_clip[clip_id]
        rival = "take" if gt_verb != "take" else "open"
        correct = scripted_ai_correct(level, ())
        lead_conf = 0.60 - 0.02 * level
        lead = gt_verb if correct else rival
        rest = (1.0 - lead_conf) / (len(VERB_CLASSES) - 1)
        for verb in VERB_CLASSES:
            conf_rows.append(
                {
                    "node_id": node_id,
                    "verb": verb,
                    "confidence": lead_conf if verb == lead else rest,
                }
            )
    confidences_path = root / "confidences.csv"
    with open(confidences_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["node_id", "verb", "confidence"])
        writer.writeheader()
        writer.writerows(conf_rows)

    # embeddings: orthogonal unit vectors per distinct text / token
    sentences = sorted({*gt_by_clip.values(), WRONG_LABEL})
    tokens = sorted({t for s in sentences for t in s.split()})
    emb_dir = root / "embeddings"
    emb_dir.mkdir(exist_ok=True)
    for name, keys in (("sentence", sentences), ("word", tokens)):
        with open(emb_dir / f"{name}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            dim = len(keys)
            writer.writerow(["text"] + [f"dim{i}" for i in range(dim)])
            for i, key in enumerate(keys):
                vec = [0.0] * dim
                vec[i] = 1.0
                writer.writerow([key] + vec)

    with open(root / "dictionary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["word", "count"])
        for i, tok in enumerate(tokens):
            writer.writerow([tok, 100 - i])

    manifest = {
        "clips": manifest_clips,
        "masks": mask_entries,
        "maps": map_entries,
        "confidences": "confidences.csv",
        "responses": "responses.csv",
        "dictionary": "dictionary.csv",
        "embeddings": {"sentence": "embeddings/sentence.csv", "word": "embeddings/word.csv"},
    }
    manifest_path = root / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest_path
