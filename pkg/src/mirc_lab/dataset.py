"""Dataset model and ingestion.

Everything the analyses consume is loaded here: the manifest describing
clips and where their artifacts live, per-frame segmentation masks,
conspicuity channel maps, model confidence tables, participant response
tables, and text embedding tables.  Loading is strict about integrity
(duplicate ids, malformed rows, dimension mismatches) but records missing
artifact paths as unresolved references instead of failing, since most
workflows only need a subset.

The loaded model is immutable in practice: nothing here mutates after load,
so it is safe to share across worker processes or threads.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping

import numpy as np

from .features import CHANNEL_FEATURES
from .reduction import MircRole, ReductionTree

VERB_CLASSES = (
    "close",
    "cut",
    "hang",
    "insert",
    "open",
    "peel",
    "pour",
    "put",
    "remove",
    "serve",
    "take",
    "turn-off",
    "turn-on",
    "wash",
)

MASK_CATEGORIES = ("active_hand", "active_object", "contextual_objects")


class Split(str, Enum):
    EASY = "easy"
    HARD = "hard"


class TrialKind(str, Enum):
    PRACTICE = "practice"
    CATCH = "catch"
    MAIN = "main"


class ClipRole(str, Enum):
    TEST = "test"
    PRACTICE = "practice"
    CATCH = "catch"


class ManifestParseError(ValueError):
    pass


class ManifestIntegrityError(ValueError):
    pass


@dataclass(frozen=True)
class Clip:
    clip_id: str
    split: Split
    verb_class: str
    gt_label: str
    frame_dir: Path
    fps: float
    width: int
    height: int
    role: ClipRole = ClipRole.TEST
    frames: tuple[str, ...] = ()

    @property
    def frame_count(self) -> int:
        return len(self.frames)


@dataclass
class ResponseRecord:
    participant_id: str
    node_id: str
    trial_kind: TrialKind
    response_time_ms: int
    raw_text: str

    def __post_init__(self):
        if not self.raw_text.strip():
            raise ValueError("raw_text must be non-empty")


@dataclass
class ConfidenceRecord:
    """Per-verb softmax vector for one node plus the ground-truth aggregate."""

    node_id: str
    confidences: dict[str, float]
    gt_verb_confidence: float

    @classmethod
    def build(
        cls, node_id: str, confidences: Mapping[str, float], gt_verb: str
    ) -> "ConfidenceRecord":
        total = sum(confidences.values())
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"{node_id}: confidences sum to {total}, expected 1")
        for verb, c in confidences.items():
            if not 0.0 <= c <= 1.0:
                raise ValueError(f"{node_id}: confidence {c} for {verb} outside [0, 1]")
        gt = sum(c for verb, c in confidences.items() if verb == gt_verb)
        return cls(node_id=node_id, confidences=dict(confidences), gt_verb_confidence=gt)

    def predicted_verb(self) -> str:
        best = max(self.confidences.values())
        return min(v for v, c in self.confidences.items() if c == best)


class EmbeddingTable:
    """Fixed-dimension text -> vector lookup."""

    def __init__(self, vectors: Mapping[str, np.ndarray], name: str = ""):
        if not vectors:
            raise ValueError("embedding table must not be empty")
        self.name = name
        self.vectors: dict[str, np.ndarray] = {}
        dim = None
        for text, vec in vectors.items():
            arr = np.asarray(vec, dtype=np.float64)
            if arr.ndim != 1 or arr.size == 0:
                raise ValueError(f"embedding for {text!r} must be a non-empty vector")
            if dim is None:
                dim = arr.size
            elif arr.size != dim:
                raise ValueError(
                    f"embedding for {text!r} has dim {arr.size}, table uses {dim}"
                )
            if not np.any(arr):
                raise ValueError(f"embedding for {text!r} is all zeros")
            self.vectors[text] = arr
        self.dim = dim

    def __contains__(self, text: str) -> bool:
        return text in self.vectors

    def lookup(self, text: str) -> np.ndarray:
        from .scoring import MissingEmbeddingError

        try:
            return self.vectors[text]
        except KeyError:
            raise MissingEmbeddingError(f"no {self.name or 'embedding'} entry for {text!r}")

    @classmethod
    def from_csv(cls, path: Path, name: str = "") -> "EmbeddingTable":
        vectors = {}
        with open(path, newline="") as fh:
            reader = csv.reader(_skip_comments(fh))
            header = next(reader)
            if header[0] != "text":
                raise ManifestParseError(f"{path}: first embedding column must be 'text'")
            for row in reader:
                vectors[row[0]] = np.array([float(v) for v in row[1:]])
        return cls(vectors, name=name or Path(path).stem)


@dataclass
class MaskSet:
    """Binary per-frame maps for the object categories of one clip.

    Background is derived on load as everything no segmented category
    covers; it is never stored on disk.
    """

    clip_id: str
    masks: dict[str, np.ndarray]

    def __post_init__(self):
        shapes = {m.shape for m in self.masks.values()}
        if len(shapes) > 1:
            raise ValueError(f"{self.clip_id}: mask shapes differ: {shapes}")
        for cat, m in self.masks.items():
            if not np.isin(m, (0, 1)).all():
                raise ValueError(f"{self.clip_id}/{cat}: mask values must be 0/1")

    @classmethod
    def with_background(cls, clip_id: str, masks: Mapping[str, np.ndarray]) -> "MaskSet":
        stored = {c: np.asarray(masks[c], dtype=np.uint8) for c in MASK_CATEGORIES}
        union = np.zeros_like(next(iter(stored.values())))
        for m in stored.values():
            union |= m
        stored["background"] = (union == 0).astype(np.uint8)
        return cls(clip_id=clip_id, masks=stored)


@dataclass
class ConspicuityMapSet:
    """Scalar [0, 1] per-frame maps for each mid-level channel of one clip."""

    clip_id: str
    maps: dict[str, np.ndarray]

    def __post_init__(self):
        for chan, m in self.maps.items():
            if m.min() < 0.0 or m.max() > 1.0:
                raise ValueError(f"{self.clip_id}/{chan}: values outside [0, 1]")


@dataclass
class DatasetManifest:
    path: Path
    base_dir: Path
    clips: dict[str, Clip]
    verb_classes: tuple[str, ...]
    mask_dirs: dict[tuple[str, str], Path] = field(default_factory=dict)
    map_dirs: dict[tuple[str, str], Path] = field(default_factory=dict)
    confidences_path: Path | None = None
    responses_path: Path | None = None
    sentence_embeddings_path: Path | None = None
    word_embeddings_path: Path | None = None
    dictionary_path: Path | None = None
    unresolved: list[str] = field(default_factory=list)

    def clips_by_role(self, role: ClipRole) -> list[Clip]:
        return sorted(
            (c for c in self.clips.values() if c.role == role), key=lambda c: c.clip_id
        )

    def clips_by_split(self, split: Split) -> list[Clip]:
        return sorted(
            (c for c in self.clips.values() if c.split == split and c.role == ClipRole.TEST),
            key=lambda c: c.clip_id,
        )


def _skip_comments(fh):
    for line in fh:
        if not line.startswith("#"):
            yield line


def _require(entry: Mapping, key: str, where: str):
    if key not in entry:
        raise ManifestParseError(f"{where}: missing required field {key!r}")
    return entry[key]


def load_manifest(path: str | Path) -> DatasetManifest:
    """Load and validate a dataset manifest.

    All referenced artifact locations are recorded; paths that do not exist
    land in `unresolved` (reported, never silently dropped) so callers can
    decide which artifacts they actually need.
    """
    path = Path(path)
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ManifestParseError(f"{path}: line {exc.lineno} col {exc.colno}: {exc.msg}")
    base = path.parent
    verb_classes = tuple(doc.get("verb_classes", VERB_CLASSES))

    manifest = DatasetManifest(
        path=path, base_dir=base, clips={}, verb_classes=verb_classes
    )

    for i, entry in enumerate(doc.get("clips", [])):
        where = f"{path}: clips[{i}]"
        clip_id = _require(entry, "clip_id", where)
        if clip_id in manifest.clips:
            raise ManifestIntegrityError(f"{where}: duplicate clip_id {clip_id!r}")
        if "/" in clip_id:
            raise ManifestIntegrityError(
                f"{where}: clip_id {clip_id!r} may not contain '/' (reserved for node ids)"
            )
        verb = _require(entry, "verb_class", where)
        if verb not in verb_classes:
            raise ManifestIntegrityError(
                f"{where}: verb_class {verb!r} not in declared vocabulary"
            )
        frame_dir = base / _require(entry, "frame_dir", where)
        frames: tuple[str, ...] = ()
        if frame_dir.is_dir():
            frames = tuple(
                sorted(p.name for p in frame_dir.iterdir() if p.suffix in (".png", ".jpg"))
            )
            if not frames:
                manifest.unresolved.append(f"clip {clip_id}: no frames in {frame_dir}")
        else:
            manifest.unresolved.append(f"clip {clip_id}: frame_dir {frame_dir} missing")
        try:
            split = Split(_require(entry, "split", where).lower())
        except ValueError:
            raise ManifestParseError(f"{where}: split must be Easy or Hard")
        manifest.clips[clip_id] = Clip(
            clip_id=clip_id,
            split=split,
            verb_class=verb,
            gt_label=_require(entry, "gt_label", where),
            frame_dir=frame_dir,
            fps=float(_require(entry, "fps", where)),
            width=int(_require(entry, "width", where)),
            height=int(_require(entry, "height", where)),
            role=ClipRole(entry.get("role", "test")),
            frames=frames,
        )

    for i, entry in enumerate(doc.get("masks", [])):
        where = f"{path}: masks[{i}]"
        clip_id = _require(entry, "clip_id", where)
        category = _require(entry, "category", where)
        if category not in MASK_CATEGORIES:
            raise ManifestParseError(f"{where}: unknown mask category {category!r}")
        mask_dir = base / _require(entry, "dir", where)
        manifest.mask_dirs[(clip_id, category)] = mask_dir
        if not mask_dir.is_dir():
            manifest.unresolved.append(f"mask {clip_id}/{category}: {mask_dir} missing")

    for i, entry in enumerate(doc.get("maps", [])):
        where = f"{path}: maps[{i}]"
        owner = entry.get("node_id") or _require(entry, "clip_id", where)
        channel = _require(entry, "channel", where)
        if channel not in CHANNEL_FEATURES:
            raise ManifestParseError(f"{where}: unknown channel {channel!r}")
        map_dir = base / _require(entry, "dir", where)
        manifest.map_dirs[(owner, channel)] = map_dir
        if not map_dir.is_dir():
            manifest.unresolved.append(f"map {owner}/{channel}: {map_dir} missing")

    def record_path(key: str) -> Path | None:
        if key not in doc:
            return None
        p = base / doc[key]
        if not p.exists():
            manifest.unresolved.append(f"{key}: {p} missing")
        return p

    manifest.confidences_path = record_path("confidences")
    manifest.responses_path = record_path("responses")
    manifest.dictionary_path = record_path("dictionary")
    emb = doc.get("embeddings", {})
    if "sentence" in emb:
        p = base / emb["sentence"]
        manifest.sentence_embeddings_path = p
        if not p.exists():
            manifest.unresolved.append(f"embeddings.sentence: {p} missing")
    if "word" in emb:
        p = base / emb["word"]
        manifest.word_embeddings_path = p
        if not p.exists():
            manifest.unresolved.append(f"embeddings.word: {p} missing")
    return manifest


def load_mask_set(manifest: DatasetManifest, clip_id: str) -> MaskSet:
    from PIL import Image

    clip = manifest.clips[clip_id]
    masks = {}
    for category in MASK_CATEGORIES:
        mask_dir = manifest.mask_dirs.get((clip_id, category))
        if mask_dir is None:
            raise ManifestIntegrityError(f"no {category} masks declared for {clip_id}")
        frames = []
        for name in sorted(p.name for p in mask_dir.iterdir() if p.suffix == ".png"):
            img = np.asarray(Image.open(mask_dir / name).convert("L"))
            if img.shape != (clip.height, clip.width):
                raise ManifestIntegrityError(
                    f"{clip_id}/{category}/{name}: {img.shape} != clip frame size"
                )
            frames.append((img >= 128).astype(np.uint8))
        masks[category] = np.stack(frames)
    return MaskSet.with_background(clip_id, masks)


def _read_float_frames(fp: Path, width: int, height: int) -> np.ndarray:
    data = fp.read_bytes()
    count = len(data) // 4
    if count * 4 != len(data) or count % (width * height) != 0:
        raise ManifestIntegrityError(f"{fp}: not a whole number of {width}x{height} frames")
    values = struct.unpack(f"<{count}f", data)
    return np.array(values, dtype=np.float32).reshape(-1, height, width)


def load_conspicuity_set(
    manifest: DatasetManifest, owner_id: str, frame_size: tuple[int, int]
) -> ConspicuityMapSet:
    """Load the seven channel maps for a clip or a scrambled node id."""
    width, height = frame_size
    maps = {}
    for channel in CHANNEL_FEATURES:
        map_dir = manifest.map_dirs.get((owner_id, channel))
        if map_dir is None:
            raise ManifestIntegrityError(f"no {channel} maps declared for {owner_id}")
        meta = json.loads((map_dir / "meta.json").read_text())
        if (meta["width"], meta["height"], meta["channel"]) != (width, height, channel):
            raise ManifestIntegrityError(f"{map_dir}/meta.json does not match {owner_id}")
        frames = [
            _read_float_frames(map_dir / name, width, height)
            for name in sorted(p.name for p in map_dir.iterdir() if p.suffix == ".f32")
        ]
        stacked = np.concatenate(frames)
        if stacked.shape[0] != meta["frames"]:
            raise ManifestIntegrityError(
                f"{map_dir}: {stacked.shape[0]} frames on disk, sidecar says {meta['frames']}"
            )
        maps[channel] = stacked
    return ConspicuityMapSet(clip_id=owner_id, maps=maps)


def load_responses(path: Path) -> list[ResponseRecord]:
    records = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(_skip_comments(fh)):
            records.append(
                ResponseRecord(
                    participant_id=row["participant_id"],
                    node_id=row["node_id"],
                    trial_kind=TrialKind(row["trial_kind"]),
                    response_time_ms=int(row["response_time_ms"]),
                    raw_text=row["raw_text"],
                )
            )
    return records


def load_confidences(
    path: Path, gt_verb_for: Mapping[str, str]
) -> dict[str, ConfidenceRecord]:
    """Read the node_id,verb,confidence table into per-node records.

    gt_verb_for maps node ids to their clip's ground-truth verb so the
    aggregate ground-truth confidence can be computed per node.
    """
    rows: dict[str, dict[str, float]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(_skip_comments(fh)):
            rows.setdefault(row["node_id"], {})[row["verb"]] = float(row["confidence"])
    out = {}
    for node_id, confs in rows.items():
        if node_id not in gt_verb_for:
            raise ManifestIntegrityError(f"confidences for unknown node {node_id}")
        out[node_id] = ConfidenceRecord.build(node_id, confs, gt_verb_for[node_id])
    return out


def load_dictionary(path: Path) -> dict[str, int]:
    freqs = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(_skip_comments(fh)):
            freqs[row["word"]] = int(row["count"])
    return freqs


@dataclass
class SplitSummary:
    videos: int = 0
    samples: int = 0
    mircs: int = 0
    spatial_sub_mircs: int = 0
    spatiotemporal_tested: int = 0
    spatiotemporal_unrecognisable: int = 0
    per_level_tested: dict[int, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "videos": self.videos,
            "samples": self.samples,
            "mircs": self.mircs,
            "spatial_sub_mircs": self.spatial_sub_mircs,
            "spatiotemporal_tested": self.spatiotemporal_tested,
            "spatiotemporal_unrecognisable": self.spatiotemporal_unrecognisable,
            "per_level_tested": {str(k): v for k, v in sorted(self.per_level_tested.items())},
        }


@dataclass
class DatasetSummary:
    splits: dict[str, SplitSummary]
    spatiotemporal_tested_total: int
    spatiotemporal_unrecognisable_total: int
    unrecognisable_percent: float
    spatiotemporal_recognised_total: int

    def to_dict(self) -> dict:
        return {
            "splits": {k: v.to_dict() for k, v in sorted(self.splits.items())},
            "spatiotemporal_tested_total": self.spatiotemporal_tested_total,
            "spatiotemporal_unrecognisable_total": self.spatiotemporal_unrecognisable_total,
            "unrecognisable_percent": self.unrecognisable_percent,
            "spatiotemporal_recognised_total": self.spatiotemporal_recognised_total,
        }


def summarize(
    manifest: DatasetManifest,
    trees: Mapping[str, ReductionTree],
    threshold: float = 0.5,
) -> DatasetSummary:
    """Tally labelled trees per split: sample, MIRC, and sub-MIRC counts.

    Counts are exact tallies of node roles and statuses, never inferred from
    tree shape (a MIRC does not have to carry four tested children).
    Scrambled nodes count toward the spatiotemporal column; the
    unrecognisable subset is the conventional value in parentheses.
    """
    splits = {s.value: SplitSummary() for s in Split}
    for split in Split:
        splits[split.value].videos = len(manifest.clips_by_split(split))
    for clip_id, tree in sorted(trees.items()):
        clip = manifest.clips.get(clip_id)
        if clip is None:
            raise ManifestIntegrityError(f"tree for unknown clip {clip_id}")
        s = splits[clip.split.value]
        s.samples += len(tree.nodes)
        for n in tree.nodes.values():
            if n.is_scrambled:
                if n.is_tested:
                    s.spatiotemporal_tested += 1
                    if n.human_accuracy < threshold:
                        s.spatiotemporal_unrecognisable += 1
                continue
            if n.is_tested:
                s.per_level_tested[n.level] = s.per_level_tested.get(n.level, 0) + 1
            if n.mirc_role == MircRole.MIRC:
                s.mircs += 1
            elif n.mirc_role == MircRole.SUB_MIRC:
                s.spatial_sub_mircs += 1
    tested = sum(s.spatiotemporal_tested for s in splits.values())
    unrec = sum(s.spatiotemporal_unrecognisable for s in splits.values())
    return DatasetSummary(
        splits=splits,
        spatiotemporal_tested_total=tested,
        spatiotemporal_unrecognisable_total=unrec,
        unrecognisable_percent=round(100.0 * unrec / tested, 2) if tested else 0.0,
        spatiotemporal_recognised_total=tested - unrec,
    )
