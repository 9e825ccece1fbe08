"""Builds a protocol-only dataset for the frontend integration test:
36 test clips (18 easy / 18 hard), 5 practice, 2 catch, tiny frames, and
one-hot embedding tables covering every label. Masks, maps, confidences,
and crowd responses are not needed to drive the live protocol.

Usage: python3 make_protocol_data.py <output-dir>
"""

import csv
import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

VERBS = [
    "close", "cut", "hang", "open", "pour", "put",
    "remove", "take", "turn-off", "turn-on", "wash", "insert",
]
OBJECTS = ["fridge", "bread", "towel", "door", "water", "plate", "lid", "cup", "pan"]
FRAME_W, FRAME_H, FRAMES = 32, 24, 6


def write_frames(root: Path, clip_id: str, seed: int) -> None:
    gen = np.random.default_rng(seed)
    d = root / "frames" / clip_id
    d.mkdir(parents=True, exist_ok=True)
    base = gen.integers(0, 255, size=(FRAME_H, FRAME_W, 3), dtype=np.uint8)
    for f in range(FRAMES):
        frame = np.roll(base, f * 3, axis=1)
        Image.fromarray(frame, "RGB").save(d / f"frame_{f:03d}.png")


def main(out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    clips = []
    labels = []

    def add(clip_id, split, verb, obj, role):
        write_frames(out, clip_id, abs(hash(clip_id)) % (2**31))
        labels.append(f"{verb} {obj}")
        clips.append(
            {
                "clip_id": clip_id,
                "split": split,
                "verb_class": verb,
                "gt_label": f"{verb} {obj}",
                "frame_dir": f"frames/{clip_id}",
                "fps": 12.0,
                "width": FRAME_W,
                "height": FRAME_H,
                "role": role,
            }
        )

    for i in range(36):
        verb = VERBS[i % len(VERBS)]
        obj = OBJECTS[i % len(OBJECTS)]
        add(f"t{i:02d}", "easy" if i < 18 else "hard", verb, obj, "test")
    for i in range(5):
        add(f"pr{i}", "easy", VERBS[i], OBJECTS[(i + 3) % len(OBJECTS)], "practice")
    for i in range(2):
        add(f"ca{i}", "easy", VERBS[i + 5], OBJECTS[(i + 6) % len(OBJECTS)], "catch")

    sentences = sorted(set(labels) | {"dance floor"})
    tokens = sorted({t for s in sentences for t in s.split()})
    emb = out / "embeddings"
    emb.mkdir(exist_ok=True)
    for name, keys in (("sentence", sentences), ("word", tokens)):
        with open(emb / f"{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["text"] + [f"dim{i}" for i in range(len(keys))])
            for i, key in enumerate(keys):
                vec = [0.0] * len(keys)
                vec[i] = 1.0
                w.writerow([key] + vec)

    with open(out / "dictionary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["word", "count"])
        for i, tok in enumerate(tokens):
            w.writerow([tok, 50 + i])

    manifest = {
        "clips": clips,
        "dictionary": "dictionary.csv",
        "embeddings": {"sentence": "embeddings/sentence.csv", "word": "embeddings/word.csv"},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    (out / "labels.json").write_text(
        json.dumps({c["clip_id"]: c["gt_label"] for c in clips}, indent=2, sort_keys=True)
    )
    print(out / "manifest.json")


if __name__ == "__main__":
    main(Path(sys.argv[1]))
