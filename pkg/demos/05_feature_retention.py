"""
Feature retention and prediction transitions
============================================

How much of each visual feature survives a crop?  For every node we sum the
per-pixel map values inside the crop across frames and divide by the sum
over the full video.  Tracking these ratios along the edges where the verb
prediction flips separates failures driven by losing the action's core
(hand and object) from failures driven by losing scene context.
"""

import numpy as np

from mirc_lab import (
    CropRect,
    TransitionDirection,
    attach_feature_deltas,
    correlation_matrix,
    detect_transitions,
    retention,
    transition_delta_stats,
)
from mirc_lab.reduction import ReductionConfig, ReductionTree, expand_level

rng = np.random.default_rng(11)
frames, height, width = 8, 48, 64

# synthetic maps: the active object is a tight blob, context fills the right
maps = {}
blob = np.zeros((frames, height, width))
blob[:, 14:30, 18:34] = 1.0
maps["active_object"] = blob
context = np.zeros((frames, height, width))
context[:, :, 40:] = 1.0
maps["contextual_objects"] = context
for channel in ("flicker", "motion"):
    maps[channel] = rng.random((frames, height, width))

print("retention of each feature under a centred half-frame crop:")
crop = CropRect(16, 12, 32, 24)
for feature, m in maps.items():
    r = retention(m, crop, feature=feature)
    print(f"  {feature:20s} p = {r.p:.3f}")

# a tree whose predictions flip between levels
tree = ReductionTree("demo", CropRect(0, 0, width, height))
accs = {tree.root_id: 0.9}
expand_level(tree, 0, accs, ReductionConfig(max_level=1))
correct = {tree.root_id: True}
ratios = {tree.root_id: {f: retention(maps[f], tree.root.rect, feature=f) for f in maps}}
for i, node in enumerate(tree.at_level(1)):
    node.mark_tested(0.6 if i % 2 else 0.3)
    correct[node.node_id] = bool(i % 2)
    ratios[node.node_id] = {f: retention(maps[f], node.rect, feature=f) for f in maps}

transitions = detect_transitions(tree, correct, classifier="ai")
attach_feature_deltas(transitions, ratios)
print(f"\n{len(transitions)} prediction flips found")
stats = transition_delta_stats(transitions, TransitionDirection.FAILURE)
print("mean retention change on failures (child minus parent):")
for feature in maps:
    s = stats[feature]
    if s.mean_delta is not None:
        print(f"  {feature:20s} {s.mean_delta:+.3f} over {s.n} flips")

names, matrix = correlation_matrix(transitions, TransitionDirection.FAILURE, list(maps))
print("\nfeature-change correlations across failures:")
print("  " + "  ".join(f"{n[:10]:>10s}" for n in names))
for name, row in zip(names, matrix):
    cells = "  ".join("       nan" if v != v else f"{v:10.2f}" for v in row)
    print(f"  {name[:10]:>10s} {cells}")
