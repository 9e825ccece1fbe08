"""
Hierarchical corner-crop reduction
==================================

Grow a reduction tree for one clip: every node recognised by at least half
of the participants spawns four corner-anchored children, and the overlap
rules prune candidates that previous failures already condemn.  When the
frontier dies out, the minimal recognisable crops (MIRCs) fall out of the
labelling pass.
"""

from mirc_lab import CropRect, ReductionConfig, ReductionTree, expand_level, label_mircs

config = ReductionConfig(scale_factor=0.8, max_level=3)
tree = ReductionTree("demo_clip", CropRect(0, 0, 456, 256))

# scripted recognition accuracies: the upper-left chain stays recognisable
# down to level 2, everything else fails
def accuracy(node):
    if node.level == 0:
        return 0.90
    chain = all(c.value == "UL" for c in node.corner_path)
    if node.level < 3 and chain:
        return 0.65
    return 0.30


accuracies = {tree.root_id: accuracy(tree.root)}
for level in range(config.max_level + 1):
    selected = expand_level(tree, level, accuracies, config)
    if not selected:
        break
    for node in selected:
        accuracies[node.node_id] = accuracy(node)
    print(f"level {level + 1}: testing {len(selected)} quadrants")

report = label_mircs(tree, accuracies, threshold=config.recognition_threshold)
print(f"\nMIRCs: {report.mircs}")
print(f"sub-MIRCs: {report.sub_mircs}")

mirc = tree.nodes[report.mircs[0]]
print(f"\nthe minimal recognisable crop is {mirc.rect.to_tuple()} "
      f"({mirc.rect.area / tree.root.rect.area:.1%} of the full frame)")
