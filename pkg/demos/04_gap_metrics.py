"""
Recognition gap and average reduction rate
==========================================

Both metrics aggregate parent-child pairs.  The human recognition gap is
the per-class mean accuracy drop from a MIRC to its sub-MIRCs.  The model
is evaluated at a matched operating point: for each class the confidence
threshold is placed where the fraction of MIRCs at or above it equals the
class's mean human MIRC accuracy, and the gap is averaged over qualifying
pairs only.  The average reduction rate conditions on degrading pairs.
"""

import numpy as np

from mirc_lab import (
    MeasureKind,
    PairKind,
    ai_recognition_gap,
    gap_statistics,
    human_recognition_gap,
    make_pair,
    mirc_operating_points,
    reduction_rate,
)

rng = np.random.default_rng(3)
pairs = []
for i in range(60):
    verb = ("close", "pour", "wash")[i % 3]
    human_mirc = float(rng.uniform(0.5, 0.9))
    human_sub = float(rng.uniform(0.05, 0.45))
    conf_mirc = float(rng.uniform(0.1, 0.9))
    conf_sub = float(np.clip(conf_mirc + rng.normal(0, 0.08), 0, 1))
    common = dict(level=3, pair_kind=PairKind.MIRC_SUB_MIRC, verb_class=verb, clip_id=f"v{i}")
    pairs.append(make_pair(f"m{i}", f"s{i}", human_mirc, human_sub,
                           measure_kind=MeasureKind.HUMAN_ACCURACY, **common))
    pairs.append(make_pair(f"m{i}", f"s{i}", conf_mirc, conf_sub,
                           measure_kind=MeasureKind.MODEL_CONFIDENCE, **common))

print("human recognition gap per class (percent):")
for cls, g in human_recognition_gap(pairs).items():
    print(f"  {cls:6s} {100 * g.mean:+6.2f}  (std {100 * g.std:.2f}, n={g.n})")

points = mirc_operating_points(pairs)
print("\nmatched operating points and model gaps:")
for cls, gap in ai_recognition_gap(pairs, points).items():
    op = points[cls]
    shown = "undefined" if gap is None else f"{100 * gap.mean:+6.2f}"
    print(f"  {cls:6s} tl={op.tl:.3f} (target {op.target_fraction:.2f}) gap {shown}")

human_deltas = [p.delta for p in pairs if p.measure_kind == MeasureKind.HUMAN_ACCURACY]
print("\nhuman gap statistics:", gap_statistics(human_deltas).to_dict())

report = reduction_rate(pairs, restrict=PairKind.MIRC_SUB_MIRC)
print(f"\naverage reduction rate over degrading pairs: {report.arr:.3f} "
      f"({report.positive_count}/{report.pair_count} pairs degrade)")
print("delta histogram (0.1 bins over [-1, 1]):")
for i, count in enumerate(report.histogram):
    if count:
        lo = -1.0 + 0.1 * i
        print(f"  [{lo:+.1f}, {lo + 0.1:+.1f}): {'#' * count}")
