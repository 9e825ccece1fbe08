"""
Live experiment protocol
========================

The experiment service walks participants through a fixed seeded trial
order: five practice trials, then one crop per source video with two catch
trials spliced in.  Failing both catches excludes the participant.  Once
every active node meets its response quota, advancing a clip scores the
nodes, expands the next level, and finally labels MIRCs and enqueues their
scrambled variants.

This demo drives the study object directly; `mirc-lab serve` exposes the
same protocol over HTTP at /v1 for the browser frontend.
"""

import tempfile
from pathlib import Path

from mirc_lab.dataset import load_manifest
from mirc_lab.minidata import TEST_CLIPS, PRACTICE_CLIPS, CATCH_CLIPS, WRONG_LABEL, build_mini_dataset
from mirc_lab.service import Study, StudyConfig

workdir = Path(tempfile.mkdtemp(prefix="mirc-demo-"))
manifest = load_manifest(build_mini_dataset(workdir / "data", 7))
config = StudyConfig.from_dict(
    {
        "response_quota": 3,
        "seed": 5,
        "scoring": {"penalty_constant": 0.3, "bonus_constant": 0.3, "correctness_threshold": 0.5},
        "reduction": {"max_level": 1},
    }
)
study = Study("demo", manifest, config, workdir / "study")
labels = {c[0]: c[3] for c in TEST_CLIPS + PRACTICE_CLIPS + CATCH_CLIPS}

def run_participant(answer_fn):
    session = study.create_session(None)
    while not session.done and not session.excluded:
        trial = session.current()
        study.submit(session, trial.node_id, answer_fn(trial), 4500)
    return session

# two diligent participants answer everything correctly
for _ in range(2):
    s = run_participant(lambda t: labels[t.node_id.split("/")[0]])
    print(f"{s.participant_id}: {s.cursor}/{len(s.trials)} trials, excluded={s.excluded}")

# a careless participant misses both catch trials and is excluded; their
# main responses never reach node accuracies, so a replacement is recruited
def careless(trial):
    if trial.kind.value == "catch":
        return WRONG_LABEL
    return labels[trial.node_id.split("/")[0]]

s = run_participant(careless)
print(f"{s.participant_id}: excluded={s.excluded} after {s.cursor} trials")
s = run_participant(lambda t: labels[t.node_id.split("/")[0]])
print(f"{s.participant_id} (replacement): {s.cursor}/{len(s.trials)} trials")

print("\nadvancing clipA once its root met the quota:")
result = study.advance("clipA")
print(f"  activated {len(result['activated'])} level-1 quadrants")
for nid in result["activated"]:
    print(f"    {nid}")

progress = study.progress()
print(f"\nevent log at {study.log.path} holds {study.log.seq} events")
print(f"clipA now at level {progress['clips']['clipA']['current_level']}")
