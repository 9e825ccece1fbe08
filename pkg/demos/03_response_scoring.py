"""
Free-text response scoring
==========================

A raw participant answer is cleaned (case, punctuation, articles, generic
subjects, spelling), then compared with the ground-truth label through
three cosine similarities: the whole sentence, the verb terms, and the
object terms, blended into one score whose threshold decides correctness.

The demo uses tiny hand-made embedding tables; production tables come from
sentence and word embedding models, exported to CSV.
"""

import numpy as np

from mirc_lab import EmbeddingTable, ScoringConfig, SpellCorrector, node_accuracy, score_response

config = ScoringConfig(
    penalty_constant=0.3,
    bonus_constant=0.5,
    correctness_threshold=0.9,
    verb_lexicon=frozenset({"close", "shut", "open"}),
)
corrector = SpellCorrector({"close": 120, "fridge": 80, "shut": 40, "door": 60}, 2)

# hand-made vectors: "shut" close to "close", "door" unrelated to "fridge"
sentence_table = EmbeddingTable(
    {
        "close fridge": np.array([1.0, 0.0, 0.1]),
        "shut fridge": np.array([0.9, 0.1, 0.1]),
        "close door": np.array([0.5, 0.6, 0.0]),
    },
    name="sentence",
)
word_table = EmbeddingTable(
    {
        "close": np.array([1.0, 0.0]),
        "shut": np.array([0.95, 0.15]),
        "fridge": np.array([0.0, 1.0]),
        "door": np.array([0.4, 0.8]),
    },
    name="word",
)

answers = [
    "The man closes the fridge.",   # cleans to "closes fridge" -> missing embedding
    "shut fridge",
    "clsoe fridge",                 # spell-corrected to "close fridge"
    "close door",
]

scored = []
for i, raw in enumerate(answers):
    try:
        s = score_response(f"p{i}", "clip/L2/ULUL", raw, "close fridge",
                           sentence_table, word_table, config, corrector)
    except Exception as exc:
        print(f"{raw!r}: excluded ({exc})")
        continue
    scored.append(s)
    print(f"{raw!r} -> {s.cleaned_text!r}  CS={s.cs:.2f} CS_A={s.cs_a:.2f} "
          f"CS_O={s.cs_o:.2f} S_sim={s.s_sim:.3f} correct={s.correct}")

print(f"\nnode accuracy over scored responses: {node_accuracy(scored):.2f}")
