"""Free-text response scoring.

Raw participant answers go through a cleaning pass (case folding,
punctuation stripping, article and generic-subject removal, dictionary
spell correction), then are compared against the ground-truth action label
with a blend of three cosine similarities: whole-sentence, verb-term and
object-term.  The blended score decides correctness; per-node recognition
accuracy is the fraction of correct responses.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

DEFAULT_ARTICLES = frozenset({"a", "an", "the"})
DEFAULT_GENERIC_SUBJECTS = frozenset(
    {
        "man",
        "woman",
        "person",
        "people",
        "guy",
        "lady",
        "boy",
        "girl",
        "someone",
        "somebody",
        "he",
        "she",
        "they",
        "i",
        "we",
        "you",
    }
)

# word tokens, lowercase alphanumerics with internal hyphens kept intact
_TOKEN_RE = re.compile(r"[a-z0-9]+(?:-[a-z0-9]+)*")


class EmptyAfterCleaningError(ValueError):
    """Nothing left of the response once cleaning removed every token."""


class MissingEmbeddingError(KeyError):
    """A required text has no entry in the embedding table."""


class UndefinedAccuracyError(ValueError):
    pass


@dataclass
class ScoringConfig:
    penalty_constant: float = 0.0
    bonus_constant: float = 0.0
    correctness_threshold: float = 0.5
    article_list: frozenset[str] = DEFAULT_ARTICLES
    generic_subject_list: frozenset[str] = DEFAULT_GENERIC_SUBJECTS
    spell_max_edit_distance: int = 2
    verb_lexicon: frozenset[str] = frozenset()
    max_content_words: int = 3

    def __post_init__(self):
        if self.penalty_constant < 0 or self.bonus_constant < 0:
            raise ValueError("penalty and bonus constants must be >= 0")
        lo = -1.0 - self.penalty_constant**2
        hi = 1.0 + self.bonus_constant**2
        if not lo <= self.correctness_threshold <= hi:
            raise ValueError(
                f"correctness_threshold {self.correctness_threshold} outside "
                f"achievable score range [{lo}, {hi}]"
            )
        if self.spell_max_edit_distance < 0:
            raise ValueError("spell_max_edit_distance must be >= 0")

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScoringConfig":
        kwargs = dict(d)
        for key in ("article_list", "generic_subject_list", "verb_lexicon"):
            if key in kwargs:
                kwargs[key] = frozenset(kwargs[key])
        return cls(**kwargs)


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def levenshtein(a: str, b: str) -> int:
    """Plain edit distance (insert / delete / substitute)."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def _deletes_up_to(word: str, depth: int) -> set[str]:
    out = {word}
    frontier = {word}
    for _ in range(depth):
        nxt = set()
        for w in frontier:
            for i in range(len(w)):
                nxt.add(w[:i] + w[i + 1 :])
        nxt -= out
        out |= nxt
        frontier = nxt
    return out


class SpellCorrector:
    """Symmetric-delete dictionary lookup.

    Precomputes every deletion of every dictionary word up to the edit
    distance bound; a query token's own deletions then index straight into
    candidate words, which are verified with a true edit-distance check.
    Candidates are ranked by distance, then descending corpus frequency,
    then lexicographically, so correction is deterministic.
    """

    def __init__(self, frequencies: Mapping[str, int], max_edit_distance: int = 2):
        if not frequencies:
            raise ValueError("dictionary must not be empty")
        self.frequencies = dict(frequencies)
        self.max_edit_distance = max_edit_distance
        self._index: dict[str, list[str]] = {}
        for word in self.frequencies:
            for key in _deletes_up_to(word, max_edit_distance):
                self._index.setdefault(key, []).append(word)

    def correct(self, token: str) -> str:
        if token in self.frequencies:
            return token
        candidates: set[str] = set()
        for key in _deletes_up_to(token, self.max_edit_distance):
            candidates.update(self._index.get(key, ()))
        best: tuple[int, int, str] | None = None
        for word in candidates:
            dist = levenshtein(token, word)
            if dist > self.max_edit_distance:
                continue
            rank = (dist, -self.frequencies[word], word)
            if best is None or rank < best:
                best = rank
        return best[2] if best is not None else token


@dataclass
class CleaningTrace:
    removed: list[str] = field(default_factory=list)
    corrections: list[tuple[str, str]] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)


def clean(
    raw_text: str,
    config: ScoringConfig,
    corrector: SpellCorrector | None = None,
) -> tuple[str, CleaningTrace]:
    """Normalise a raw response to its content words.

    Lowercases, strips punctuation, drops articles and generic subjects,
    spell-corrects what is left, and flags (never truncates) responses with
    more than max_content_words content words.  Raises EmptyAfterCleaningError
    when nothing survives.
    """
    if not raw_text.strip():
        raise ValueError("raw_text must be non-empty")
    trace = CleaningTrace()
    stop = config.article_list | config.generic_subject_list

    tokens = []
    for tok in tokenize(raw_text):
        if tok in stop:
            trace.removed.append(tok)
        else:
            tokens.append(tok)

    if corrector is not None:
        corrected = []
        for tok in tokens:
            fixed = corrector.correct(tok)
            if fixed != tok:
                trace.corrections.append((tok, fixed))
            # a correction may land on a stopword; drop it for idempotence
            if fixed in stop:
                trace.removed.append(fixed)
            else:
                corrected.append(fixed)
        tokens = corrected

    if not tokens:
        raise EmptyAfterCleaningError(f"nothing left of {raw_text!r} after cleaning")
    if len(tokens) > config.max_content_words:
        trace.flags.append("needs_manual_review")
    return " ".join(tokens), trace


def split_terms(
    tokens: Sequence[str], verb_lexicon: frozenset[str]
) -> tuple[str, list[str]]:
    """Split content tokens into one action term and the object terms.

    The first token found in the verb lexicon is the action term; with no
    lexicon hit the leading token is taken as the verb.
    """
    if not tokens:
        raise ValueError("cannot split empty token list")
    verb_idx = 0
    for i, tok in enumerate(tokens):
        if tok in verb_lexicon:
            verb_idx = i
            break
    verb = tokens[verb_idx]
    objects = [t for i, t in enumerate(tokens) if i != verb_idx]
    return verb, objects


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = math.sqrt(float(np.dot(a, a)))
    nb = math.sqrt(float(np.dot(b, b)))
    return float(np.dot(a, b)) / (na * nb)


@dataclass
class ScoredResponse:
    participant_id: str
    node_id: str
    raw_text: str
    cleaned_text: str
    cs: float | None
    cs_a: float | None
    cs_o: float | None
    s_sim: float | None
    correct: bool
    flags: list[str] = field(default_factory=list)


def combine_similarity(cs: float, cs_o: float, cs_a: float, config: ScoringConfig) -> float:
    return (
        cs
        - (cs_o * config.penalty_constant) ** 2
        + (cs_a * config.bonus_constant) ** 2
    )


def semantic_score(
    cleaned_text: str,
    gt_label: str,
    sentence_table,
    word_table,
    config: ScoringConfig,
) -> tuple[float, float, float, float, bool, list[str]]:
    """Score one cleaned response against the ground-truth label.

    Returns (cs, cs_a, cs_o, s_sim, correct, flags).  Every required
    embedding must be present; a miss raises MissingEmbeddingError so the
    response can be excluded and reported rather than silently defaulted.
    """
    flags: list[str] = []
    gt_norm = " ".join(tokenize(gt_label))
    cs = cosine(sentence_table.lookup(cleaned_text), sentence_table.lookup(gt_norm))

    resp_verb, resp_objects = split_terms(cleaned_text.split(), config.verb_lexicon)
    gt_verb, gt_objects = split_terms(gt_norm.split(), config.verb_lexicon)
    cs_a = cosine(word_table.lookup(resp_verb), word_table.lookup(gt_verb))

    if resp_objects and gt_objects:
        resp_vec = np.mean([word_table.lookup(t) for t in resp_objects], axis=0)
        gt_vec = np.mean([word_table.lookup(t) for t in gt_objects], axis=0)
        cs_o = cosine(resp_vec, gt_vec)
    else:
        cs_o = 0.0
        flags.append("no_object_terms")

    s_sim = combine_similarity(cs, cs_o, cs_a, config)
    correct = s_sim > config.correctness_threshold
    return cs, cs_a, cs_o, s_sim, correct, flags


def score_response(
    participant_id: str,
    node_id: str,
    raw_text: str,
    gt_label: str,
    sentence_table,
    word_table,
    config: ScoringConfig,
    corrector: SpellCorrector | None = None,
) -> ScoredResponse:
    """Clean then score one response; empty-after-cleaning scores incorrect."""
    try:
        cleaned, trace = clean(raw_text, config, corrector)
    except EmptyAfterCleaningError:
        return ScoredResponse(
            participant_id=participant_id,
            node_id=node_id,
            raw_text=raw_text,
            cleaned_text="",
            cs=None,
            cs_a=None,
            cs_o=None,
            s_sim=None,
            correct=False,
            flags=["empty_after_cleaning"],
        )
    cs, cs_a, cs_o, s_sim, correct, flags = semantic_score(
        cleaned, gt_label, sentence_table, word_table, config
    )
    return ScoredResponse(
        participant_id=participant_id,
        node_id=node_id,
        raw_text=raw_text,
        cleaned_text=cleaned,
        cs=cs,
        cs_a=cs_a,
        cs_o=cs_o,
        s_sim=s_sim,
        correct=correct,
        flags=trace.flags + flags,
    )


def node_accuracy(scored: Iterable[ScoredResponse]) -> float:
    """Fraction of correct responses among those given for one node."""
    scored = list(scored)
    if not scored:
        raise UndefinedAccuracyError("no responses for node")
    return sum(1 for s in scored if s.correct) / len(scored)
