"""Psychological expression units: per-utterance evidence vectors.

Eight categories in a fixed canonical order. The first seven are binary
presence flags; the coping dimension is ternary (-1 mitigating, 0 absent,
+1 positive). Evidence spans are kept for reporting only; the model
consumes just the 8-dim vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CATEGORIES = (
    "cognitive_distortions",
    "hopelessness_helplessness",
    "self_negativity",
    "stressors_interpersonal",
    "emotional_behavioral_withdrawal",
    "somatic_fatigue_sleep",
    "rumination_affective_dysregulation",
    "protective_positive_coping",
)
NUM_CATEGORIES = 8
COPING = NUM_CATEGORIES - 1
CATEGORY_INDEX = {name: i for i, name in enumerate(CATEGORIES)}


class SchemaError(ValueError):
    pass


class DataError(ValueError):
    pass


@dataclass
class PeuVector:
    values: tuple = (0,) * NUM_CATEGORIES
    evidence: list = field(default_factory=list)  # (category name, verbatim span)

    def __post_init__(self):
        v = tuple(int(x) for x in self.values)
        if len(v) != NUM_CATEGORIES:
            raise SchemaError(f"expected {NUM_CATEGORIES} dims, got {len(v)}")
        for i, x in enumerate(v[:COPING]):
            if x not in (0, 1):
                raise SchemaError(f"dim {i} ({CATEGORIES[i]}) must be 0/1, got {x}")
        if v[COPING] not in (-1, 0, 1):
            raise SchemaError(f"coping dim must be in -1/0/1, got {v[COPING]}")
        object.__setattr__(self, "values", v)

    def __eq__(self, other):
        return isinstance(other, PeuVector) and self.values == other.values

    def is_zero(self):
        return all(x == 0 for x in self.values)

    def active_categories(self):
        return [i for i, x in enumerate(self.values) if x != 0]

    def as_array(self, dtype=np.float32):
        return np.asarray(self.values, dtype=dtype)


@dataclass
class PeuTensor:
    rows: list  # T PeuVectors in utterance order

    @property
    def T(self):
        return len(self.rows)

    def as_array(self, dtype=np.float32):
        if not self.rows:
            return np.zeros((0, NUM_CATEGORIES), dtype=dtype)
        return np.stack([r.as_array(dtype) for r in self.rows])


def parse_annotations(record):
    """Build a PeuVector from one annotation record.

    Record shape: {"utt": int, "peus": [{"category", "value", "spans"}]}.
    Duplicate categories merge: spans concatenate, the value must agree.
    """
    values = [0] * NUM_CATEGORIES
    evidence = []
    seen = {}
    for entry in record.get("peus", []):
        name = entry.get("category")
        if name not in CATEGORY_INDEX:
            raise SchemaError(f"unknown PEU category {name!r}")
        idx = CATEGORY_INDEX[name]
        value = int(entry.get("value", 1))
        if idx == COPING:
            if value not in (-1, 0, 1):
                raise SchemaError(f"coping value {value} outside -1/0/1")
        else:
            if value not in (0, 1):
                raise SchemaError(f"{name} value {value} outside 0/1")
        if idx not in seen:
            # duplicates merge evidence but never change the first value
            seen[idx] = value
            values[idx] = value
        for span in entry.get("spans", []):
            evidence.append((name, span))
    return PeuVector(tuple(values), evidence)


def emit_annotations(utt_index, vec):
    """Inverse of parse_annotations for a PeuVector."""
    spans_by_cat = {}
    for name, span in vec.evidence:
        spans_by_cat.setdefault(name, []).append(span)
    peus = []
    for i, value in enumerate(vec.values):
        if value != 0:
            peus.append(
                {
                    "category": CATEGORIES[i],
                    "value": value,
                    "spans": spans_by_cat.get(CATEGORIES[i], []),
                }
            )
    return {"utt": utt_index, "peus": peus}


def build_peu_tensor(session):
    """Stack per-utterance PeuVectors in timeline order.

    Every participant utterance must carry an annotation record (an empty
    one is fine); a gap is a data error, not a silent zero row.
    """
    by_utt = {rec["utt"]: rec for rec in session.peus}
    rows = []
    for utt in session.utterances:
        rec = by_utt.get(utt.index)
        if rec is None:
            raise DataError(f"session {session.id}: no PEU annotation for utterance {utt.index}")
        rows.append(parse_annotations(rec))
    return PeuTensor(rows)


def keyword_extract(text, lexicon):
    """Deterministic lexicon matcher producing a PeuVector with evidence.

    lexicon: category name -> list of phrases, or for coping a list of
    (phrase, sign) pairs. Matching is case-insensitive whole-phrase.
    """
    low = text.lower()
    values = [0] * NUM_CATEGORIES
    evidence = []
    for name, phrases in lexicon.items():
        idx = CATEGORY_INDEX[name]
        for entry in phrases:
            if idx == COPING and isinstance(entry, (tuple, list)):
                phrase, sign = entry
            else:
                phrase, sign = entry, 1
            pos = low.find(phrase.lower())
            if pos >= 0:
                values[idx] = int(sign)
                evidence.append((name, text[pos : pos + len(phrase)]))
    return PeuVector(tuple(values), evidence)


# Small built-in lexicon: enough for the procedural generator and for
# reproducible extraction in tests. Coping entries carry their sign.
DEFAULT_LEXICON = {
    "cognitive_distortions": [
        "everything i do goes wrong",
        "i always ruin things",
        "nobody ever listens to me",
        "it is all my fault",
        "i can never do anything right",
        "everyone assumes the worst of me",
        "things never work out",
        "if i fail once i fail at everything",
        "one mistake means the whole day is ruined",
        "they must all hate me",
    ],
    "hopelessness_helplessness": [
        "nothing will ever change",
        "there is no point anymore",
        "i have no future",
        "no way out of this",
        "nothing i do matters",
        "i feel completely stuck",
        "it will never get better",
        "i have given up hoping",
        "there is nothing left for me",
        "i am powerless to change it",
    ],
    "self_negativity": [
        "i am worthless",
        "i hate myself",
        "i am such a burden",
        "i am a failure",
        "i do not deserve anything good",
        "i am useless to everyone",
        "i am broken inside",
        "i am not good enough",
        "i disgust myself",
        "i let everyone down",
    ],
    "stressors_interpersonal": [
        "we had a terrible argument",
        "my boss keeps criticizing me",
        "my marriage is falling apart",
        "i lost my job last month",
        "my family keeps fighting",
        "my friend stopped talking to me",
        "the bills keep piling up",
        "my landlord threatened to evict us",
        "my partner walked out on me",
        "they passed me over again at work",
    ],
    "emotional_behavioral_withdrawal": [
        "i stopped seeing my friends",
        "i cancel every plan",
        "i just stay in my room",
        "i avoid everyone now",
        "i do not answer calls anymore",
        "i skipped the gathering again",
        "i keep to myself these days",
        "i stopped going outside",
        "i feel numb around people",
        "i pulled away from everybody",
    ],
    "somatic_fatigue_sleep": [
        "i feel exhausted all the time",
        "i can barely sleep at night",
        "i wake up at three and stare",
        "my body feels so heavy",
        "i have no energy left",
        "i sleep all day and still feel tired",
        "my appetite is gone",
        "i get these constant headaches",
        "i toss and turn all night",
        "i am drained before noon",
    ],
    "rumination_affective_dysregulation": [
        "i keep replaying it in my head",
        "i cannot stop thinking about it",
        "my thoughts just spiral",
        "i cry out of nowhere",
        "i snap at everyone lately",
        "the same worry loops all night",
        "i cannot let it go",
        "my mood swings wildly",
        "i keep going over every mistake",
        "i obsess over what they said",
    ],
    "protective_positive_coping": [
        ("i went for a walk to clear my head", 1),
        ("talking to my sister helps", 1),
        ("i started journaling again", 1),
        ("exercise keeps me steady", 1),
        ("i practice breathing when it gets bad", 1),
        ("i try but it never helps", -1),
        ("nothing i try makes it better", -1),
        ("i used to cope but i cannot anymore", -1),
        ("the things that helped stopped working", -1),
        ("i gave up on my routines", -1),
    ],
}
