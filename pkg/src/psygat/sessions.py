"""Session records and the JSONL corpus format.

One session per line:
    {"id", "persona", "label", "split", "source",
     "utterances": [{"i", "q", "a"}],
     "peus": [{"utt", "peus": [{"category", "value", "spans"}]}],
     "causes": [{"target", "category", "sources"}]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path


class CorpusError(ValueError):
    pass


@dataclass
class Utterance:
    index: int
    question: str
    answer: str


@dataclass
class Session:
    id: str
    persona: int
    label: int
    utterances: list
    peus: list = field(default_factory=list)
    causes: list = field(default_factory=list)
    split: str = "train"
    source: str = "base"

    def __post_init__(self):
        for k, utt in enumerate(self.utterances):
            if utt.index != k:
                raise CorpusError(f"session {self.id}: utterance indices not contiguous at {k}")

    @property
    def T(self):
        return len(self.utterances)

    def text(self, index, prepend_question=True):
        utt = self.utterances[index]
        if prepend_question and utt.question:
            return f"Q: {utt.question} A: {utt.answer}"
        return utt.answer

    def to_json(self):
        return {
            "id": self.id,
            "persona": self.persona,
            "label": self.label,
            "split": self.split,
            "source": self.source,
            "utterances": [{"i": u.index, "q": u.question, "a": u.answer} for u in self.utterances],
            "peus": self.peus,
            "causes": self.causes,
        }

    @classmethod
    def from_json(cls, obj):
        return cls(
            id=str(obj["id"]),
            persona=int(obj["persona"]),
            label=int(obj["label"]),
            utterances=[Utterance(int(u["i"]), u.get("q", ""), u.get("a", "")) for u in obj["utterances"]],
            peus=obj.get("peus", []),
            causes=obj.get("causes", []),
            split=obj.get("split", "train"),
            source=obj.get("source", "base"),
        )


def write_sessions(path, sessions):
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("w", encoding="utf-8") as f:
        for s in sessions:
            f.write(json.dumps(s.to_json(), sort_keys=True) + "\n")
    tmp.replace(path)


def read_sessions(path):
    sessions = []
    with Path(path).open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                sessions.append(Session.from_json(json.loads(line)))
            except (KeyError, ValueError) as exc:
                raise CorpusError(f"{path}:{lineno}: bad session record: {exc}") from exc
    return sessions


def split_sessions(sessions):
    splits = {"train": [], "val": [], "test": []}
    for s in sessions:
        if s.split not in splits:
            raise CorpusError(f"session {s.id}: unknown split {s.split!r}")
        splits[s.split].append(s)
    return splits


def check_no_augmented_leakage(sessions):
    """Augmented sessions are train-only; anything else is a hard error."""
    offenders = [s.id for s in sessions if s.source == "augmented" and s.split != "train"]
    if offenders:
        raise CorpusError(
            "augmented sessions found outside the train split: " + ", ".join(sorted(offenders))
        )
