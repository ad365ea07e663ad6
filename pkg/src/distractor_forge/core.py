"""MCQ data model, dataset I/O and ground-truth comparison pairs."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import DatasetError


class Origin(str, Enum):
    HUMAN = "human"
    SYNTHETIC = "synthetic"
    MODEL = "model"


class Kind(str, Enum):
    CODE = "code"
    STATEMENT = "statement"


class Polarity(str, Enum):
    ASKING_CORRECT = "asking-correct"
    ASKING_INCORRECT = "asking-incorrect"


@dataclass(frozen=True)
class Distractor:
    text: str
    origin: Origin = Origin.HUMAN
    selection_rate: float | None = None
    # only meaningful for Origin.MODEL: which generator produced it
    source: str | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.text, str) or not self.text.strip():
            raise DatasetError("distractor text must be non-empty")
        if self.selection_rate is not None and not 0.0 <= self.selection_rate <= 1.0:
            raise DatasetError(f"selection_rate {self.selection_rate} outside [0, 1]")

    @property
    def key(self) -> str:
        return self.text.strip()

    def to_record(self) -> dict:
        origin = self.origin.value
        if self.origin is Origin.MODEL:
            origin = f"model:{self.source}"
        record: dict = {"text": self.text, "origin": origin}
        if self.selection_rate is not None:
            record["selection_rate"] = self.selection_rate
        return record

    @classmethod
    def from_record(cls, record: Mapping) -> "Distractor":
        origin = record.get("origin", "human")
        source = None
        if isinstance(origin, str) and origin.startswith("model:"):
            origin, source = "model", origin.split(":", 1)[1]
        return cls(
            text=record["text"],
            origin=Origin(origin),
            selection_rate=record.get("selection_rate"),
            source=source,
        )


@dataclass(frozen=True)
class McqItem:
    id: str
    subject: str
    kind: Kind
    polarity: Polarity
    question: str
    answer: str
    distractors: tuple[Distractor, ...]
    correctness_rate: float | None = None
    num_students: int | None = None

    def __post_init__(self) -> None:
        if not self.distractors:
            raise DatasetError(f"item {self.id!r}: at least one distractor required")
        answer = self.answer.strip()
        seen: set[str] = set()
        for d in self.distractors:
            if d.key == answer:
                raise DatasetError(f"item {self.id!r}: distractor equals the answer: {d.text!r}")
            if d.key in seen:
                raise DatasetError(f"item {self.id!r}: duplicate distractor {d.text!r}")
            seen.add(d.key)

    @property
    def human_distractors(self) -> list[Distractor]:
        return [d for d in self.distractors if d.origin is Origin.HUMAN]

    def to_record(self, split: str) -> dict:
        record = {
            "id": self.id,
            "subject": self.subject,
            "kind": self.kind.value,
            "polarity": self.polarity.value,
            "question": self.question,
            "answer": self.answer,
            "distractors": [d.to_record() for d in self.distractors],
        }
        if self.correctness_rate is not None:
            record["correctness_rate"] = self.correctness_rate
        if self.num_students is not None:
            record["num_students"] = self.num_students
        record["split"] = split
        return record


@dataclass(frozen=True)
class GroundTruthPair:
    item_id: str
    d_high: Distractor
    d_low: Distractor

    def __post_init__(self) -> None:
        if not (self.d_high.selection_rate or 0) > (self.d_low.selection_rate or 0):
            raise DatasetError("d_high must have a strictly larger selection rate")


@dataclass
class DatasetSplit:
    train: list[McqItem] = field(default_factory=list)
    test: list[McqItem] = field(default_factory=list)

    def __post_init__(self) -> None:
        overlap = {i.id for i in self.train} & {i.id for i in self.test}
        if overlap:
            raise DatasetError(f"train/test share ids: {sorted(overlap)}")

    def index(self) -> dict[str, McqItem]:
        return {item.id: item for item in (*self.train, *self.test)}


_REQUIRED = ("id", "subject", "kind", "polarity", "question", "answer", "distractors", "split")
_OPTIONAL = ("correctness_rate", "num_students")


def item_from_record(record: Mapping, where: str = "record") -> tuple[McqItem, str]:
    """Validate one dataset record; returns the item and its split name."""
    if not isinstance(record, Mapping):
        raise DatasetError(f"{where}: expected a JSON object")
    for key in _REQUIRED:
        if key not in record:
            raise DatasetError(f"{where}: missing field {key!r}")
    unknown = set(record) - set(_REQUIRED) - set(_OPTIONAL)
    if unknown:
        raise DatasetError(f"{where}: unknown field(s) {sorted(unknown)}")
    if record["split"] not in ("train", "test"):
        raise DatasetError(f"{where}: field 'split' must be 'train' or 'test'")
    for key in ("id", "subject", "question", "answer"):
        if not isinstance(record[key], str):
            raise DatasetError(f"{where}: field {key!r} must be a string")
    if not isinstance(record["distractors"], list):
        raise DatasetError(f"{where}: field 'distractors' must be a list")
    try:
        kind = Kind(record["kind"])
    except ValueError:
        raise DatasetError(f"{where}: field 'kind' has invalid value {record['kind']!r}") from None
    try:
        polarity = Polarity(record["polarity"])
    except ValueError:
        raise DatasetError(f"{where}: field 'polarity' has invalid value {record['polarity']!r}") from None
    distractors = []
    for j, d in enumerate(record["distractors"]):
        if not isinstance(d, Mapping) or "text" not in d:
            raise DatasetError(f"{where}: field 'distractors[{j}]' must be an object with 'text'")
        try:
            dist = Distractor.from_record(d)
        except (DatasetError, ValueError) as exc:
            raise DatasetError(f"{where}: field 'distractors[{j}]': {exc}") from None
        if dist.origin is Origin.HUMAN and dist.selection_rate is None:
            raise DatasetError(f"{where}: field 'distractors[{j}].selection_rate' required for human distractors")
        distractors.append(dist)
    try:
        item = McqItem(
            id=record["id"],
            subject=record["subject"],
            kind=kind,
            polarity=polarity,
            question=record["question"],
            answer=record["answer"],
            distractors=tuple(distractors),
            correctness_rate=record.get("correctness_rate"),
            num_students=record.get("num_students"),
        )
    except DatasetError as exc:
        raise DatasetError(f"{where}: {exc}") from None
    return item, record["split"]


def load_dataset(path: str | Path) -> DatasetSplit:
    """Read a line-delimited MCQ dataset, enforcing every item invariant.

    Blank lines are skipped. Errors name the offending line number.
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"dataset not found: {path}")
    split = DatasetSplit()
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {lineno}: malformed JSON ({exc.msg})") from None
            item, which = item_from_record(record, where=f"line {lineno}")
            if item.id in seen:
                raise DatasetError(f"line {lineno}: duplicate id {item.id!r}")
            seen.add(item.id)
            getattr(split, which).append(item)
    return split


def dumps_item(item: McqItem, split: str) -> str:
    return json.dumps(item.to_record(split), ensure_ascii=False)


def write_dataset(split: DatasetSplit, path: str | Path, order: Sequence[str] | None = None) -> None:
    """Write a split back to disk; ``order`` (ids) reproduces an interleaved source order."""
    tagged = [(i, "train") for i in split.train] + [(i, "test") for i in split.test]
    if order is not None:
        pos = {item_id: n for n, item_id in enumerate(order)}
        tagged.sort(key=lambda t: pos[t[0].id])
    with Path(path).open("w", encoding="utf-8") as fh:
        for item, which in tagged:
            fh.write(dumps_item(item, which) + "\n")


def derive_ground_truth_pairs(item: McqItem) -> list[GroundTruthPair]:
    """All human distractor pairs with a strict selection-rate winner.

    Pairs are ordered by (index of the more selected distractor, index of
    the less selected one) within ``item.distractors``; tied rates are
    dropped.
    """
    rated = [
        (idx, d)
        for idx, d in enumerate(item.distractors)
        if d.origin is Origin.HUMAN and d.selection_rate is not None
    ]
    oriented = []
    for (i, a), (j, b) in combinations(rated, 2):
        if a.selection_rate == b.selection_rate:
            continue
        if a.selection_rate > b.selection_rate:
            oriented.append(((i, j), GroundTruthPair(item.id, a, b)))
        else:
            oriented.append(((j, i), GroundTruthPair(item.id, b, a)))
    oriented.sort(key=lambda t: t[0])
    return [pair for _, pair in oriented]


def sample_pairs(pairs: Sequence[GroundTruthPair], limit: int | None, rng) -> list[GroundTruthPair]:
    """Optionally subsample ground-truth pairs (all pairs when ``limit`` is None)."""
    if limit is None or limit >= len(pairs):
        return list(pairs)
    keep = sorted(rng.sample(range(len(pairs)), limit))
    return [pairs[i] for i in keep]


_NEGATION_CUES = re.compile(
    r"\b(incorrect|not correct|false|wrong|not true|untrue|except|cannot|not)\b", re.IGNORECASE
)


def guess_polarity(question: str) -> Polarity:
    """Cheap negation-cue scan used only to pre-fill a missing polarity."""
    if _NEGATION_CUES.search(question):
        return Polarity.ASKING_INCORRECT
    return Polarity.ASKING_CORRECT


def items_by_id(items: Iterable[McqItem]) -> dict[str, McqItem]:
    return {item.id: item for item in items}
