"""Prompt templates and parsers for ranker, generator, validity and augmentation calls.

Templates live as text assets under ``templates/`` and are filled with
``str.format`` (single pass, so slot values are never re-interpreted).
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Sequence

from .core import McqItem, Polarity
from .errors import ParseError

logger = logging.getLogger(__name__)


class RankerVariant(str, Enum):
    REASONING = "reasoning"
    RUBRIC = "rubric"
    GEVAL = "geval"


class DistractorType(str, Enum):
    CORRECT_KNOWLEDGE = "correct-knowledge"
    INCORRECT_KNOWLEDGE = "incorrect-knowledge"

    @property
    def label(self) -> str:
        return "Correct knowledge" if self is DistractorType.CORRECT_KNOWLEDGE else "Incorrect knowledge"

    @classmethod
    def for_polarity(cls, polarity: Polarity) -> "DistractorType":
        # a question asking for the correct option needs wrong statements, and vice versa
        if polarity is Polarity.ASKING_CORRECT:
            return cls.INCORRECT_KNOWLEDGE
        return cls.CORRECT_KNOWLEDGE


TEMPLATE_NAMES = (
    "ranker_reasoning",
    "ranker_rubric",
    "ranker_geval",
    "ranker_teacher",
    "generator",
    "knn",
    "validity",
    "augment",
)


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    if name not in TEMPLATE_NAMES:
        raise KeyError(f"unknown template {name!r}")
    text = resources.files(__package__).joinpath("templates", f"{name}.txt").read_text(encoding="utf-8")
    return text.rstrip("\n")


def template_hashes() -> dict[str, str]:
    """sha256 of every shipped template, for run manifests."""
    return {name: hashlib.sha256(load_template(name).encode("utf-8")).hexdigest() for name in TEMPLATE_NAMES}


def _require(**slots: str) -> None:
    for name, value in slots.items():
        if not isinstance(value, str) or not value.strip():
            raise ValueError(f"{name} must be a non-empty string")


# --------------------------------------------------------------------------
# pairwise ranker


@dataclass(frozen=True)
class ParsedRankerOutput:
    reasoning: str
    choice: str  # "A" or "B"


def render_ranker_prompt(variant: RankerVariant | str, question: str, answer: str,
                         distractor_a: str, distractor_b: str) -> str:
    _require(question=question, answer=answer, distractor_a=distractor_a, distractor_b=distractor_b)
    variant = RankerVariant(variant)
    return load_template(f"ranker_{variant.value}").format(
        question=question, answer=answer, distractor_a=distractor_a, distractor_b=distractor_b
    )


def render_teacher_prompt(question: str, answer: str, distractor_a: str, distractor_b: str,
                          winner: str) -> str:
    """Teacher-data prompt that reveals which slot students picked more often."""
    _require(question=question, answer=answer, distractor_a=distractor_a, distractor_b=distractor_b)
    if winner not in ("A", "B"):
        raise ValueError(f"winner must be 'A' or 'B', got {winner!r}")
    return load_template("ranker_teacher").format(
        question=question, answer=answer, distractor_a=distractor_a, distractor_b=distractor_b,
        winner=winner,
    )


_CHOICE_MARKER = re.compile(r"(?:#{1,6}\s*Choice\s*:|\[Choice\]\s*:|\bChoice\s*:)", re.IGNORECASE)
_REVIEW_MARKER = re.compile(r"#{1,6}\s*Review\s*:", re.IGNORECASE)
_CHOICE_TOKEN = re.compile(r"^[^\w]*([AB])[^\w]*$")


def parse_ranker_output(text: str) -> ParsedRankerOutput:
    """Pull the A/B choice after the last choice marker.

    Punctuation and whitespace around the token are tolerated; anything
    else after the marker is a parse failure.
    """
    markers = list(_CHOICE_MARKER.finditer(text or ""))
    if not markers:
        raise ParseError("no choice marker found")
    last = markers[-1]
    m = _CHOICE_TOKEN.match(text[last.end():].strip())
    if m is None:
        raise ParseError(f"no A/B token after choice marker: {text[last.end():].strip()[:40]!r}")
    head = text[: last.start()]
    review = list(_REVIEW_MARKER.finditer(head))
    reasoning = head[review[-1].end():] if review else head
    return ParsedRankerOutput(reasoning=reasoning.strip(), choice=m.group(1))


def format_ranker_completion(reasoning: str, choice: str) -> str:
    if choice not in ("A", "B"):
        raise ValueError(f"choice must be 'A' or 'B', got {choice!r}")
    return f"### Review: {reasoning.strip()}\n### Choice: {choice}"


# --------------------------------------------------------------------------
# distractor generator


@dataclass(frozen=True)
class ParsedGeneratorOutput:
    distractor_type: DistractorType | None
    distractors: tuple[str, ...]
    duplicates: tuple[str, ...] = ()
    n_expected: int | None = None

    @property
    def shortfall(self) -> bool:
        return self.n_expected is not None and len(self.distractors) < self.n_expected


def render_generator_prompt(question: str, answer: str, n: int) -> str:
    _require(question=question, answer=answer)
    if not isinstance(n, int) or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    return load_template("generator").format(question=question, answer=answer, n=n)


def format_generator_completion(distractor_type: DistractorType, distractors: Sequence[str]) -> str:
    lines = [f"### Type: {distractor_type.label}"]
    lines += [f"### Distractor {i}: {text.strip()}" for i, text in enumerate(distractors, start=1)]
    return "\n".join(lines)


_TYPE_LINE = re.compile(r"#{1,6}[ \t]*Type[ \t]*:[ \t]*(.*)", re.IGNORECASE)
_DISTRACTOR_LINE = re.compile(r"^[ \t]*#{1,6}\s*Distractor\s*(\d+)\s*:[ \t]*", re.IGNORECASE | re.MULTILINE)


def _parse_type(value: str) -> DistractorType:
    v = value.strip().strip("\"'*.").lower()
    if v.startswith("incorrect knowledge"):
        return DistractorType.INCORRECT_KNOWLEDGE
    if v.startswith("correct knowledge"):
        return DistractorType.CORRECT_KNOWLEDGE
    raise ParseError(f"unrecognised distractor type {value!r}")


def _dedupe(candidates: Sequence[str]) -> tuple[list[str], list[str]]:
    kept: list[str] = []
    dropped: list[str] = []
    seen: set[str] = set()
    for text in candidates:
        key = text.strip()
        if not key:
            continue
        if key in seen:
            dropped.append(key)
            continue
        seen.add(key)
        kept.append(key)
    return kept, dropped


def _extract_json_object(text: str) -> dict | None:
    start = text.find("{")
    end = text.rfind("}")
    if start < 0 or end <= start:
        return None
    try:
        obj = json.loads(text[start:end + 1])
    except json.JSONDecodeError:
        return None
    return obj if isinstance(obj, dict) else None


def _numbered_key(key: str) -> int | None:
    m = re.fullmatch(r"distractor[_\s]?(\d+)", key.strip(), re.IGNORECASE)
    return int(m.group(1)) if m else None


def _finish(dtype, candidates, n_expected) -> ParsedGeneratorOutput:
    kept, dropped = _dedupe(candidates)
    if dropped:
        logger.warning("dropped %d duplicate distractor(s) from generator output", len(dropped))
    if not kept:
        raise ParseError("no distractors found")
    out = ParsedGeneratorOutput(dtype, tuple(kept), tuple(dropped), n_expected)
    if out.shortfall:
        logger.info("generator produced %d of %d distractors", len(kept), n_expected)
    return out


def parse_generator_output(text: str, n_expected: int | None = None) -> ParsedGeneratorOutput:
    """Parse ``### Type:`` then ``### Distractor k:`` blocks.

    A JSON object with ``type`` and ``distractor_k`` keys is accepted too,
    since API models are often asked for JSON. Duplicates are dropped with
    a warning; too few distractors only sets :attr:`shortfall`.
    """
    text = text or ""
    type_match = _TYPE_LINE.search(text)
    if type_match is None:
        obj = _extract_json_object(text)
        if obj is not None:
            return parse_json_distractors(obj, n_expected)
        raise ParseError("missing '### Type:' line")
    dtype = _parse_type(type_match.group(1).splitlines()[0] if type_match.group(1) else "")
    body = text[type_match.end():]
    marks = list(_DISTRACTOR_LINE.finditer(body))
    candidates = []
    for i, m in enumerate(marks):
        stop = marks[i + 1].start() if i + 1 < len(marks) else len(body)
        chunk = body[m.end():stop]
        # the closing instruction tag sometimes gets echoed
        chunk = chunk.replace("[/INST]", "")
        candidates.append(chunk.strip())
    return _finish(dtype, candidates, n_expected)


def parse_json_distractors(obj: dict, n_expected: int | None = None) -> ParsedGeneratorOutput:
    if "type" not in obj:
        raise ParseError("missing 'type' field")
    dtype = _parse_type(str(obj["type"]))
    numbered = sorted(
        (idx, str(value)) for key, value in obj.items()
        if (idx := _numbered_key(key)) is not None and isinstance(value, (str, int, float))
    )
    return _finish(dtype, [v for _, v in numbered], n_expected)


def parse_augment_output(text: str) -> ParsedGeneratorOutput:
    """Augmentation replies are JSON; the line format is accepted as fallback."""
    obj = _extract_json_object(text or "")
    if obj is not None and "type" in obj:
        return parse_json_distractors(obj, 3)
    return parse_generator_output(text, 3)


# --------------------------------------------------------------------------
# kNN in-context baseline


@dataclass(frozen=True)
class KnnExample:
    question: str
    answer: str
    distractors: tuple[str, str, str]

    @classmethod
    def from_item(cls, item: McqItem) -> "KnnExample":
        texts = tuple(d.text for d in item.distractors[:3])
        if len(texts) != 3:
            raise ValueError(f"item {item.id!r} has fewer than 3 distractors")
        return cls(item.question, item.answer, texts)  # type: ignore[arg-type]


def render_knn_prompt(examples: Sequence[KnnExample], question: str, answer: str) -> str:
    _require(question=question, answer=answer)
    if len(examples) != 3:
        raise ValueError(f"exactly 3 in-context examples required, got {len(examples)}")
    blocks = []
    for ex in examples:
        if len(ex.distractors) != 3:
            raise ValueError("each in-context example needs exactly 3 distractors")
        lines = [f"Question: {ex.question}", f"Answer: {ex.answer}"]
        lines += [f"Distractor{i}: {d}" for i, d in enumerate(ex.distractors, start=1)]
        blocks.append("\n".join(lines))
    return load_template("knn").format(examples="\n\n".join(blocks), question=question, answer=answer)


_KNN_LINE = re.compile(r"^[ \t]*Distractor\s*(\d+)\s*:[ \t]*", re.IGNORECASE | re.MULTILINE)


def parse_knn_output(text: str, n_expected: int = 3) -> ParsedGeneratorOutput:
    marks = list(_KNN_LINE.finditer(text or ""))
    candidates = []
    for i, m in enumerate(marks):
        stop = marks[i + 1].start() if i + 1 < len(marks) else len(text)
        candidates.append(text[m.end():stop].strip())
    return _finish(None, candidates, n_expected)


# --------------------------------------------------------------------------
# validity check


class Verdict(str, Enum):
    VALID = "valid"
    INVALID = "invalid"


@dataclass(frozen=True)
class ParsedValidityOutput:
    polarity_judged: Polarity | None
    analysis: str
    verdict: Verdict

    @property
    def usable_as_distractor(self) -> bool:
        # "invalid" means the option is not a correct answer, i.e. a usable distractor
        return self.verdict is Verdict.INVALID


def render_validity_prompt(question: str, option: str) -> str:
    _require(question=question, option=option)
    return load_template("validity").format(question=question, option=option)


def parse_validity_output(text: str) -> ParsedValidityOutput:
    obj = _extract_json_object(text or "")
    if obj is None:
        raise ParseError("no JSON object in validity response")
    if "validity" not in obj:
        raise ParseError("validity response lacks 'validity'")
    raw = str(obj["validity"]).strip().strip(".").lower()
    try:
        verdict = Verdict(raw)
    except ValueError:
        raise ParseError(f"unknown validity token {obj['validity']!r}") from None
    kind = str(obj.get("type", "")).lower()
    polarity = None
    if "incorrect" in kind:
        polarity = Polarity.ASKING_INCORRECT
    elif "correct" in kind:
        polarity = Polarity.ASKING_CORRECT
    return ParsedValidityOutput(polarity, str(obj.get("analysis", "")), verdict)


# --------------------------------------------------------------------------
# augmentation


def render_augment_prompt(question: str, answer: str, originals: Sequence[str]) -> str:
    _require(question=question, answer=answer)
    if not originals:
        raise ValueError("at least one original distractor is required")
    joined = "\n".join(f"- {text}" for text in originals)
    return load_template("augment").format(question=question, answer=answer, distractors=joined)

