"""Deterministic offline stand-ins for model endpoints.

Every factory returns a ``(prompt, temperature) -> str`` responder (or a
``text -> vector`` embedder) that can back a scripted client. The replies
are derived from hashes of the prompt fields, so runs are reproducible.
Prompt fields are read up to the end of their first line.
"""

from __future__ import annotations

import hashlib
import json
import re
from typing import Callable

from .core import DatasetSplit, Distractor, Kind, McqItem, Polarity, guess_polarity

Responder = Callable[[str, float], str]

_FIELD = re.compile(r"^\[(Question|Answer|Distractor A|Distractor B|Option)\] ?(.*)$", re.MULTILINE)
_WINNER = re.compile(r"Distractor chosen more frequently by actual students:\s*([AB])")
_GEN_N = re.compile(r"Generate (\d+) distractor\(s\) in the following format:\n### Type:")


def unit_hash(*parts: str) -> float:
    digest = hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


def prompt_fields(prompt: str) -> dict[str, str]:
    return {m.group(1): m.group(2).strip() for m in _FIELD.finditer(prompt)}


def _knn_fields(prompt: str) -> tuple[str, str]:
    tail = prompt.rsplit("Referencing the above samples", 1)[-1]
    q = re.search(r"^Question: (.*)$", tail, re.MULTILINE)
    a = re.search(r"^Answer: (.*)$", tail, re.MULTILINE)
    return (q.group(1) if q else ""), (a.group(1) if a else "")


def _review(a: str, b: str, choice: str) -> str:
    return (f"### Review: A student weighing '{a}' against '{b}' is drawn to option {choice}.\n"
            f"### Choice: {choice}")


def ranker(biased_fraction: float = 0.0, salt: str = "", garbage_fraction: float = 0.0) -> Responder:
    """Prefers the distractor with the larger text hash.

    For a ``biased_fraction`` of pairs it always answers "A", so the
    order-swap protocol never agrees and falls back to a random pick.
    """

    def respond(prompt: str, temperature: float) -> str:
        f = prompt_fields(prompt)
        a, b = f.get("Distractor A", ""), f.get("Distractor B", "")
        pair = "\x1f".join(sorted((a, b)))
        if unit_hash("garbage", salt, pair) < garbage_fraction:
            return "I cannot decide."
        if unit_hash("bias", salt, pair) < biased_fraction:
            return _review(a, b, "A")
        choice = "A" if unit_hash(salt, a) >= unit_hash(salt, b) else "B"
        return _review(a, b, choice)

    return respond


def literal(text: str) -> Responder:
    return lambda prompt, temperature: text


def teacher(salt: str = "") -> Responder:
    """Writes reviews that agree with the revealed winner and augmentation JSON."""

    def respond(prompt: str, temperature: float) -> str:
        f = prompt_fields(prompt)
        won = _WINNER.search(prompt)
        if won:
            return _review(f.get("Distractor A", ""), f.get("Distractor B", ""), won.group(1))
        answer = f.get("Answer", "")
        dtype = "Correct knowledge" if guess_polarity(f.get("Question", "")) is Polarity.ASKING_INCORRECT \
            else "Incorrect knowledge"
        tails = ("only for small inputs", "after an implicit conversion", "unless the value is empty")
        return json.dumps({"type": dtype, **{f"distractor_{i}": f"{answer} {t}" for i, t in enumerate(tails, 1)}})

    return respond


def validity(reject_fraction: float = 0.1, salt: str = "") -> Responder:
    """Judges options "invalid" (usable) except for a hashed share of them."""

    def respond(prompt: str, temperature: float) -> str:
        f = prompt_fields(prompt)
        option = f.get("Option", "")
        verdict = "valid" if unit_hash("validity", salt, option) < reject_fraction else "invalid"
        kind = "asking incorrect option" if guess_polarity(f.get("Question", "")) is Polarity.ASKING_INCORRECT \
            else "asking correct option"
        return json.dumps({"type": kind, "analysis": f"Checked '{option}'.", "validity": verdict})

    return respond


def generator(style: str = "", pool_size: int = 6) -> Responder:
    """Answers both generator prompt formats with hashed variations of the answer."""
    words = ("always", "never", "sometimes", "twice", "in reverse", "lazily", "eagerly", "in place")

    def pick(question: str, answer: str, count: int, temperature: float) -> list[str]:
        ranked = sorted(range(pool_size), key=lambda i: unit_hash(style, question, str(i)))
        if temperature >= 1.0:
            ranked = ranked[::-1]
        return [f"{answer} {words[i % len(words)]}{'' if i < len(words) else f' ({i})'}" for i in ranked[:count]]

    def respond(prompt: str, temperature: float) -> str:
        m = _GEN_N.search(prompt)
        if m:
            f = prompt_fields(prompt)
            question, answer, n = f.get("Question", ""), f.get("Answer", ""), int(m.group(1))
            dtype = "Correct knowledge" if guess_polarity(question) is Polarity.ASKING_INCORRECT \
                else "Incorrect knowledge"
            lines = [f"### Type: {dtype}"]
            lines += [f"### Distractor {i}: {t}" for i, t in enumerate(pick(question, answer, n, temperature), 1)]
            return "\n".join(lines)
        question, answer = _knn_fields(prompt)
        return "\n".join(f"Distractor{i}: {t}" for i, t in enumerate(pick(question, answer, 3, temperature), 1))

    return respond


def embedder(dim: int = 16) -> Callable[[str], list[float]]:
    """Hashed bag of lowercase words plus a constant component (never zero)."""

    def embed(text: str) -> list[float]:
        vec = [0.0] * dim
        vec[0] = 1.0
        for word in re.findall(r"\w+", text.lower()):
            h = hashlib.sha256(word.encode("utf-8")).digest()
            vec[1 + h[0] % (dim - 1)] += 1.0 if h[1] % 2 else -1.0
        return vec

    return embed


def demo_dataset(n_train: int = 4, n_test: int = 3, seed: str = "demo") -> DatasetSplit:
    """Small synthetic items with four rated human distractors each."""
    subjects = ("Python", "DB", "MLDL")
    items = []
    for idx in range(n_train + n_test):
        subject = subjects[idx % len(subjects)]
        asks_incorrect = idx % 3 == 2
        question = (f"Which statement about topic {idx} in {subject} is NOT correct?" if asks_incorrect
                    else f"What does operation {idx} in {subject} return?")
        answer = f"result {idx}"
        raw = sorted((unit_hash(seed, str(idx), str(j)) for j in range(4)), reverse=True)
        total = sum(raw) * 1.5
        distractors = tuple(
            Distractor(f"option {idx}-{j}", selection_rate=round(r / total, 4)) for j, r in enumerate(raw)
        )
        items.append(McqItem(
            id=f"q{idx:03d}", subject=subject, kind=Kind.CODE if idx % 2 else Kind.STATEMENT,
            polarity=Polarity.ASKING_INCORRECT if asks_incorrect else Polarity.ASKING_CORRECT,
            question=question, answer=answer, distractors=distractors, num_students=100,
        ))
    return DatasetSplit(items[:n_train], items[n_train:])
