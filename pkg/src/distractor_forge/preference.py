"""SFT and DPO training records for the pairwise ranker and the distractor generator."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .client import Client, fan_out
from .core import GroundTruthPair, McqItem, derive_ground_truth_pairs
from .errors import ParseError, TransportError
from .prompts import (
    DistractorType,
    RankerVariant,
    format_generator_completion,
    format_ranker_completion,
    parse_ranker_output,
    render_generator_prompt,
    render_ranker_prompt,
    render_teacher_prompt,
)
from .ranker import ProtocolConfig
from .scd import RankedDistractorList
from .seeding import derive_rng

logger = logging.getLogger(__name__)

TEACHER_TEMPERATURES = (0.0, 1.0)


class Scheme(str, Enum):
    TOP_BOTTOM = "top-bottom"
    SLIDING_WINDOW = "sliding-window"


@dataclass(frozen=True)
class SftRecord:
    prompt: str
    completion: str
    tags: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.prompt or not self.completion:
            raise ValueError("prompt and completion must be non-empty")

    def to_record(self) -> dict:
        return {"prompt": self.prompt, "completion": self.completion, "tags": self.tags}

    @classmethod
    def from_record(cls, record: dict) -> "SftRecord":
        return cls(record["prompt"], record["completion"], record.get("tags", {}))


@dataclass(frozen=True)
class PreferenceRecord:
    prompt: str
    chosen: str
    rejected: str
    tags: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.chosen == self.rejected:
            raise ValueError("chosen and rejected completions must differ")

    def to_record(self) -> dict:
        return {"prompt": self.prompt, "chosen": self.chosen, "rejected": self.rejected, "tags": self.tags}

    @classmethod
    def from_record(cls, record: dict) -> "PreferenceRecord":
        return cls(record["prompt"], record["chosen"], record["rejected"], record.get("tags", {}))


# --------------------------------------------------------------------------
# ranker


def _teacher_completion(prompt: str, truth: str, temperature: float, teacher: Client,
                        cfg: ProtocolConfig, where: str) -> str | None:
    for _ in range(cfg.attempt_cap):
        try:
            text = teacher.chat_complete(prompt, temperature=temperature)
        except TransportError as exc:
            logger.warning("teacher call failed for %s: %s", where, exc)
            continue
        try:
            parsed = parse_ranker_output(text)
        except ParseError as exc:
            logger.warning("teacher output unparseable for %s: %s", where, exc)
            continue
        if parsed.choice != truth:
            logger.warning("teacher chose %s instead of %s for %s; dropping", parsed.choice, truth, where)
            return None
        return format_ranker_completion(parsed.reasoning, parsed.choice)
    logger.warning("teacher gave up on %s after %d attempts", where, cfg.attempt_cap)
    return None


def emit_ranker_sft(
    train: Sequence[McqItem],
    teacher: Client,
    cfg: ProtocolConfig,
    pairs: Sequence[GroundTruthPair] | None = None,
) -> list[SftRecord]:
    """Two teacher-written reasoning samples (temperature 0 and 1) per ground-truth pair.

    The more selected distractor lands in slot A or B by a coin keyed on the
    run seed and the pair. The stored prompt is the plain Reasoning ranker
    prompt; the teacher prompt (which reveals the answer) is not kept.
    """
    items = {item.id: item for item in train}
    if pairs is None:
        pairs = [p for item in train for p in derive_ground_truth_pairs(item)]

    def one(pair: GroundTruthPair) -> list[SftRecord]:
        item = items[pair.item_id]
        high_first = derive_rng(cfg.rng_seed, "slot", item.id, pair.d_high.key, pair.d_low.key).random() < 0.5
        a, b = (pair.d_high, pair.d_low) if high_first else (pair.d_low, pair.d_high)
        truth = "A" if high_first else "B"
        teacher_prompt = render_teacher_prompt(item.question, item.answer, a.text, b.text, truth)
        prompt = render_ranker_prompt(RankerVariant.REASONING, item.question, item.answer, a.text, b.text)
        out = []
        for temperature in TEACHER_TEMPERATURES:
            completion = _teacher_completion(teacher_prompt, truth, temperature, teacher, cfg, item.id)
            if completion is None:
                continue
            tags = {
                "role": "ranker",
                "item_id": item.id,
                "params": {"temperature": temperature, "ground_truth": truth,
                           "distractor_a": a.text, "distractor_b": b.text},
            }
            out.append(SftRecord(prompt, completion, tags))
        return out

    return [rec for group in fan_out(one, list(pairs), cfg.fan_out) for rec in group]


def emit_ranker_dpo(sft_records: Sequence[SftRecord], sft_model: Client, cfg: ProtocolConfig) -> list[PreferenceRecord]:
    """Preference pairs where the SFT ranker disagrees with the ground truth.

    Each prompt is answered once by the SFT model; a wrong or unparseable
    answer becomes ``rejected`` against the teacher completion as ``chosen``.
    """
    # records sharing a prompt stay in one task so scripted replays consume responses in order
    groups: dict[str, list[int]] = defaultdict(list)
    for idx, rec in enumerate(sft_records):
        groups[rec.prompt].append(idx)

    def one(indices: list[int]) -> list[tuple[int, PreferenceRecord]]:
        out = []
        for idx in indices:
            rec = sft_records[idx]
            truth = rec.tags.get("params", {}).get("ground_truth")
            if truth not in ("A", "B"):
                raise ValueError(f"SFT record {idx} lacks a ground_truth tag")
            text = sft_model.chat_complete(rec.prompt)
            try:
                if parse_ranker_output(text).choice == truth:
                    continue
            except ParseError:
                pass
            if text == rec.completion:
                continue
            tags = {"role": "ranker", "item_id": rec.tags.get("item_id"), "params": dict(rec.tags.get("params", {}))}
            out.append((idx, PreferenceRecord(rec.prompt, rec.completion, text, tags)))
        return out

    pairs = [p for group in fan_out(one, list(groups.values()), cfg.fan_out) for p in group]
    return [rec for _, rec in sorted(pairs, key=lambda t: t[0])]


# --------------------------------------------------------------------------
# generator


def _usable(lists: Iterable[RankedDistractorList], items: Mapping[str, McqItem]):
    for lst in lists:
        if lst.excluded or not lst.entries:
            logger.info("skipping excluded list %s", lst.item_id)
            continue
        if lst.item_id not in items:
            raise KeyError(f"ranked list refers to unknown item {lst.item_id!r}")
        yield lst, items[lst.item_id]


def emit_generator_sft(lists: Iterable[RankedDistractorList], items: Mapping[str, McqItem]) -> list[SftRecord]:
    """One record per n in 1..k, listing the n most plausible entries."""
    records = []
    for lst, item in _usable(lists, items):
        dtype = DistractorType.for_polarity(item.polarity)
        for n in range(1, len(lst.entries) + 1):
            records.append(SftRecord(
                render_generator_prompt(item.question, item.answer, n),
                format_generator_completion(dtype, lst.texts[:n]),
                {"role": "generator", "item_id": item.id, "params": {"n": n}},
            ))
    return records


def top_bottom_pairs(k: int) -> list[tuple[int, int]]:
    """0-based (chosen, rejected) rank indices: top floor(k/2) x bottom floor(k/2)."""
    n = k // 2
    return [(i, j) for i in range(n) for j in range(k - n, k)]


def sliding_window_pairs(k: int, window: int) -> list[tuple[int, int]]:
    """Cross products between every earlier and later non-overlapping window."""
    if window < 1:
        raise ValueError("window size must be >= 1")
    windows = [list(range(s, min(s + window, k))) for s in range(0, k, window)]
    return [
        (i, j)
        for wi in range(len(windows))
        for wj in range(wi + 1, len(windows))
        for i in windows[wi]
        for j in windows[wj]
    ]


def emit_generator_dpo(
    lists: Iterable[RankedDistractorList],
    items: Mapping[str, McqItem],
    scheme: Scheme | str = Scheme.TOP_BOTTOM,
    window_n: int | None = None,
) -> list[PreferenceRecord]:
    """Chosen/rejected single-distractor completions from each ranked list.

    Every record uses the n=1 generator prompt; ``chosen`` is always the
    higher-ranked of the two distractors.
    """
    scheme = Scheme(scheme)
    if scheme is Scheme.SLIDING_WINDOW and (window_n is None or window_n < 1):
        raise ValueError("sliding-window scheme needs window_n >= 1")
    records = []
    for lst, item in _usable(lists, items):
        k = len(lst.entries)
        if k < 2:
            logger.warning("item %s has %d ranked distractor(s); need 2 for DPO", item.id, k)
            continue
        dtype = DistractorType.for_polarity(item.polarity)
        prompt = render_generator_prompt(item.question, item.answer, 1)
        index_pairs = top_bottom_pairs(k) if scheme is Scheme.TOP_BOTTOM else sliding_window_pairs(k, window_n)
        for i, j in index_pairs:
            records.append(PreferenceRecord(
                prompt,
                format_generator_completion(dtype, [lst.texts[i]]),
                format_generator_completion(dtype, [lst.texts[j]]),
                {"role": "generator", "item_id": item.id,
                 "params": {"scheme": scheme.value, "chosen_rank": i + 1, "rejected_rank": j + 1}},
            ))
    return records
