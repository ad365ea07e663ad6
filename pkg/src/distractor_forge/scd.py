"""Student choice dataset: augmentation, validity gating and ranked merging."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .client import Client
from .core import Distractor, McqItem, Origin
from .errors import ParseError
from .prompts import (
    RankerVariant,
    parse_augment_output,
    parse_validity_output,
    render_augment_prompt,
    render_validity_prompt,
)
from .ranker import PairJudgment, ProtocolConfig, judge_pair

logger = logging.getLogger(__name__)


class RejectReason(str, Enum):
    DUPLICATE_OF_ORIGINAL = "duplicate-of-original"
    DUPLICATE_WITHIN_BATCH = "duplicate-within-batch"
    EQUALS_ANSWER = "equals-answer"
    FAILED_VALIDITY = "failed-validity"
    PARSE_FAILURE = "parse-failure"


class Provenance(str, Enum):
    RATE_ORDERED = "rate-ordered"
    COMPARISON_INSERTED = "comparison-inserted"


@dataclass(frozen=True)
class ValidityCheck:
    usable: bool
    attempts: int
    parsed: bool


def validity_check(item: McqItem, candidate: str, client: Client, cfg: ProtocolConfig) -> ValidityCheck:
    """Ask the validity judge; unparseable replies are retried up to ``attempt_cap``."""
    if not candidate or not candidate.strip():
        raise ValueError("candidate must be non-empty")
    prompt = render_validity_prompt(item.question, candidate)
    for attempt in range(1, cfg.attempt_cap + 1):
        text = client.chat_complete(prompt)
        try:
            parsed = parse_validity_output(text)
        except ParseError as exc:
            logger.debug("unparseable validity reply for %s: %s", item.id, exc)
            continue
        return ValidityCheck(parsed.usable_as_distractor, attempt, True)
    logger.warning("validity check for item %s gave no parseable verdict in %d attempts; treating as unusable",
                   item.id, cfg.attempt_cap)
    return ValidityCheck(False, cfg.attempt_cap, False)


def check_distractor_validity(item: McqItem, candidate: str, client: Client, cfg: ProtocolConfig) -> bool:
    """True when the judge labels the option "invalid", i.e. it is not a correct answer."""
    return validity_check(item, candidate, client, cfg).usable


@dataclass
class AugmentationResult:
    item_id: str
    accepted: list[Distractor] = field(default_factory=list)
    rejected: list[tuple[str, RejectReason]] = field(default_factory=list)
    excluded: bool = False
    exclusion_reason: str | None = None

    def to_record(self) -> dict:
        record = {
            "item_id": self.item_id,
            "accepted": [d.text for d in self.accepted],
            "rejected": [{"text": t, "reason": r.value} for t, r in self.rejected],
            "excluded": self.excluded,
        }
        if self.exclusion_reason is not None:
            record["exclusion_reason"] = self.exclusion_reason
        return record

    @classmethod
    def from_record(cls, record: dict) -> "AugmentationResult":
        return cls(
            item_id=record["item_id"],
            accepted=[Distractor(t, Origin.SYNTHETIC) for t in record["accepted"]],
            rejected=[(r["text"], RejectReason(r["reason"])) for r in record["rejected"]],
            excluded=record["excluded"],
            exclusion_reason=record.get("exclusion_reason"),
        )


def augment_distractors(
    item: McqItem,
    teacher: Client,
    validity: Client,
    cfg: ProtocolConfig,
) -> AugmentationResult:
    """Generate three synthetic distractors and keep the novel, valid ones.

    ``teacher`` writes the candidates, ``validity`` judges them (they may be
    the same client). An item with no surviving candidate is flagged as
    excluded from the dataset.
    """
    originals = [d.text for d in item.human_distractors]
    if not originals:
        raise ValueError(f"item {item.id!r} has no human distractor")
    prompt = render_augment_prompt(item.question, item.answer, originals)
    result = AugmentationResult(item.id)
    parsed = None
    for _ in range(2):  # one regeneration on a wholly unparseable reply
        try:
            parsed = parse_augment_output(teacher.chat_complete(prompt))
            break
        except ParseError as exc:
            logger.warning("augmentation reply for %s unparseable: %s", item.id, exc)
    if parsed is None:
        result.excluded = True
        result.exclusion_reason = RejectReason.PARSE_FAILURE.value
        return result

    answer = item.answer.strip()
    original_keys = {d.key for d in item.distractors}
    candidates = list(parsed.distractors) + list(parsed.duplicates)
    seen: set[str] = set()
    survivors: list[str] = []
    for text in candidates:
        key = text.strip()
        if key == answer:
            result.rejected.append((key, RejectReason.EQUALS_ANSWER))
        elif key in original_keys:
            result.rejected.append((key, RejectReason.DUPLICATE_OF_ORIGINAL))
        elif key in seen:
            result.rejected.append((key, RejectReason.DUPLICATE_WITHIN_BATCH))
        else:
            seen.add(key)
            survivors.append(key)
    for text in survivors:
        if check_distractor_validity(item, text, validity, cfg):
            result.accepted.append(Distractor(text, Origin.SYNTHETIC))
        else:
            result.rejected.append((text, RejectReason.FAILED_VALIDITY))
    if not result.accepted:
        result.excluded = True
        result.exclusion_reason = "no-valid-synthetic"
    return result


@dataclass
class RankedDistractorList:
    item_id: str
    entries: list[Distractor]
    provenance: list[Provenance]
    excluded: bool = False
    exclusion_reason: str | None = None
    judgments: list[PairJudgment] = field(default_factory=list, repr=False)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def texts(self) -> list[str]:
        return [d.text for d in self.entries]

    def to_record(self) -> dict:
        record = {
            "item_id": self.item_id,
            "entries": [
                {"text": d.text, "origin": d.origin.value, "rank": rank, "provenance": p.value}
                | ({"selection_rate": d.selection_rate} if d.selection_rate is not None else {})
                for rank, (d, p) in enumerate(zip(self.entries, self.provenance), start=1)
            ],
            "excluded": self.excluded,
        }
        if self.exclusion_reason is not None:
            record["exclusion_reason"] = self.exclusion_reason
        return record

    @classmethod
    def from_record(cls, record: dict) -> "RankedDistractorList":
        entries = sorted(record["entries"], key=lambda e: e["rank"])
        return cls(
            item_id=record["item_id"],
            entries=[Distractor(e["text"], Origin(e["origin"]), e.get("selection_rate")) for e in entries],
            provenance=[Provenance(e.get("provenance", Provenance.RATE_ORDERED.value)) for e in entries],
            excluded=record.get("excluded", False),
            exclusion_reason=record.get("exclusion_reason"),
        )


def rate_ordered_humans(item: McqItem) -> list[Distractor]:
    """Human distractors by descending selection rate, ties by list position."""
    humans = [(i, d) for i, d in enumerate(item.distractors)
              if d.origin is Origin.HUMAN and d.selection_rate is not None]
    humans.sort(key=lambda t: (-t[1].selection_rate, t[0]))
    return [d for _, d in humans]


def build_ranked_list(
    item: McqItem,
    accepted: Sequence[Distractor],
    variant: RankerVariant | str,
    ranker: Client,
    cfg: ProtocolConfig,
) -> RankedDistractorList:
    """Merge synthetic distractors into the human selection-rate order.

    Each synthetic is placed by binary search over the current list with
    the pairwise ranker as comparator, so human-human order is never
    questioned and each insertion costs at most ceil(log2(len + 1)) judgments.
    """
    entries = rate_ordered_humans(item)
    if not entries:
        raise ValueError(f"item {item.id!r} has no rated human distractor")
    provenance = [Provenance.RATE_ORDERED] * len(entries)
    judgments: list[PairJudgment] = []
    for synthetic in accepted:
        if synthetic.key in {e.key for e in entries} or synthetic.key == item.answer.strip():
            logger.warning("skipping synthetic %r for %s: duplicates an entry", synthetic.text, item.id)
            continue
        lo, hi = 0, len(entries)
        broken = False
        while lo < hi:
            mid = (lo + hi) // 2
            judgment = judge_pair(item, synthetic, entries[mid], variant, ranker, cfg)
            judgments.append(judgment)
            if judgment.all_unparseable:
                broken = True
                break
            if judgment.first_won:
                hi = mid
            else:
                lo = mid + 1
        if broken:
            logger.warning("ranker output unparseable for %s; appending synthetic at the bottom", item.id)
            lo = len(entries)
        entries.insert(lo, synthetic)
        provenance.insert(lo, Provenance.COMPARISON_INSERTED)
    return RankedDistractorList(item.id, entries, provenance, judgments=judgments)


def excluded_list(item_id: str, reason: str) -> RankedDistractorList:
    return RankedDistractorList(item_id, [], [], excluded=True, exclusion_reason=reason)


def top3_synthetic_share(lists: Iterable[RankedDistractorList]) -> float:
    """Average number of synthetic entries among each list's top three."""
    counts = [sum(d.origin is Origin.SYNTHETIC for d in lst.entries[:3]) for lst in lists if not lst.excluded]
    if not counts:
        raise ValueError("no ranked lists")
    return sum(counts) / len(counts)

