"""Order-swap consistency protocol around a pairwise ranker endpoint.

Each attempt asks the ranker twice, once with the pair as (A=d1, B=d2)
and once swapped. The attempt resolves when both calls name the same
underlying distractor; after ``attempt_cap`` disagreements the winner is
drawn from a keyed random stream.
"""

from __future__ import annotations

import json
import logging
from collections import defaultdict
from dataclasses import dataclass, replace
from enum import Enum
from itertools import combinations
from pathlib import Path
from statistics import fmean
from typing import Iterable, Mapping, Sequence

from .client import Client, fan_out, text_digest
from .core import Distractor, GroundTruthPair, McqItem
from .errors import ParseError
from .prompts import RankerVariant, parse_ranker_output, render_ranker_prompt
from .seeding import derive_rng, derive_seed

logger = logging.getLogger(__name__)


class Resolution(str, Enum):
    AGREEMENT = "agreement"
    RANDOM_FALLBACK = "random-fallback"


@dataclass(frozen=True)
class ProtocolConfig:
    temperature: float = 0.5
    attempt_cap: int = 10
    rng_seed: int = 0
    fan_out: int = 8

    def __post_init__(self) -> None:
        if self.attempt_cap < 1:
            raise ValueError("attempt_cap must be >= 1")


@dataclass(frozen=True)
class PairJudgment:
    item_id: str
    first: Distractor
    second: Distractor
    winner: Distractor
    reasoning: str
    attempts: int
    resolved_by: Resolution
    exchanges: tuple[int, ...] = ()
    prompt_digests: tuple[str, ...] = ()
    unparseable: int = 0

    @property
    def loser(self) -> Distractor:
        return self.second if self.winner is self.first else self.first

    @property
    def first_won(self) -> bool:
        return self.winner is self.first

    @property
    def all_unparseable(self) -> bool:
        return self.unparseable == 2 * self.attempts

    def to_record(self) -> dict:
        # call indices depend on thread scheduling, so the log keeps prompt digests instead
        return {
            "item_id": self.item_id,
            "first": self.first.text,
            "first_sha256": text_digest(self.first.text),
            "second": self.second.text,
            "second_sha256": text_digest(self.second.text),
            "winner": "first" if self.first_won else "second",
            "winner_text": self.winner.text,
            "attempts": self.attempts,
            "resolved_by": self.resolved_by.value,
            "unparseable_calls": self.unparseable,
            "prompt_sha256": list(self.prompt_digests),
            "reasoning": self.reasoning,
        }


def _fallback_pick(cfg: ProtocolConfig, item: McqItem, d1: Distractor, d2: Distractor) -> Distractor:
    # key on the sorted texts so the draw ignores argument order
    lo, hi = sorted((d1, d2), key=lambda d: d.key)
    rng = derive_rng(cfg.rng_seed, "fallback", item.id, lo.key, hi.key)
    return lo if rng.random() < 0.5 else hi


def judge_pair(
    item: McqItem,
    d1: Distractor,
    d2: Distractor,
    variant: RankerVariant | str,
    client: Client,
    cfg: ProtocolConfig,
) -> PairJudgment:
    """Decide which of two distractors students are more likely to pick."""
    if d1.key == d2.key:
        raise ValueError("cannot judge a distractor against itself")
    exchanges: list[int] = []
    digests: list[str] = []
    unparseable = 0
    reasoning = ""
    for attempt in range(1, cfg.attempt_cap + 1):
        picks: list[Distractor | None] = []
        first_reasoning = ""
        for a, b in ((d1, d2), (d2, d1)):
            prompt = render_ranker_prompt(variant, item.question, item.answer, a.text, b.text)
            exchange = client.chat(prompt, temperature=cfg.temperature)
            exchanges.append(exchange.call_index)
            digests.append(text_digest(prompt))
            try:
                parsed = parse_ranker_output(exchange.response_text)
            except ParseError as exc:
                logger.debug("unparseable ranker output on %s: %s", item.id, exc)
                unparseable += 1
                picks.append(None)
                continue
            if not picks:
                first_reasoning = parsed.reasoning
            picks.append(a if parsed.choice == "A" else b)
        reasoning = first_reasoning
        if picks[0] is not None and picks[0] is picks[1]:
            return PairJudgment(
                item.id, d1, d2, picks[0], reasoning, attempt, Resolution.AGREEMENT,
                tuple(exchanges), tuple(digests), unparseable,
            )
    winner = _fallback_pick(cfg, item, d1, d2)
    return PairJudgment(
        item.id, d1, d2, winner, reasoning, cfg.attempt_cap, Resolution.RANDOM_FALLBACK,
        tuple(exchanges), tuple(digests), unparseable,
    )


# --------------------------------------------------------------------------
# metrics


@dataclass
class AccuracyReport:
    per_subject: dict[str, float]
    overall: float
    subject_mean: float
    repetitions: int
    judgments: list[list[PairJudgment]]

    def to_record(self) -> dict:
        return {
            "per_subject": self.per_subject,
            "overall": self.overall,
            "subject_mean": self.subject_mean,
            "repetitions": self.repetitions,
        }


def rank_accuracy(
    pairs: Sequence[GroundTruthPair],
    items: Mapping[str, McqItem],
    variant: RankerVariant | str,
    client: Client,
    cfg: ProtocolConfig,
    repetitions: int = 1,
) -> AccuracyReport:
    """Fraction of pairs where the ranker picks the more selected distractor.

    ``overall`` pools all pairs; ``subject_mean`` averages the per-subject
    accuracies. Both are averaged over ``repetitions`` independent runs.
    """
    if not pairs:
        raise ValueError("no ground-truth pairs to evaluate")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    per_subject_runs: dict[str, list[float]] = defaultdict(list)
    overall_runs: list[float] = []
    all_judgments = []
    for rep in range(repetitions):
        rep_cfg = cfg if rep == 0 else replace(cfg, rng_seed=derive_seed(cfg.rng_seed, "repetition", rep))

        def one(pair: GroundTruthPair) -> PairJudgment:
            return judge_pair(items[pair.item_id], pair.d_high, pair.d_low, variant, client, rep_cfg)

        judgments = fan_out(one, list(pairs), cfg.fan_out)
        all_judgments.append(judgments)
        hits: dict[str, list[bool]] = defaultdict(list)
        for pair, j in zip(pairs, judgments):
            hits[items[pair.item_id].subject].append(j.winner is pair.d_high)
        for subject, flags in hits.items():
            per_subject_runs[subject].append(sum(flags) / len(flags))
        overall_runs.append(sum(sum(f) for f in hits.values()) / len(pairs))
    per_subject = {s: fmean(v) for s, v in sorted(per_subject_runs.items())}
    return AccuracyReport(
        per_subject=per_subject,
        overall=fmean(overall_runs),
        subject_mean=fmean(per_subject.values()),
        repetitions=repetitions,
        judgments=all_judgments,
    )


@dataclass
class ConsistencyReport:
    per_question: dict[str, float]
    per_subject: dict[str, float]
    subject_mean: float

    def to_record(self) -> dict:
        return {
            "per_question": self.per_question,
            "per_subject": self.per_subject,
            "subject_mean": self.subject_mean,
        }


def consistency_metric(judgments: Iterable[PairJudgment], items: Mapping[str, McqItem]) -> ConsistencyReport:
    """Mean attempts per question, then averaged per subject."""
    by_question: dict[str, list[int]] = defaultdict(list)
    for j in judgments:
        by_question[j.item_id].append(j.attempts)
    if not by_question:
        raise ValueError("no judgments given")
    per_question = {q: fmean(a) for q, a in by_question.items()}
    by_subject: dict[str, list[float]] = defaultdict(list)
    for q, mean_attempts in per_question.items():
        by_subject[items[q].subject].append(mean_attempts)
    per_subject = {s: fmean(v) for s, v in sorted(by_subject.items())}
    return ConsistencyReport(per_question, per_subject, fmean(per_subject.values()))


def round_robin_rank(
    item: McqItem,
    distractors: Sequence[Distractor],
    variant: RankerVariant | str,
    client: Client,
    cfg: ProtocolConfig,
    log: list[PairJudgment] | None = None,
) -> list[Distractor]:
    """Order distractors by pairwise wins; ties keep input order."""
    if len(distractors) < 2:
        raise ValueError("round robin needs at least two distractors")
    if len({d.key for d in distractors}) != len(distractors):
        raise ValueError("round robin needs distinct distractors")
    wins = [0] * len(distractors)
    for i, j in combinations(range(len(distractors)), 2):
        judgment = judge_pair(item, distractors[i], distractors[j], variant, client, cfg)
        wins[i if judgment.first_won else j] += 1
        if log is not None:
            log.append(judgment)
    order = sorted(range(len(distractors)), key=lambda k: (-wins[k], k))
    return [distractors[k] for k in order]


def write_judgments(path: str | Path, judgments: Iterable[PairJudgment]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for j in judgments:
            fh.write(json.dumps(j.to_record(), ensure_ascii=False) + "\n")


def read_judgment_records(path: str | Path) -> list[dict]:
    with Path(path).open(encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
