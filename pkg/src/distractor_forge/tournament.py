"""Head-to-head plausibility tournaments between two generator sources."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping, Sequence

from .client import Client, fan_out
from .core import Distractor, McqItem
from .generation import GenerationResult, GeneratorSource, generate_distractors
from .prompts import RankerVariant
from .ranker import PairJudgment, ProtocolConfig, judge_pair, round_robin_rank
from .seeding import derive_seed

logger = logging.getLogger(__name__)


class Setting(str, Enum):
    A = "A"
    B = "B"


@dataclass(frozen=True)
class TournamentSettings:
    n_a: int = 3
    n_b: int = 5
    keep_b: int = 3
    temperature_b: float = 1.0
    max_rounds: int = 3


@dataclass
class Tally:
    wins_x: float = 0
    wins_y: float = 0
    q_win_x: float = 0
    q_tie: float = 0
    q_win_y: float = 0

    def add(self, other: "Tally") -> None:
        for name in ("wins_x", "wins_y", "q_win_x", "q_tie", "q_win_y"):
            setattr(self, name, getattr(self, name) + getattr(other, name))

    def scaled(self, factor: float) -> "Tally":
        return Tally(self.wins_x * factor, self.wins_y * factor, self.q_win_x * factor,
                     self.q_tie * factor, self.q_win_y * factor)

    def transposed(self) -> "Tally":
        return Tally(self.wins_y, self.wins_x, self.q_win_y, self.q_tie, self.q_win_x)

    @property
    def per_distractor(self) -> dict:
        # a win for one side is a loss for the other
        return {"wins_x": self.wins_x, "loses_x": self.wins_y, "wins_y": self.wins_y, "loses_y": self.wins_x}

    @property
    def per_question(self) -> dict:
        return {"win_x": self.q_win_x, "tie": self.q_tie, "win_y": self.q_win_y}


@dataclass
class QuestionOutcome:
    item_id: str
    subject: str
    x: list[str]
    y: list[str]
    excluded: list[str]
    points_x: int
    points_y: int
    judgments: list[PairJudgment] = field(default_factory=list, repr=False)

    @property
    def comparisons(self) -> int:
        return len(self.x) * len(self.y)

    @property
    def outcome(self) -> str:
        if self.points_x > self.points_y:
            return "x"
        if self.points_y > self.points_x:
            return "y"
        return "tie"

    def tally(self) -> Tally:
        return Tally(self.points_x, self.points_y, self.outcome == "x", self.outcome == "tie", self.outcome == "y")

    def to_record(self) -> dict:
        return {
            "item_id": self.item_id,
            "subject": self.subject,
            "x": self.x,
            "y": self.y,
            "excluded": self.excluded,
            "points_x": self.points_x,
            "points_y": self.points_y,
            "outcome": self.outcome,
        }


@dataclass
class TournamentReport:
    source_x: str
    source_y: str
    setting: Setting
    total: Tally
    per_subject: dict[str, Tally]
    skipped: list[dict]
    questions: list[list[QuestionOutcome]]
    repetitions: int = 1

    @property
    def per_distractor(self) -> dict:
        return self.total.per_distractor

    @property
    def per_question(self) -> dict:
        return self.total.per_question

    def to_record(self) -> dict:
        return {
            "source_x": self.source_x,
            "source_y": self.source_y,
            "setting": self.setting.value,
            "repetitions": self.repetitions,
            "per_distractor": self.per_distractor,
            "per_question": self.per_question,
            "per_subject": {
                s: {"per_distractor": t.per_distractor, "per_question": t.per_question}
                for s, t in self.per_subject.items()
            },
            "skipped": self.skipped,
        }


def _dedupe_side(ds: Sequence[Distractor]) -> list[Distractor]:
    out, seen = [], set()
    for d in ds:
        if d.key not in seen:
            seen.add(d.key)
            out.append(d)
    return out


def score_question(
    item: McqItem,
    xs: Sequence[Distractor],
    ys: Sequence[Distractor],
    setting: Setting,
    variant: RankerVariant | str,
    ranker: Client,
    cfg: ProtocolConfig,
    keep_b: int = 3,
) -> QuestionOutcome:
    """Exclude shared texts, trim Setting B sides to their top ``keep_b``, judge every cross pair."""
    xs, ys = _dedupe_side(xs), _dedupe_side(ys)
    shared = {d.key for d in xs} & {d.key for d in ys}
    xs = [d for d in xs if d.key not in shared]
    ys = [d for d in ys if d.key not in shared]
    judgments: list[PairJudgment] = []
    if Setting(setting) is Setting.B:
        xs = _top(item, xs, keep_b, variant, ranker, cfg, judgments)
        ys = _top(item, ys, keep_b, variant, ranker, cfg, judgments)
    points_x = points_y = 0
    for x in xs:
        for y in ys:
            j = judge_pair(item, x, y, variant, ranker, cfg)
            judgments.append(j)
            if j.first_won:
                points_x += 1
            else:
                points_y += 1
    excluded = sorted(shared)
    return QuestionOutcome(item.id, item.subject, [d.text for d in xs], [d.text for d in ys], excluded,
                           points_x, points_y, judgments)


def _top(item, ds, keep, variant, ranker, cfg, log) -> list[Distractor]:
    if len(ds) <= keep:
        return list(ds)
    return round_robin_rank(item, ds, variant, ranker, cfg, log)[:keep]


def tournament_from_outputs(
    source_x: str,
    source_y: str,
    outputs_x: Mapping[str, Sequence[Distractor]],
    outputs_y: Mapping[str, Sequence[Distractor]],
    items: Sequence[McqItem],
    setting: Setting | str,
    variant: RankerVariant | str,
    ranker: Client,
    cfg: ProtocolConfig,
    keep_b: int = 3,
) -> tuple[list[QuestionOutcome], list[dict]]:
    """Score already generated distractors. Questions come back in item order.

    A question is skipped when a source produced nothing for it. Sides
    emptied only by the identical-text exclusion still count, as a tie.
    """
    setting = Setting(setting)
    scored: list[McqItem] = []
    skipped: list[dict] = []
    for item in items:
        missing = [name for name, out in ((source_x, outputs_x), (source_y, outputs_y)) if not out.get(item.id)]
        if missing:
            skipped.append({"item_id": item.id, "reason": f"no distractors from {', '.join(missing)}"})
            continue
        scored.append(item)

    def one(item: McqItem) -> QuestionOutcome:
        return score_question(item, outputs_x[item.id], outputs_y[item.id], setting, variant, ranker, cfg, keep_b)

    return fan_out(one, scored, cfg.fan_out), skipped


def _generate_all(source, items, n, temperature, validity, cfg, max_rounds) -> dict[str, GenerationResult]:
    def one(item):
        return generate_distractors(source, item, n, validity=validity, cfg=cfg,
                                    temperature=temperature, max_rounds=max_rounds)

    return {r.item_id: r for r in fan_out(one, list(items), cfg.fan_out)}


def plausibility_tournament(
    source_x: GeneratorSource,
    source_y: GeneratorSource,
    items: Sequence[McqItem],
    setting: Setting | str,
    variant: RankerVariant | str,
    ranker: Client,
    cfg: ProtocolConfig,
    *,
    validity: Client | None,
    settings: TournamentSettings = TournamentSettings(),
    repetitions: int = 1,
) -> TournamentReport:
    """Generate with both sources, then score every question.

    Setting A asks each source for ``n_a`` distractors at its default
    temperature. Setting B asks for ``n_b`` at ``temperature_b`` and keeps
    each side's ``keep_b`` best by round robin. Tallies are averaged over
    ``repetitions`` runs with derived seeds.
    """
    if source_x.name == source_y.name:
        raise ValueError("the two sources need distinct names")
    if not items:
        raise ValueError("no items to evaluate")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    setting = Setting(setting)
    n, temperature = (settings.n_a, None) if setting is Setting.A else (settings.n_b, settings.temperature_b)

    total = Tally()
    per_subject: dict[str, Tally] = defaultdict(Tally)
    all_questions: list[list[QuestionOutcome]] = []
    skipped: list[dict] = []
    for rep in range(repetitions):
        rep_cfg = cfg if rep == 0 else replace(cfg, rng_seed=derive_seed(cfg.rng_seed, "repetition", rep))
        gen_x = _generate_all(source_x, items, n, temperature, validity, rep_cfg, settings.max_rounds)
        gen_y = _generate_all(source_y, items, n, temperature, validity, rep_cfg, settings.max_rounds)
        questions, rep_skipped = tournament_from_outputs(
            source_x.name, source_y.name,
            {k: v.distractors for k, v in gen_x.items()},
            {k: v.distractors for k, v in gen_y.items()},
            items, setting, variant, ranker, rep_cfg, settings.keep_b,
        )
        all_questions.append(questions)
        skipped.extend(dict(s, repetition=rep) for s in rep_skipped)
        for q in questions:
            t = q.tally()
            total.add(t)
            per_subject[q.subject].add(t)
    scale = 1 / repetitions
    return TournamentReport(
        source_x.name, source_y.name, setting,
        total.scaled(scale),
        {s: t.scaled(scale) for s, t in sorted(per_subject.items())},
        skipped, all_questions, repetitions,
    )


def report_from_questions(source_x: str, source_y: str, setting: Setting | str,
                          questions: Sequence[QuestionOutcome], skipped: Sequence[dict] = ()) -> TournamentReport:
    """Aggregate one run's question outcomes into a report."""
    total = Tally()
    per_subject: dict[str, Tally] = defaultdict(Tally)
    for q in questions:
        t = q.tally()
        total.add(t)
        per_subject[q.subject].add(t)
    return TournamentReport(source_x, source_y, Setting(setting), total,
                            dict(sorted(per_subject.items())), list(skipped), [list(questions)])
