"""Distractor generation from configured sources, with validity filtering."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

from .client import Client
from .core import Distractor, McqItem, Origin
from .errors import ParseError
from .prompts import (
    KnnExample,
    parse_generator_output,
    parse_knn_output,
    render_generator_prompt,
    render_knn_prompt,
)
from .ranker import ProtocolConfig
from .scd import check_distractor_validity
from .similarity import knn_retrieve

logger = logging.getLogger(__name__)


class PromptKind(str, Enum):
    STANDARD = "standard"
    KNN_BASELINE = "knn-baseline"


@dataclass
class GeneratorSource:
    name: str
    client: Client
    prompt_kind: PromptKind = PromptKind.STANDARD
    knn_pool: Sequence[McqItem] = ()
    embedder: Client | None = None

    def __post_init__(self) -> None:
        self.prompt_kind = PromptKind(self.prompt_kind)
        if not self.name:
            raise ValueError("source name must be non-empty")
        if self.prompt_kind is PromptKind.KNN_BASELINE:
            if self.embedder is None:
                raise ValueError(f"kNN source {self.name!r} needs an embedding backend")
            # in-context examples must show three distractors each
            self.knn_pool = [p for p in self.knn_pool if len(p.distractors) >= 3]

    def prompt_for(self, item: McqItem, n: int) -> tuple[str, int]:
        """Rendered prompt and the number of distractors it asks for."""
        if self.prompt_kind is PromptKind.STANDARD:
            return render_generator_prompt(item.question, item.answer, n), n
        neighbours = knn_retrieve(item, self.knn_pool, self.embedder, k=3)
        examples = [KnnExample.from_item(p) for p in neighbours]
        return render_knn_prompt(examples, item.question, item.answer), 3

    def parse(self, text: str, n: int):
        if self.prompt_kind is PromptKind.STANDARD:
            return parse_generator_output(text, n)
        return parse_knn_output(text, n)


@dataclass
class GenerationResult:
    source: str
    item_id: str
    distractors: list[Distractor]
    n_requested: int
    rounds: int
    rejected: list[str] = field(default_factory=list)

    @property
    def shortfall(self) -> bool:
        return len(self.distractors) < self.n_requested

    @property
    def texts(self) -> list[str]:
        return [d.text for d in self.distractors]

    def to_record(self) -> dict:
        return {
            "source": self.source,
            "item_id": self.item_id,
            "distractors": self.texts,
            "n_requested": self.n_requested,
            "shortfall": self.shortfall,
            "rounds": self.rounds,
            "rejected": self.rejected,
        }


def generate_distractors(
    source: GeneratorSource,
    item: McqItem,
    n: int,
    *,
    validity: Client | None,
    cfg: ProtocolConfig,
    temperature: float | None = None,
    max_rounds: int = 3,
) -> GenerationResult:
    """Collect up to ``n`` valid, distinct distractors in at most ``max_rounds`` calls.

    Pass ``validity=None`` to skip the validity judge. Transport errors
    propagate; an unparseable reply just uses up its round.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    prompt, asked = source.prompt_for(item, n)
    answer = item.answer.strip()
    kept: list[Distractor] = []
    seen: set[str] = {answer}
    rejected: list[str] = []
    rounds = 0
    while len(kept) < n and rounds < max_rounds:
        rounds += 1
        text = source.client.chat_complete(prompt, temperature=temperature)
        try:
            parsed = source.parse(text, asked)
        except ParseError as exc:
            logger.warning("%s output for %s unparseable: %s", source.name, item.id, exc)
            continue
        for candidate in parsed.distractors:
            if len(kept) >= n:
                break
            key = candidate.strip()
            if key in seen:
                continue
            seen.add(key)
            if validity is not None and not check_distractor_validity(item, key, validity, cfg):
                rejected.append(key)
                continue
            kept.append(Distractor(key, Origin.MODEL, source=source.name))
    result = GenerationResult(source.name, item.id, kept, n, rounds, rejected)
    if result.shortfall:
        logger.info("%s produced %d/%d valid distractors for %s", source.name, len(kept), n, item.id)
    return result


@dataclass
class ValidityCell:
    valid: int
    total: int

    @property
    def rate(self) -> float:
        return self.valid / self.total


def validity_rate(
    outputs: Mapping[str, Mapping[str, Sequence[str]]],
    items: Mapping[str, McqItem],
    validity: Client,
    cfg: ProtocolConfig,
) -> dict[str, dict[str, dict[str, ValidityCell]]]:
    """Share of usable distractors per source, split by polarity then kind.

    Cells without any distractor are absent rather than zero.
    """
    report: dict[str, dict[str, dict[str, ValidityCell]]] = {}
    for source in sorted(outputs):
        cells: dict[tuple[str, str], ValidityCell] = defaultdict(lambda: ValidityCell(0, 0))
        for item_id, texts in outputs[source].items():
            item = items[item_id]
            for text in texts:
                cell = cells[(item.polarity.value, item.kind.value)]
                cell.total += 1
                cell.valid += check_distractor_validity(item, text, validity, cfg)
        nested: dict[str, dict[str, ValidityCell]] = defaultdict(dict)
        for (polarity, kind), cell in sorted(cells.items()):
            nested[polarity][kind] = cell
        report[source] = dict(nested)
    return report
