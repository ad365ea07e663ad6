"""Item discrimination for generated distractors.

Each generated distractor is its own test item. A student answers that
item correctly when they do not pick the distractor.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from statistics import fmean
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class ResponseItem:
    question_id: str
    distractor_id: str
    source: str


@dataclass
class StudentResponseMatrix:
    students: list[str]
    items: list[ResponseItem]
    selected: np.ndarray  # bool, students x items
    scores: np.ndarray  # per-student average correctness

    def __post_init__(self) -> None:
        self.selected = np.asarray(self.selected, dtype=bool)
        self.scores = np.asarray(self.scores, dtype=float)
        self.items = [it if isinstance(it, ResponseItem) else ResponseItem(*it) for it in self.items]
        if self.selected.shape != (len(self.students), len(self.items)):
            raise ValueError(
                f"selected has shape {self.selected.shape}, expected {(len(self.students), len(self.items))}"
            )
        if self.scores.shape != (len(self.students),):
            raise ValueError("one score per student required")
        if len(set(self.students)) != len(self.students):
            raise ValueError("student ids must be unique")

    @classmethod
    def from_selections(cls, students: Sequence[str], items: Sequence, selected) -> "StudentResponseMatrix":
        """Score each student as the share of items answered correctly."""
        sel = np.asarray(selected, dtype=bool)
        scores = (~sel).mean(axis=1) if sel.size else np.zeros(len(students))
        return cls(list(students), list(items), sel, scores)


@dataclass
class DiscriminationReport:
    per_item: list[float]
    per_source: dict[str, float]
    group_size: int

    def to_record(self) -> dict:
        return {"per_item": self.per_item, "per_source": self.per_source, "group_size": self.group_size}


def _ranked_students(matrix: StudentResponseMatrix) -> list[int]:
    return sorted(range(len(matrix.students)), key=lambda i: (-matrix.scores[i], matrix.students[i]))


def _groups(matrix: StudentResponseMatrix, cutoff: float) -> tuple[list[int], list[int], int]:
    if not 0 < cutoff <= 0.5:
        raise ValueError("cutoff must be in (0, 0.5]")
    if len(matrix.students) < 2:
        raise ValueError("need at least two students")
    # rounding first keeps e.g. 0.29 * 100 from flooring to 28
    size = math.floor(round(cutoff * len(matrix.students), 9))
    if size == 0:
        raise ValueError(f"cutoff {cutoff} leaves empty groups for {len(matrix.students)} students")
    order = _ranked_students(matrix)
    return order[:size], order[-size:], size


def _per_source(matrix: StudentResponseMatrix, values: Sequence[float]) -> dict[str, float]:
    by_source: dict[str, list[float]] = defaultdict(list)
    for item, v in zip(matrix.items, values):
        by_source[item.source].append(v)
    return {s: fmean(v) for s, v in sorted(by_source.items())}


def discrimination_index(matrix: StudentResponseMatrix, cutoff: float = 0.27) -> DiscriminationReport:
    """DI = (U - L) / N over the top and bottom ``floor(cutoff * S)`` students.

    Score ties are broken by student id, so the result does not depend on
    the row order of the matrix.
    """
    upper, lower, size = _groups(matrix, cutoff)
    correct = ~matrix.selected
    u = correct[upper].sum(axis=0)
    lo = correct[lower].sum(axis=0)
    per_item = [float(x) for x in (u - lo) / size]
    return DiscriminationReport(per_item, _per_source(matrix, per_item), size)


@dataclass
class GroupSelectionReport:
    upper: list[int]
    lower: list[int]
    per_source: dict[str, dict[str, float]]
    group_size: int

    def to_record(self) -> dict:
        return {"upper": self.upper, "lower": self.lower, "per_source": self.per_source,
                "group_size": self.group_size}


def group_selection_counts(matrix: StudentResponseMatrix, cutoff: float = 0.5) -> GroupSelectionReport:
    """How many upper- and lower-group students picked each distractor."""
    upper, lower, size = _groups(matrix, cutoff)
    up = [int(x) for x in matrix.selected[upper].sum(axis=0)]
    low = [int(x) for x in matrix.selected[lower].sum(axis=0)]
    by_source: dict[str, dict[str, list[int]]] = defaultdict(lambda: {"upper": [], "lower": []})
    for item, a, b in zip(matrix.items, up, low):
        by_source[item.source]["upper"].append(a)
        by_source[item.source]["lower"].append(b)
    per_source = {s: {"upper": fmean(v["upper"]), "lower": fmean(v["lower"])} for s, v in sorted(by_source.items())}
    return GroupSelectionReport(up, low, per_source, size)
