"""Embedding cosine reports and nearest-neighbour retrieval."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .client import Client, EmbeddingVector
from .core import McqItem


def cosine(u, v) -> float:
    a = u.as_array() if isinstance(u, EmbeddingVector) else np.asarray(u, dtype=float)
    b = v.as_array() if isinstance(v, EmbeddingVector) else np.asarray(v, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine undefined for a zero-norm vector")
    return float(np.dot(a, b) / (na * nb))


@dataclass(frozen=True)
class MeanVariance:
    mean: float
    variance: float
    count: int

    def to_record(self) -> dict:
        return {"mean": self.mean, "variance": self.variance, "count": self.count}


def _mean_var(values: Sequence[float]) -> MeanVariance:
    arr = np.asarray(values, dtype=float)
    return MeanVariance(float(arr.mean()), float(arr.var()), len(arr))


def embedding_similarity_report(
    outputs: Mapping[str, Mapping[str, Sequence[str]]],
    items: Mapping[str, McqItem],
    embedder: Client,
) -> dict[str, dict[str, MeanVariance]]:
    """Cosine(answer, distractor) per source and subject, with population variance.

    ``outputs`` maps source name -> item id -> distractor texts.
    """
    texts: list[str] = []
    for per_item in outputs.values():
        for item_id, distractors in per_item.items():
            texts.append(items[item_id].answer)
            texts.extend(distractors)
    unique = list(dict.fromkeys(texts))
    vectors = dict(zip(unique, embedder.embed_texts(unique)))

    report: dict[str, dict[str, MeanVariance]] = {}
    for source in sorted(outputs):
        by_subject: dict[str, list[float]] = defaultdict(list)
        for item_id, distractors in outputs[source].items():
            item = items[item_id]
            for text in distractors:
                by_subject[item.subject].append(cosine(vectors[item.answer], vectors[text]))
        report[source] = {s: _mean_var(v) for s, v in sorted(by_subject.items())}
    return report


def knn_text(item: McqItem) -> str:
    return f"{item.question}\n{item.answer}"


def knn_retrieve(target: McqItem, pool: Sequence[McqItem], embedder: Client, k: int = 3) -> list[McqItem]:
    """The ``k`` pool items closest to ``target``; equal scores keep pool order."""
    candidates = [p for p in pool if p.id != target.id]
    if len(candidates) < k:
        raise ValueError(f"pool has {len(candidates)} candidate(s), need {k}")
    vectors = embedder.embed_texts([knn_text(target)] + [knn_text(p) for p in candidates])
    query = vectors[0]
    scores = [cosine(query, v) for v in vectors[1:]]
    order = sorted(range(len(candidates)), key=lambda i: (-scores[i], i))
    return [candidates[i] for i in order[:k]]
