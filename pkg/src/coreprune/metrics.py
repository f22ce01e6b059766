"""
Binary-relevance top-k ranking metrics.
"""

from __future__ import annotations

from collections.abc import Collection, Sequence
from dataclasses import dataclass

import numpy as np

METRIC_KINDS = ("ndcg", "precision", "recall")


@dataclass(frozen=True)
class MetricSpec:
    kind: str
    k: int = 10

    def __post_init__(self):
        if self.kind not in METRIC_KINDS:
            raise ValueError(f"unknown metric {self.kind!r}")
        if self.k < 1:
            raise ValueError("k must be at least 1")

    @property
    def label(self) -> str:
        return f"{self.kind}@{self.k}"

    @classmethod
    def parse(cls, text: str, default_k: int = 10) -> MetricSpec:
        "Parse ``ndcg`` or ``ndcg@10``."
        kind, _, k = text.partition("@")
        return cls(kind.strip().lower(), int(k) if k else default_k)

    def __call__(self, recommended: Sequence, relevant: Collection) -> float:
        return METRICS[self.kind](recommended, relevant, self.k)


def _check(relevant):
    if len(relevant) == 0:
        raise ValueError("relevant set is empty")


def _discount(n: int) -> np.ndarray:
    return 1.0 / np.log2(np.arange(2, n + 2))


def ndcg_at_k(recommended: Sequence, relevant: Collection, k: int = 10) -> float:
    """
    Normalized discounted cumulative gain with binary gains: a relevant item
    at rank ``r`` contributes ``1 / log2(r + 1)``; the ideal list puts
    ``min(|relevant|, k)`` relevant items first.
    """
    _check(relevant)
    rel = set(relevant)
    top = list(recommended)[:k]
    disc = _discount(k)
    hits = np.array([r for r, item in enumerate(top) if item in rel], dtype=np.intp)
    # same summation path for both sums, so a perfect list gives exactly 1
    dcg = disc[hits].sum()
    idcg = disc[: min(len(rel), k)].sum()
    return min(float(dcg / idcg), 1.0)


def precision_at_k(recommended: Sequence, relevant: Collection, k: int = 10) -> float:
    "Hits in the top ``k`` divided by ``k``, even when fewer than ``k`` items were recommended."
    _check(relevant)
    rel = set(relevant)
    return sum(1 for item in list(recommended)[:k] if item in rel) / k


def recall_at_k(recommended: Sequence, relevant: Collection, k: int = 10) -> float:
    _check(relevant)
    rel = set(relevant)
    return sum(1 for item in list(recommended)[:k] if item in rel) / len(rel)


METRICS = {"ndcg": ndcg_at_k, "precision": precision_at_k, "recall": recall_at_k}


def aggregate(values: Sequence[float]) -> float:
    "Unweighted mean over evaluated users."
    if len(values) == 0:
        raise ValueError("no users to aggregate")
    return float(np.mean(np.asarray(values, dtype=np.float64)))
