"""
Structural and distributional statistics of an interaction log.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from numpy.typing import ArrayLike

from .dataset import InteractionLog

#: column order of the coreset characteristics table
TABLE_COLUMNS = (
    "n_interactions",
    "n_users",
    "n_items",
    "avg_int_per_user",
    "avg_int_per_item",
    "space_size",
    "shape",
    "sparsity",
    "gini_user",
    "gini_item",
)


@dataclass(frozen=True)
class CharacteristicsReport:
    n_interactions: int
    n_users: int
    n_items: int
    space_size: int
    shape: float
    density: float
    sparsity: float
    avg_int_per_user: float
    avg_int_per_item: float
    gini_user: float | None = None
    gini_item: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def derive_stats(n_interactions: int, n_users: int, n_items: int) -> CharacteristicsReport:
    """
    Statistics that depend only on the three totals.  Gini fields are left
    unset.
    """
    n_interactions, n_users, n_items = int(n_interactions), int(n_users), int(n_items)
    if min(n_interactions, n_users, n_items) < 1:
        raise ValueError("interaction, user and item counts must all be positive")
    # python ints are unbounded; full-scale products exceed 32 bits
    space = n_users * n_items
    density = n_interactions / space
    return CharacteristicsReport(
        n_interactions=n_interactions,
        n_users=n_users,
        n_items=n_items,
        space_size=space,
        shape=n_users / n_items,
        density=density,
        sparsity=1.0 - density,
        avg_int_per_user=n_interactions / n_users,
        avg_int_per_item=n_interactions / n_items,
    )


def gini(counts: ArrayLike) -> float:
    """
    Gini coefficient of per-entity interaction counts.

    Counts are sorted ascending and weighted by ``(n + 1 - rank) / (n + 1)``;
    the result is 0 for a uniform vector and approaches ``1 - 2/(n+1)`` when
    one entity dominates.
    """
    xs = np.sort(np.asarray(counts, dtype=np.float64))
    n = len(xs)
    if n == 0:
        raise ValueError("gini of an empty count vector")
    if xs[0] <= 0:
        raise ValueError("counts must be positive")
    weights = (n - np.arange(n, dtype=np.float64)) / (n + 1)
    g = 1.0 - 2.0 * np.dot(weights, xs) / xs.sum()
    # uniform vectors land within rounding of zero on either side
    return max(float(g), 0.0) if abs(g) < 1e-12 else float(g)


def characterize(log: InteractionLog) -> CharacteristicsReport:
    base = derive_stats(log.n_interactions, log.n_users, log.n_items)
    return CharacteristicsReport(
        **{
            **base.to_dict(),
            "gini_user": gini(log.per_user_counts),
            "gini_item": gini(log.per_item_counts),
        }
    )


def table_row(report: CharacteristicsReport) -> dict:
    """
    Row for the characteristics table, rounded for display: averages, shape
    and Gini to 2 decimals, sparsity as a percentage to 4 decimals.
    """
    return {
        "n_interactions": report.n_interactions,
        "n_users": report.n_users,
        "n_items": report.n_items,
        "avg_int_per_user": f"{report.avg_int_per_user:.2f}",
        "avg_int_per_item": f"{report.avg_int_per_item:.2f}",
        "space_size": report.space_size,
        "shape": f"{report.shape:.2f}",
        "sparsity": f"{100 * report.sparsity:.4f}%",
        "gini_user": "" if report.gini_user is None else f"{report.gini_user:.2f}",
        "gini_item": "" if report.gini_item is None else f"{report.gini_item:.2f}",
    }
