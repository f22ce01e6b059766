"""
Core pruning: user-threshold filtering, the stricter recursive k-core, and
retention accounting against the unpruned (0-core) log.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .dataset import InteractionLog, load_log, write_log

_log = logging.getLogger(__name__)


class PruneMode(str, Enum):
    USER = "user-threshold"
    RECURSIVE = "recursive-kcore"
    ITEM = "item-threshold"


@dataclass(frozen=True)
class CoresetDescriptor:
    """
    A pruned log plus its provenance.

    ``log`` is ``None`` when no entity met the threshold; such coresets are
    carried through multi-level runs and skipped downstream.
    """

    log: InteractionLog | None
    threshold_t: int
    parent_id: str
    mode: PruneMode = PruneMode.USER
    seed_chain: tuple = field(default_factory=tuple)

    @property
    def empty(self) -> bool:
        return self.log is None

    def metadata(self) -> dict:
        meta = {
            "threshold": self.threshold_t,
            "mode": self.mode.value,
            "parent_id": self.parent_id,
            "seed_chain": list(self.seed_chain),
            "empty": self.empty,
        }
        if self.log is not None:
            meta.update(
                n_interactions=self.log.n_interactions,
                n_users=self.log.n_users,
                n_items=self.log.n_items,
                log_id=self.log.fingerprint(),
            )
        return meta


@dataclass(frozen=True)
class RetentionReport:
    user_retention_pct: float
    item_retention_pct: float
    interaction_retention_pct: float


def _result(parent: InteractionLog, mask: np.ndarray, t: int, mode: PruneMode, seed_chain) -> CoresetDescriptor:
    pid = parent.fingerprint()
    if not mask.any():
        _log.warning("%s pruning at t=%d leaves no interactions", mode.value, t)
        return CoresetDescriptor(None, t, pid, mode, tuple(seed_chain))
    return CoresetDescriptor(parent.subset(mask), t, pid, mode, tuple(seed_chain))


def prune_users(parent: InteractionLog, t: int, *, seed_chain=()) -> CoresetDescriptor:
    """
    Keep every interaction of users with at least ``t`` interactions in
    ``parent``.  Items left without interactions disappear from the index
    maps.  ``t = 0`` returns the parent itself.
    """
    if t < 0:
        raise ValueError("threshold must be non-negative")
    mask = parent.per_user_counts[parent.users] >= t
    return _result(parent, mask, t, PruneMode.USER, seed_chain)


def prune_items(parent: InteractionLog, t: int, *, seed_chain=()) -> CoresetDescriptor:
    "Transposed :func:`prune_users`: keep interactions with items of count >= ``t``."
    if t < 0:
        raise ValueError("threshold must be non-negative")
    mask = parent.per_item_counts[parent.items] >= t
    return _result(parent, mask, t, PruneMode.ITEM, seed_chain)


def prune_recursive(parent: InteractionLog, t: int, *, seed_chain=()) -> CoresetDescriptor:
    """
    Recursive k-core: repeatedly drop users and items with fewer than ``t``
    interactions until every remaining entity meets the threshold.
    """
    if t < 1:
        raise ValueError("recursive pruning needs t >= 1")
    users, items = parent.users, parent.items
    mask = np.ones(parent.n_interactions, dtype=bool)
    while True:
        uc = np.bincount(users[mask], minlength=parent.n_users)
        ic = np.bincount(items[mask], minlength=parent.n_items)
        new = mask & (uc[users] >= t) & (ic[items] >= t)
        if np.array_equal(new, mask):
            break
        mask = new
    return _result(parent, mask, t, PruneMode.RECURSIVE, seed_chain)


def prune(parent: InteractionLog, t: int, mode: PruneMode | str = PruneMode.USER, *, seed_chain=()) -> CoresetDescriptor:
    mode = PruneMode(mode)
    if t == 0:
        return CoresetDescriptor(parent, 0, parent.fingerprint(), mode, tuple(seed_chain))
    if mode is PruneMode.USER:
        return prune_users(parent, t, seed_chain=seed_chain)
    if mode is PruneMode.ITEM:
        return prune_items(parent, t, seed_chain=seed_chain)
    return prune_recursive(parent, t, seed_chain=seed_chain)


def retention_pct(kept: int, total: int) -> float:
    "Share of ``total`` that survived, in percent."
    if total <= 0:
        raise ValueError("total must be positive")
    if not 0 <= kept <= total:
        raise ValueError("kept must lie between 0 and total")
    return 100.0 * kept / total


def retention(core: CoresetDescriptor | InteractionLog | None, baseline: InteractionLog) -> RetentionReport:
    "Percent of the baseline's users, items and interactions present in ``core``."
    if baseline is None or baseline.n_interactions == 0:
        raise ValueError("baseline log is empty")
    log = core.log if isinstance(core, CoresetDescriptor) else core
    if log is None:
        return RetentionReport(0.0, 0.0, 0.0)
    return RetentionReport(
        retention_pct(log.n_users, baseline.n_users),
        retention_pct(log.n_items, baseline.n_items),
        retention_pct(log.n_interactions, baseline.n_interactions),
    )


def save_coreset(core: CoresetDescriptor, out_dir: str | os.PathLike) -> Path:
    """
    Write ``interactions.csv`` and ``meta.json`` under ``out_dir``.  Empty
    coresets get only the metadata file.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if core.log is not None:
        write_log(core.log, out / "interactions.csv")
    with open(out / "meta.json", "w") as f:
        json.dump(core.metadata(), f, indent=2, sort_keys=True)
        f.write("\n")
    return out


def load_coreset(in_dir: str | os.PathLike) -> CoresetDescriptor:
    d = Path(in_dir)
    with open(d / "meta.json") as f:
        meta = json.load(f)
    log = None if meta.get("empty") else load_log(d / "interactions.csv")
    return CoresetDescriptor(
        log, int(meta["threshold"]), meta["parent_id"], PruneMode(meta["mode"]), tuple(meta.get("seed_chain", ()))
    )
