"""
Train/test construction for both evaluation phases.

Phase 1 holds out a per-user fraction of a coreset's own interactions.
Phase 2 keeps the phase-1 training set and draws a size-matched test set
from the unpruned log, disjoint from that training set.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from pathlib import Path

import numpy as np

from .dataset import EmptyLogError, InteractionLog, LogFormat, read_log
from .rng import make_rng


class Phase(str, Enum):
    PHASE1 = "phase1"
    PHASE2 = "phase2"


@dataclass(frozen=True)
class SplitPair:
    """
    Disjoint train and test logs.  ``test`` may be ``None`` when no user had
    enough interactions to hold any out.
    """

    train: InteractionLog
    test: InteractionLog | None
    phase: Phase
    core_t: int
    seed: int

    def __post_init__(self):
        if self.test is not None:
            tk = self.test.pair_keys(self.train.user_tokens, self.train.item_tokens)
            trk = self.train.pair_keys(self.train.user_tokens, self.train.item_tokens)
            if np.isin(tk[tk >= 0], trk).any():
                raise AssertionError("train and test sets overlap")

    def metadata(self) -> dict:
        return {
            "phase": self.phase.value,
            "core_t": self.core_t,
            "seed": self.seed,
            "n_train": self.train.n_interactions,
            "n_test": 0 if self.test is None else self.test.n_interactions,
        }


def holdout_count(n: int, train_fraction: float) -> int:
    """
    Number of a user's ``n`` interactions held out for testing: the test
    share rounded half-up, then clamped so the train side keeps at least one
    row.
    """
    if n <= 1:
        return 0
    share = (1 - Fraction(str(train_fraction))) * n
    rounded = math.floor(share + Fraction(1, 2))
    return min(rounded, n - 1)


def split_per_user(log: InteractionLog, train_fraction: float = 0.8, seed: int = 0, *, core_t: int = 0) -> SplitPair:
    """
    Hold out a uniformly random ``1 - train_fraction`` share of each
    user's interactions (see :func:`holdout_count` for rounding).
    """
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    counts = log.per_user_counts
    table = {int(n): holdout_count(int(n), train_fraction) for n in np.unique(counts)}
    n_test = np.array([table[int(n)] for n in counts], dtype=np.int64)

    rng = make_rng(seed, "split", "phase1")
    keys = rng.random(log.n_interactions)
    # rank of each interaction among its user's rows in random-key order
    order = np.lexsort((keys, log.users))
    rank = np.empty(log.n_interactions, dtype=np.int64)
    rank[order] = np.arange(log.n_interactions) - log.user_offsets[log.users[order]]
    is_test = rank < n_test[log.users]

    train = log.subset(~is_test)
    try:
        test = log.subset(is_test)
    except EmptyLogError:
        test = None
    pair = SplitPair(train, test, Phase.PHASE1, core_t, seed)
    n_union = train.n_interactions + (0 if test is None else test.n_interactions)
    if n_union != log.n_interactions:
        raise AssertionError("phase-1 train and test do not partition the coreset")
    return pair


def build_phase2_test(zero_core: InteractionLog, pruned_train: InteractionLog, target_size: int, seed: int = 0) -> InteractionLog:
    """
    Sample ``min(target_size, |candidates|)`` interactions uniformly from
    the unpruned log minus the pruned training set.
    """
    if target_size < 1:
        raise ValueError("target_size must be at least 1")
    train_keys = pruned_train.pair_keys(zero_core.user_tokens, zero_core.item_tokens)
    zkeys = zero_core.users * zero_core.n_items + zero_core.items
    candidates = np.flatnonzero(~np.isin(zkeys, train_keys[train_keys >= 0]))
    if len(candidates) == 0:
        raise ValueError("no phase-2 candidates: the unpruned log has nothing outside the training set")
    if target_size >= len(candidates):
        chosen = candidates
    else:
        rng = make_rng(seed, "split", "phase2")
        chosen = rng.choice(candidates, size=target_size, replace=False)
    mask = np.zeros(zero_core.n_interactions, dtype=bool)
    mask[chosen] = True
    return zero_core.subset(mask)


def split_phase2(phase1: SplitPair, zero_core: InteractionLog, seed: int | None = None) -> SplitPair:
    "Pair a phase-1 training set with a size-matched phase-2 test set."
    if phase1.test is None:
        raise ValueError("phase-1 split has no test rows to size-match")
    seed = phase1.seed if seed is None else seed
    test = build_phase2_test(zero_core, phase1.train, phase1.test.n_interactions, seed)
    return SplitPair(phase1.train, test, Phase.PHASE2, phase1.core_t, seed)


ATOMIC_HEADER = "user_id:token\titem_id:token\tlabel:float"
ATOMIC_FORMAT = LogFormat(("user", "item", "label"), "\t", header=True, quoting=False)


def _write_atomic(log: InteractionLog, path: Path):
    ut = log.user_tokens[log.users].tolist()
    it = log.item_tokens[log.items].tolist()
    for tok in (*log.user_tokens.tolist(), *log.item_tokens.tolist()):
        if any(c in tok for c in "\t\r\n"):
            raise ValueError(f"token {tok!r} contains a tab or newline")
    with open(path, "w", encoding="utf-8", errors="surrogateescape", newline="") as f:
        f.write(ATOMIC_HEADER + "\n")
        for u, i in zip(ut, it):
            f.write(f"{u}\t{i}\t1.0\n")


def export_atomic(pair: SplitPair, out_dir: str | os.PathLike, name: str = "dataset") -> list[Path]:
    """
    Write ``<name>.train.inter`` and ``<name>.test.inter`` (tab-separated
    atomic files) plus a ``<name>.split.json`` sidecar.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / f"{name}.train.inter"]
    _write_atomic(pair.train, paths[0])
    if pair.test is not None:
        paths.append(out / f"{name}.test.inter")
        _write_atomic(pair.test, paths[1])
    side = out / f"{name}.split.json"
    with open(side, "w") as f:
        json.dump(pair.metadata(), f, indent=2, sort_keys=True)
        f.write("\n")
    paths.append(side)
    return paths


def read_atomic(path: str | os.PathLike) -> InteractionLog:
    with open(path, encoding="utf-8", errors="surrogateescape") as f:
        first = f.readline().rstrip("\r\n")
    if first != ATOMIC_HEADER:
        raise ValueError(f"{path}: not an atomic interaction file (header {first!r})")
    return read_log(path, ATOMIC_FORMAT, rating_threshold=None)
