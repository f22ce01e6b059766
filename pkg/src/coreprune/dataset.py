"""
Interaction-log ingestion and the immutable indexed log structure.

Raw rows flow through :func:`parse_log` (or the streaming :func:`read_log`),
explicit ratings are thresholded by :func:`binarize`, and :func:`build_log`
collapses duplicates into an :class:`InteractionLog`.  Entity indices are
assigned in ascending token order, so index order and token order agree
everywhere downstream (tie-breaking relies on this).
"""

from __future__ import annotations

import array
import csv
import hashlib
import io
import os
from collections.abc import Iterable, Iterator
from contextlib import contextmanager
from dataclasses import dataclass
from functools import cached_property
from typing import IO, Union

import numpy as np
import scipy.sparse as sps

from .rng import make_rng

Source = Union[str, os.PathLike, IO[bytes], IO[str]]

class ParseError(ValueError):
    """A malformed input row.  ``line`` is 1-based within the file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyLogError(ValueError):
    pass


@dataclass(frozen=True)
class RawInteraction:
    user_id: str
    item_id: str
    rating: float | None = None
    timestamp: int | None = None

    def __post_init__(self):
        if not self.user_id or not self.item_id:
            raise ValueError("user_id and item_id must be non-empty")


@dataclass(frozen=True)
class LogFormat:
    """
    Column layout of a delimited interaction file.

    ``columns`` names each field in order.  ``user`` and ``item`` are
    required; ``rating`` and ``timestamp`` are optional; any other name
    (e.g. ``label``) marks a column that is read but ignored.
    """

    columns: tuple[str, ...] = ("user", "item")
    delimiter: str = ","
    header: bool = False
    quoting: bool = True

    def __post_init__(self):
        cols = tuple(self.columns)
        object.__setattr__(self, "columns", cols)
        for req in ("user", "item"):
            if cols.count(req) != 1:
                raise ValueError(f"column spec must name '{req}' exactly once: {cols}")
        for opt in ("rating", "timestamp"):
            if cols.count(opt) > 1:
                raise ValueError(f"column '{opt}' named more than once")
        if len(self.delimiter) != 1:
            raise ValueError("delimiter must be a single character")

    @classmethod
    def from_string(cls, spec: str, delimiter: str = ",", header: bool = False) -> LogFormat:
        """Build a format from a comma-separated column list like ``user,item,rating``."""
        cols = tuple(c.strip() for c in spec.split(",") if c.strip())
        return cls(cols, delimiter, header)

    def position(self, name: str) -> int | None:
        try:
            return self.columns.index(name)
        except ValueError:
            return None


@contextmanager
def _open_text(source: Source) -> Iterator[IO[str]]:
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8", errors="surrogateescape", newline="") as f:
            yield f
    elif isinstance(source, io.TextIOBase):
        yield source
    else:
        wrapper = io.TextIOWrapper(source, encoding="utf-8", errors="surrogateescape", newline="")
        try:
            yield wrapper
        finally:
            wrapper.detach()


def _iter_rows(source: Source, fmt: LogFormat) -> Iterator[tuple[str, str, float | None, int | None]]:
    ui = fmt.position("user")
    ii = fmt.position("item")
    ri = fmt.position("rating")
    ti = fmt.position("timestamp")
    width = len(fmt.columns)
    seen = 0
    with _open_text(source) as f:
        reader = csv.reader(
            f, delimiter=fmt.delimiter, quoting=csv.QUOTE_MINIMAL if fmt.quoting else csv.QUOTE_NONE
        )
        for row in reader:
            line = reader.line_num
            if fmt.header and seen == 0:
                seen = 1
                continue
            seen += 1
            if not row:
                continue
            if len(row) != width:
                raise ParseError(f"expected {width} fields, found {len(row)}", line)
            user, item = row[ui], row[ii]
            if not user or not item:
                raise ParseError("empty user or item token", line)
            rating = None
            if ri is not None and row[ri] != "":
                try:
                    rating = float(row[ri])
                except ValueError:
                    raise ParseError(f"unparsable rating {row[ri]!r}", line) from None
            ts = None
            if ti is not None and row[ti] != "":
                try:
                    ts = int(row[ti])
                except ValueError:
                    try:
                        ts = int(float(row[ti]))
                    except ValueError:
                        raise ParseError(f"unparsable timestamp {row[ti]!r}", line) from None
            yield user, item, rating, ts
    if seen == 0:
        raise ParseError("input is empty")


def parse_log(source: Source, fmt: LogFormat = LogFormat()) -> Iterator[RawInteraction]:
    """
    Parse delimited text into raw interactions, preserving row order.

    The result is a lazy iterator; errors surface when the offending row is
    reached.  Blank lines are skipped.
    """
    for user, item, rating, ts in _iter_rows(source, fmt):
        yield RawInteraction(user, item, rating, ts)


def binarize(raw: Iterable[RawInteraction], threshold: float = 4.0) -> list[RawInteraction]:
    """
    Keep interactions rated at or above ``threshold`` (or unrated) and set
    their rating to 1.
    """
    out = []
    for r in raw:
        if r.rating is None:
            out.append(r)
        elif r.rating >= threshold:
            out.append(RawInteraction(r.user_id, r.item_id, 1.0, r.timestamp))
    return out


class _TokenCoder:
    "Assigns provisional integer codes to tokens in first-seen order."

    def __init__(self):
        self.codes: dict[str, int] = {}

    def __call__(self, tok: str) -> int:
        c = self.codes.get(tok)
        if c is None:
            c = len(self.codes)
            self.codes[tok] = c
        return c

    def sorted_remap(self) -> tuple[np.ndarray, np.ndarray]:
        "Return (sorted token array, map from provisional code to sorted rank)."
        toks = list(self.codes.keys())
        arr = np.array(toks, dtype=str) if toks else np.array([], dtype=str)
        order = np.argsort(arr, kind="stable")
        remap = np.empty(len(arr), dtype=np.int64)
        remap[order] = np.arange(len(arr))
        return arr[order], remap


def _from_codes(ucoder: _TokenCoder, icoder: _TokenCoder, ucodes, icodes) -> InteractionLog:
    u = np.frombuffer(ucodes, dtype=np.int64) if len(ucodes) else np.zeros(0, np.int64)
    i = np.frombuffer(icodes, dtype=np.int64) if len(icodes) else np.zeros(0, np.int64)
    if len(u) == 0:
        raise EmptyLogError("no interactions")
    utoks, umap = ucoder.sorted_remap()
    itoks, imap = icoder.sorted_remap()
    u = umap[u]
    i = imap[i]
    keys = np.unique(u * len(itoks) + i)
    return InteractionLog(utoks, itoks, keys // len(itoks), keys % len(itoks))


class InteractionLog:
    """
    Deduplicated set of implicit (user, item) interactions with dense index maps.

    Users and items are indexed ``0..n-1`` in ascending token order, and the
    interaction arrays are sorted by (user, item).  Every indexed entity has
    at least one interaction.  Instances are immutable; the arrays are
    flagged read-only.

    Most callers should build logs with :func:`build_log`, :func:`read_log`
    or :meth:`from_tokens` rather than calling the constructor.
    """

    def __init__(self, user_tokens, item_tokens, users, items):
        ut = np.asarray(user_tokens, dtype=str)
        it = np.asarray(item_tokens, dtype=str)
        u = np.asarray(users, dtype=np.int64)
        i = np.asarray(items, dtype=np.int64)
        if u.shape != i.shape or u.ndim != 1:
            raise ValueError("user and item index arrays must be 1-D and equal length")
        if len(u) == 0:
            raise EmptyLogError("interaction log must be non-empty")
        if np.any(ut[1:] <= ut[:-1]) or np.any(it[1:] <= it[:-1]):
            raise ValueError("token maps must be strictly ascending")
        if u.min() < 0 or u.max() >= len(ut) or i.min() < 0 or i.max() >= len(it):
            raise ValueError("index out of range of the token maps")

        order = np.lexsort((i, u))
        u = u[order]
        i = i[order]
        keys = u * len(it) + i
        if np.any(keys[1:] == keys[:-1]):
            raise ValueError("duplicate (user, item) pair")

        ucounts = np.bincount(u, minlength=len(ut))
        icounts = np.bincount(i, minlength=len(it))
        if np.any(ucounts == 0) or np.any(icounts == 0):
            raise ValueError("every indexed user and item must have an interaction")
        assert ucounts.sum() == icounts.sum() == len(u)

        for a in (ut, it, u, i, ucounts, icounts):
            a.flags.writeable = False
        self._user_tokens = ut
        self._item_tokens = it
        self._users = u
        self._items = i
        self._ucounts = ucounts
        self._icounts = icounts

    @classmethod
    def from_tokens(cls, user_tokens: Iterable[str], item_tokens: Iterable[str]) -> InteractionLog:
        "Build a log from parallel token sequences, collapsing duplicates."
        ucoder, icoder = _TokenCoder(), _TokenCoder()
        uc, ic = array.array("q"), array.array("q")
        for ut, it in zip(user_tokens, item_tokens, strict=True):
            uc.append(ucoder(ut))
            ic.append(icoder(it))
        return _from_codes(ucoder, icoder, uc, ic)

    @property
    def user_tokens(self) -> np.ndarray:
        return self._user_tokens

    @property
    def item_tokens(self) -> np.ndarray:
        return self._item_tokens

    @property
    def users(self) -> np.ndarray:
        "User index of each interaction."
        return self._users

    @property
    def items(self) -> np.ndarray:
        "Item index of each interaction."
        return self._items

    @property
    def per_user_counts(self) -> np.ndarray:
        return self._ucounts

    @property
    def per_item_counts(self) -> np.ndarray:
        return self._icounts

    @property
    def n_interactions(self) -> int:
        return len(self._users)

    @property
    def n_users(self) -> int:
        return len(self._user_tokens)

    @property
    def n_items(self) -> int:
        return len(self._item_tokens)

    def __len__(self):
        return self.n_interactions

    def __repr__(self):
        return (
            f"<InteractionLog {self.n_interactions} interactions, "
            f"{self.n_users} users, {self.n_items} items>"
        )

    def __eq__(self, other):
        if not isinstance(other, InteractionLog):
            return NotImplemented
        return (
            np.array_equal(self._user_tokens, other._user_tokens)
            and np.array_equal(self._item_tokens, other._item_tokens)
            and np.array_equal(self._users, other._users)
            and np.array_equal(self._items, other._items)
        )

    __hash__ = None

    @cached_property
    def user_offsets(self) -> np.ndarray:
        "CSR row pointer: interactions of user ``u`` are ``offsets[u]:offsets[u+1]``."
        off = np.zeros(self.n_users + 1, dtype=np.int64)
        np.cumsum(self._ucounts, out=off[1:])
        off.flags.writeable = False
        return off

    def user_items(self, u: int) -> np.ndarray:
        "Item indices consumed by user index ``u`` (ascending)."
        off = self.user_offsets
        return self._items[off[u] : off[u + 1]]

    @cached_property
    def matrix(self) -> sps.csr_matrix:
        "Binary user-item matrix (float64 CSR)."
        m = sps.csr_matrix(
            (np.ones(self.n_interactions), self._items.copy(), self.user_offsets.copy()),
            shape=(self.n_users, self.n_items),
        )
        return m

    def lookup_users(self, tokens) -> np.ndarray:
        "Map user tokens to indices; unknown tokens map to -1."
        return _lookup(self._user_tokens, tokens)

    def lookup_items(self, tokens) -> np.ndarray:
        "Map item tokens to indices; unknown tokens map to -1."
        return _lookup(self._item_tokens, tokens)

    def token_pairs(self) -> set[tuple[str, str]]:
        "The interactions as a set of (user token, item token) pairs."
        return set(zip(self._user_tokens[self._users].tolist(), self._item_tokens[self._items].tolist()))

    def pair_keys(self, user_tokens: np.ndarray, item_tokens: np.ndarray) -> np.ndarray:
        """
        Encode this log's interactions as integer keys in a reference index
        space.  Entities absent from the reference get key -1.
        """
        u = _lookup(user_tokens, self._user_tokens)[self._users]
        i = _lookup(item_tokens, self._item_tokens)[self._items]
        keys = u * len(item_tokens) + i
        keys[(u < 0) | (i < 0)] = -1
        return keys

    def subset(self, mask: np.ndarray) -> InteractionLog:
        """
        Restrict to the interactions selected by a boolean mask, dropping
        entities left without interactions.
        """
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != self._users.shape:
            raise ValueError("mask length must equal the number of interactions")
        if mask.all():
            return self
        u = self._users[mask]
        i = self._items[mask]
        if len(u) == 0:
            raise EmptyLogError("subset selects no interactions")
        ukeep = np.unique(u)
        ikeep = np.unique(i)
        return InteractionLog(
            self._user_tokens[ukeep],
            self._item_tokens[ikeep],
            np.searchsorted(ukeep, u),
            np.searchsorted(ikeep, i),
        )

    def flatten(self) -> list[RawInteraction]:
        "Expand back into raw interactions (rating-less), in (user, item) order."
        ut = self._user_tokens[self._users].tolist()
        it = self._item_tokens[self._items].tolist()
        return [RawInteraction(u, i) for u, i in zip(ut, it)]

    def fingerprint(self) -> str:
        "SHA-256 over the token maps and interaction arrays."
        h = hashlib.sha256()
        for toks in (self._user_tokens, self._item_tokens):
            h.update(len(toks).to_bytes(8, "little"))
            for t in toks.tolist():
                b = t.encode("utf-8", "surrogateescape")
                h.update(len(b).to_bytes(4, "little"))
                h.update(b)
        h.update(self._users.astype("<i8").tobytes())
        h.update(self._items.astype("<i8").tobytes())
        return h.hexdigest()


def _lookup(sorted_tokens: np.ndarray, tokens) -> np.ndarray:
    tokens = np.asarray(tokens, dtype=str)
    if len(sorted_tokens) == 0:
        return np.full(tokens.shape, -1, dtype=np.int64)
    pos = np.searchsorted(sorted_tokens, tokens)
    pos = np.minimum(pos, len(sorted_tokens) - 1)
    hit = sorted_tokens[pos] == tokens
    return np.where(hit, pos, -1).astype(np.int64)


def build_log(raw: Iterable[RawInteraction]) -> InteractionLog:
    "Collapse raw interactions into a deduplicated, indexed log."
    ucoder, icoder = _TokenCoder(), _TokenCoder()
    uc, ic = array.array("q"), array.array("q")
    for r in raw:
        uc.append(ucoder(r.user_id))
        ic.append(icoder(r.item_id))
    return _from_codes(ucoder, icoder, uc, ic)


def read_log(
    source: Source,
    fmt: LogFormat = LogFormat(),
    rating_threshold: float | None = 4.0,
    counts: dict | None = None,
) -> InteractionLog:
    """
    Stream a delimited file straight into an :class:`InteractionLog`.

    Equivalent to ``build_log(binarize(parse_log(source, fmt), threshold))``
    but holds only the retained rows (as integer codes) in memory.  Rows
    without a rating always pass; pass ``rating_threshold=None`` to skip
    thresholding entirely.  If ``counts`` is given it receives the number
    of parsed rows and of rows kept by the threshold.
    """
    ucoder, icoder = _TokenCoder(), _TokenCoder()
    uc, ic = array.array("q"), array.array("q")
    n_rows = 0
    for user, item, rating, _ts in _iter_rows(source, fmt):
        n_rows += 1
        if rating_threshold is not None and rating is not None and rating < rating_threshold:
            continue
        uc.append(ucoder(user))
        ic.append(icoder(item))
    if counts is not None:
        counts.update(rows=n_rows, retained=len(uc))
    return _from_codes(ucoder, icoder, uc, ic)


def downsample(log: InteractionLog, cap: int, seed: int, dataset: str = "") -> InteractionLog:
    """
    Uniformly sample exactly ``cap`` interactions without replacement.

    Logs already at or below the cap are returned unchanged.
    """
    if cap < 1:
        raise ValueError("cap must be at least 1")
    n = log.n_interactions
    if n <= cap:
        return log
    rng = make_rng(seed, "downsample", dataset)
    chosen = rng.choice(n, size=cap, replace=False)
    mask = np.zeros(n, dtype=bool)
    mask[chosen] = True
    return log.subset(mask)


def write_log(log: InteractionLog, path: str | os.PathLike, delimiter: str = ",") -> None:
    """
    Persist a log as delimited text with a ``user,item,label`` header, one
    row per interaction, label always 1.  :data:`PERSISTED_FORMAT` reads it
    back.
    """
    ut = log.user_tokens[log.users].tolist()
    it = log.item_tokens[log.items].tolist()
    with open(path, "w", encoding="utf-8", errors="surrogateescape", newline="") as f:
        w = csv.writer(f, delimiter=delimiter, lineterminator="\n")
        w.writerow(["user", "item", "label"])
        w.writerows((u, i, 1) for u, i in zip(ut, it))


PERSISTED_FORMAT = LogFormat(("user", "item", "label"), ",", header=True)


def load_log(path: str | os.PathLike) -> InteractionLog:
    "Read a log written by :func:`write_log`."
    return read_log(path, PERSISTED_FORMAT, rating_threshold=None)


def file_digest(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass(frozen=True)
class PipelineConfig:
    """Parameters shared by every pipeline stage."""

    rating_threshold: float = 4.0
    sample_cap: int = 3_000_000
    seed: int = 42
    core_levels: tuple[int, ...] = (0, 5, 10, 20, 50, 100)
    train_fraction: float = 0.8
    k_cutoff: int = 10

    def __post_init__(self):
        levels = tuple(int(c) for c in self.core_levels)
        object.__setattr__(self, "core_levels", levels)
        if not levels or levels[0] != 0:
            raise ValueError("core_levels must start with 0")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("core_levels must be strictly increasing")
        if self.sample_cap < 1:
            raise ValueError("sample_cap must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")
        if self.k_cutoff < 1:
            raise ValueError("k_cutoff must be positive")

    def to_dict(self) -> dict:
        return {
            "rating_threshold": self.rating_threshold,
            "sample_cap": self.sample_cap,
            "seed": self.seed,
            "core_levels": list(self.core_levels),
            "train_fraction": self.train_fraction,
            "k_cutoff": self.k_cutoff,
        }
