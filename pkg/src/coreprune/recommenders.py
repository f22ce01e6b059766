"""
Top-k recommenders for binary implicit feedback.

All models share one contract: :meth:`Recommender.fit` on a training log,
then :meth:`Recommender.recommend` returns up to ``k`` item indices (into
the training log's item map) that the user has not consumed in training.
Ranking is by descending score with ties broken by ascending item token.
Users unknown to the training log get the model's cold-start fallback.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import struct
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np
import scipy.sparse as sps
from numba import njit

from .dataset import InteractionLog
from .rng import make_rng

_log = logging.getLogger(__name__)

DEFAULT_PARAMS: dict[str, dict] = {
    "random": {},
    "popscore": {},
    "user_knn": {"neighbours": 20},
    "item_knn": {"neighbours": 20},
    "implicit_mf": {"factors": 50, "alpha": 40.0, "reg": 0.1, "sweeps": 20, "init_scale": 0.01},
    "bpr": {"factors": 64, "learning_rate": 0.05, "reg": 0.01, "epochs": 30, "init_scale": 0.1},
}


@dataclass(frozen=True)
class RecommenderSpec:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in DEFAULT_PARAMS:
            raise ValueError(f"unknown recommender kind {self.kind!r}")
        unknown = set(self.params) - set(DEFAULT_PARAMS[self.kind])
        if unknown:
            raise ValueError(f"{self.kind}: unknown parameters {sorted(unknown)}")
        merged = {**DEFAULT_PARAMS[self.kind], **self.params}
        object.__setattr__(self, "params", merged)
        for name in ("neighbours", "factors"):
            if name in merged and int(merged[name]) < 1:
                raise ValueError(f"{self.kind}: {name} must be at least 1")
        for name in ("sweeps", "epochs"):
            if name in merged and int(merged[name]) < 0:
                raise ValueError(f"{self.kind}: {name} must be non-negative")
        if merged.get("learning_rate", 1) <= 0:
            raise ValueError("learning_rate must be positive")
        for name in ("reg", "alpha"):
            if merged.get(name, 0) < 0:
                raise ValueError(f"{name} must be non-negative")

    def build(self) -> Recommender:
        return MODELS[self.kind](seed=self.seed, **self.params)


def top_k(scores: np.ndarray, k: int, exclude: np.ndarray | None = None) -> np.ndarray:
    """
    Indices of the ``k`` highest scores (descending score, then ascending
    index), skipping ``exclude``.
    """
    s = np.array(scores, dtype=np.float64)
    if exclude is not None and len(exclude):
        s[exclude] = -np.inf
        n_valid = len(s) - len(np.unique(exclude))
    else:
        n_valid = len(s)
    k = min(k, n_valid)
    if k <= 0:
        return np.zeros(0, dtype=np.int64)
    if k < len(s):
        part = np.argpartition(-s, k - 1)[:k]
        cand = np.flatnonzero(s >= s[part].min())
    else:
        cand = np.flatnonzero(s > -np.inf)
    order = np.lexsort((cand, -s[cand]))
    return cand[order][:k].astype(np.int64)


class Recommender:
    kind: ClassVar[str]
    train: InteractionLog

    def __init__(self, seed: int = 0, **params):
        self.seed = seed
        self.params = params

    def fit(self, train: InteractionLog) -> Recommender:
        self.train = train
        self._fit(train)
        return self

    def _fit(self, train: InteractionLog):
        pass

    def score_user(self, u: int) -> np.ndarray:
        "Scores over every training item for known user index ``u``."
        raise NotImplementedError

    def cold_scores(self, user: str) -> np.ndarray:
        "Scores for a user absent from training; all-zero means token order."
        return np.zeros(self.train.n_items)

    def recommend(self, user: str, k: int = 10) -> np.ndarray:
        """
        Top-``k`` unseen item indices for user token ``user``.
        """
        u = int(self.train.lookup_users([user])[0])
        if u < 0:
            return top_k(self.cold_scores(user), k)
        seen = self.train.user_items(u)
        recs = top_k(self.score_user(u), k, seen)
        if np.isin(recs, seen).any():
            raise AssertionError(f"{self.kind} recommended a training item to user {user!r}")
        return recs

    def recommend_tokens(self, user: str, k: int = 10) -> list[str]:
        return self.train.item_tokens[self.recommend(user, k)].tolist()

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {}

    def fingerprint(self) -> str:
        "Digest of the model kind, parameters, seed, training data and learned state."
        h = hashlib.sha256()
        h.update(json.dumps([self.kind, self.params, self.seed], sort_keys=True).encode())
        h.update(self.train.fingerprint().encode())
        for name, arr in sorted(self.state_arrays().items()):
            h.update(name.encode())
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()


class RandomRecommender(Recommender):
    "Uniformly random ranking of unseen items, reproducible per user."

    kind = "random"

    def _user_scores(self, user: str) -> np.ndarray:
        return make_rng(self.seed, "random", user).random(self.train.n_items)

    def score_user(self, u):
        return self._user_scores(self.train.user_tokens[u])

    def cold_scores(self, user):
        return self._user_scores(user)


class PopScore(Recommender):
    kind = "popscore"

    def _fit(self, train):
        self.counts_ = train.per_item_counts.astype(np.float64)

    def score_user(self, u):
        return self.counts_

    def cold_scores(self, user):
        return self.counts_

    def state_arrays(self):
        return {"counts": self.counts_}


class UserKNN(Recommender):
    """
    User-user cosine neighbourhood.  The ``neighbours`` most similar users
    (positive similarity, ties by ascending token) vote for their items
    with their similarity as weight.
    """

    kind = "user_knn"

    def __init__(self, seed=0, neighbours=20):
        super().__init__(seed, neighbours=neighbours)
        self.neighbours = int(neighbours)

    def _fit(self, train):
        self.matrix_ = train.matrix
        self.counts_ = train.per_user_counts.astype(np.float64)

    def similarities(self, u: int) -> np.ndarray:
        co = np.asarray((self.matrix_ @ self.matrix_[u].T).todense()).ravel()
        sims = co / np.sqrt(self.counts_ * self.counts_[u])
        sims[u] = 0.0
        return sims

    def neighbourhood(self, u: int, sims: np.ndarray | None = None) -> np.ndarray:
        if sims is None:
            sims = self.similarities(u)
        pos = np.flatnonzero(sims > 0)
        order = np.lexsort((pos, -sims[pos]))
        return pos[order][: self.neighbours]

    def score_user(self, u):
        sims = self.similarities(u)
        nbrs = self.neighbourhood(u, sims)
        return np.asarray(self.matrix_[nbrs].T @ sims[nbrs]).ravel()


class ItemKNN(Recommender):
    """
    Item-item cosine neighbourhood.  A candidate item scores the sum of its
    similarities to the (at most ``neighbours``) most similar items in the
    user's history.
    """

    kind = "item_knn"

    def __init__(self, seed=0, neighbours=20):
        super().__init__(seed, neighbours=neighbours)
        self.neighbours = int(neighbours)

    def _fit(self, train):
        x = train.matrix
        co = (x.T @ x).tocoo()
        counts = train.per_item_counts.astype(np.float64)
        vals = co.data / np.sqrt(counts[co.row] * counts[co.col])
        off = co.row != co.col
        self.sim_ = sps.csc_matrix(
            (vals[off], (co.row[off], co.col[off])), shape=(train.n_items, train.n_items)
        )

    def score_user(self, u):
        hist = self.train.user_items(u)
        sub = self.sim_[:, hist].tocsr()
        if len(hist) <= self.neighbours:
            return np.asarray(sub.sum(axis=1)).ravel()
        scores = np.asarray(sub.sum(axis=1)).ravel()
        lens = np.diff(sub.indptr)
        for row in np.flatnonzero(lens > self.neighbours):
            vals = sub.data[sub.indptr[row] : sub.indptr[row + 1]]
            scores[row] = np.sort(vals)[-self.neighbours :].sum()
        return scores


class _FactorModel(Recommender):
    user_factors_: np.ndarray
    item_factors_: np.ndarray

    def score_user(self, u):
        return self.item_factors_ @ self.user_factors_[u]

    def state_arrays(self):
        return {"user_factors": self.user_factors_, "item_factors": self.item_factors_}


class ImplicitMF(_FactorModel):
    """
    Alternating least squares for implicit feedback.

    Minimizes ``sum c_ui (p_ui - x_u . y_i)^2 + reg (|X|^2 + |Y|^2)`` over
    all user-item cells, with ``p`` the binary interaction indicator and
    confidence ``c = 1 + alpha * p``.  Each half-sweep solves its side
    exactly, so :attr:`objective_history_` never increases (up to rounding).
    """

    kind = "implicit_mf"

    def __init__(self, seed=0, factors=50, alpha=40.0, reg=0.1, sweeps=20, init_scale=0.01):
        super().__init__(seed, factors=factors, alpha=alpha, reg=reg, sweeps=sweeps, init_scale=init_scale)
        self.factors = int(factors)
        self.alpha = float(alpha)
        self.reg = float(reg)
        self.sweeps = int(sweeps)
        self.init_scale = float(init_scale)

    def _fit(self, train):
        rng = make_rng(self.seed, "implicit_mf", "init")
        X = rng.normal(0, self.init_scale, (train.n_users, self.factors))
        Y = rng.normal(0, self.init_scale, (train.n_items, self.factors))
        ui = train.matrix
        iu = ui.T.tocsr()
        self.objective_history_ = [self.objective(X, Y)]
        for sweep in range(self.sweeps):
            X = self._half_step(ui, Y)
            Y = self._half_step(iu, X)
            if not (np.isfinite(X).all() and np.isfinite(Y).all()):
                raise FloatingPointError(f"implicit_mf: non-finite factors at sweep {sweep}")
            self.objective_history_.append(self.objective(X, Y))
            _log.debug("implicit_mf sweep %d objective %.6f", sweep, self.objective_history_[-1])
        self.user_factors_ = X
        self.item_factors_ = Y

    def _half_step(self, rows: sps.csr_matrix, other: np.ndarray) -> np.ndarray:
        f = self.factors
        gram = other.T @ other
        base = gram + self.reg * np.eye(f)
        out = np.empty((rows.shape[0], f))
        for r in range(rows.shape[0]):
            idx = rows.indices[rows.indptr[r] : rows.indptr[r + 1]]
            Yr = other[idx]
            A = base + self.alpha * (Yr.T @ Yr)
            b = (1.0 + self.alpha) * Yr.sum(axis=0)
            out[r] = np.linalg.solve(A, b)
        return out

    def objective(self, X: np.ndarray | None = None, Y: np.ndarray | None = None) -> float:
        "Weighted squared loss plus L2 penalty, evaluated over every cell."
        if X is None:
            X, Y = self.user_factors_, self.item_factors_
        train = self.train
        s_obs = np.einsum("ij,ij->i", X[train.users], Y[train.items])
        all_sq = float(np.sum((X.T @ X) * (Y.T @ Y)))
        obs = float(np.sum((1.0 + self.alpha) * (1.0 - s_obs) ** 2 - s_obs**2))
        return all_sq + obs + self.reg * (float(np.sum(X * X)) + float(np.sum(Y * Y)))


@njit(cache=True, nogil=True)
def _bpr_epoch(P, Q, us, pos, neg, lr, reg):
    f = P.shape[1]
    pu = np.empty(f)
    for n in range(len(us)):
        u = us[n]
        i = pos[n]
        j = neg[n]
        x = 0.0
        for d in range(f):
            x += P[u, d] * (Q[i, d] - Q[j, d])
        # derivative of ln sigmoid(x)
        if x >= 0:
            g = math.exp(-x) / (1.0 + math.exp(-x))
        else:
            g = 1.0 / (1.0 + math.exp(x))
        for d in range(f):
            pu[d] = P[u, d]
        for d in range(f):
            P[u, d] += lr * (g * (Q[i, d] - Q[j, d]) - reg * P[u, d])
            Q[i, d] += lr * (g * pu[d] - reg * Q[i, d])
            Q[j, d] += lr * (-g * pu[d] - reg * Q[j, d])


class BPR(_FactorModel):
    """
    Bayesian personalized ranking by SGD over (user, positive, negative)
    triples.  Each epoch visits every training interaction once in random
    order, pairing it with a negative drawn uniformly from the user's
    unseen items.
    """

    kind = "bpr"

    def __init__(self, seed=0, factors=64, learning_rate=0.05, reg=0.01, epochs=30, init_scale=0.1):
        super().__init__(
            seed, factors=factors, learning_rate=learning_rate, reg=reg, epochs=epochs, init_scale=init_scale
        )
        self.factors = int(factors)
        self.learning_rate = float(learning_rate)
        self.reg = float(reg)
        self.epochs = int(epochs)
        self.init_scale = float(init_scale)

    def initial_factors(self, train: InteractionLog) -> tuple[np.ndarray, np.ndarray]:
        rng = make_rng(self.seed, "bpr", "init")
        P = rng.normal(0, self.init_scale, (train.n_users, self.factors))
        Q = rng.normal(0, self.init_scale, (train.n_items, self.factors))
        return P, Q

    def _fit(self, train):
        if train.n_items < 2:
            raise ValueError("bpr needs at least two items")
        P, Q = self.initial_factors(train)
        n_items = train.n_items
        keys = train.users * n_items + train.items
        full = train.per_user_counts[train.users] >= n_items
        cand = np.flatnonzero(~full)
        if full.any():
            _log.info("bpr: skipping %d users whose history covers the catalog",
                      int((train.per_user_counts >= n_items).sum()))
        rng = make_rng(self.seed, "bpr", "sample")
        for epoch in range(self.epochs):
            order = cand[rng.permutation(len(cand))]
            us = train.users[order]
            neg = rng.integers(0, n_items, len(order))
            bad = np.flatnonzero(np.isin(us * n_items + neg, keys))
            while len(bad):
                neg[bad] = rng.integers(0, n_items, len(bad))
                bad = bad[np.isin(us[bad] * n_items + neg[bad], keys)]
            _bpr_epoch(P, Q, us, train.items[order], neg, self.learning_rate, self.reg)
            if not (np.isfinite(P).all() and np.isfinite(Q).all()):
                raise FloatingPointError(f"bpr: non-finite factors at epoch {epoch}")
        self.user_factors_ = P
        self.item_factors_ = Q


MODELS: dict[str, type[Recommender]] = {
    m.kind: m for m in (RandomRecommender, PopScore, UserKNN, ItemKNN, ImplicitMF, BPR)
}

SNAPSHOT_MAGIC = b"CPRSNAP\x00"
SNAPSHOT_VERSION = 1


def save_snapshot(model: _FactorModel, path) -> None:
    """
    Write a factor model as: magic, uint32 version, uint32 header length,
    JSON header (kind, params, seed, train fingerprint, array shapes), then
    the raw little-endian float64 user and item factor arrays.
    """
    header = json.dumps(
        {
            "kind": model.kind,
            "params": model.params,
            "seed": model.seed,
            "train": model.train.fingerprint(),
            "user_shape": list(model.user_factors_.shape),
            "item_shape": list(model.item_factors_.shape),
        },
        sort_keys=True,
    ).encode()
    with open(path, "wb") as f:
        f.write(SNAPSHOT_MAGIC)
        f.write(struct.pack("<II", SNAPSHOT_VERSION, len(header)))
        f.write(header)
        f.write(np.ascontiguousarray(model.user_factors_, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(model.item_factors_, dtype="<f8").tobytes())


def load_snapshot(path, train: InteractionLog) -> _FactorModel:
    "Restore a factor model saved by :func:`save_snapshot`; ``train`` must match."
    with open(path, "rb") as f:
        if f.read(len(SNAPSHOT_MAGIC)) != SNAPSHOT_MAGIC:
            raise ValueError(f"{path}: not a model snapshot")
        version, hlen = struct.unpack("<II", f.read(8))
        if version != SNAPSHOT_VERSION:
            raise ValueError(f"{path}: unsupported snapshot version {version}")
        header = json.loads(f.read(hlen))
        if header["train"] != train.fingerprint():
            raise ValueError("snapshot was trained on a different log")
        us, its = header["user_shape"], header["item_shape"]
        P = np.frombuffer(f.read(8 * us[0] * us[1]), dtype="<f8").reshape(us).copy()
        Q = np.frombuffer(f.read(8 * its[0] * its[1]), dtype="<f8").reshape(its).copy()
    model = MODELS[header["kind"]](seed=header["seed"], **header["params"])
    model.train = train
    model.user_factors_ = P
    model.item_factors_ = Q
    return model
