"""
Synthetic interaction logs with long-tailed user activity and item
popularity, for tests and demonstrations.
"""

from __future__ import annotations

import numpy as np

from .dataset import InteractionLog
from .rng import make_rng


def power_law_log(
    n_users: int = 500,
    n_items: int = 300,
    n_interactions: int = 10_000,
    seed: int = 0,
    user_exponent: float = 0.8,
    item_exponent: float = 1.0,
) -> InteractionLog:
    """
    Draw exactly ``n_interactions`` distinct (user, item) pairs.

    Users and items are picked with Zipf-like probabilities proportional to
    ``rank ** -exponent``; every user and item is guaranteed at least one
    interaction.  Tokens are zero-padded (``u0007``, ``i0042``) so token
    order matches numeric order.
    """
    if n_interactions > n_users * n_items:
        raise ValueError("more interactions requested than user-item cells")
    if n_interactions < max(n_users, n_items):
        raise ValueError("too few interactions to cover every user and item")
    rng = make_rng(seed, "synthetic")
    pu = np.arange(1, n_users + 1, dtype=np.float64) ** -user_exponent
    pi = np.arange(1, n_items + 1, dtype=np.float64) ** -item_exponent
    pu /= pu.sum()
    pi /= pi.sum()

    # cover every entity once, then fill with popularity-weighted draws
    cover = max(n_users, n_items)
    u0 = np.concatenate([rng.permutation(n_users), rng.choice(n_users, cover - n_users, p=pu)])
    i0 = np.concatenate([rng.permutation(n_items), rng.choice(n_items, cover - n_items, p=pi)])
    keys = set((u0 * n_items + i0).tolist())
    while len(keys) < n_interactions:
        need = n_interactions - len(keys)
        us = rng.choice(n_users, need, p=pu)
        its = rng.choice(n_items, need, p=pi)
        for k in (us * n_items + its).tolist():
            if len(keys) >= n_interactions:
                break
            keys.add(k)
    arr = np.array(sorted(keys), dtype=np.int64)
    uw = len(str(n_users - 1))
    iw = len(str(n_items - 1))
    utoks = np.array([f"u{n:0{uw}d}" for n in range(n_users)])
    itoks = np.array([f"i{n:0{iw}d}" for n in range(n_items)])
    return InteractionLog(utoks, itoks, arr // n_items, arr % n_items)
