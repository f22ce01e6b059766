"""
Independent brute-force reference computations used by the tests.

Everything here works on plain Python sets and dicts, sharing no code with
the package.
"""

import math
from collections import Counter, defaultdict
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction


def gini_direct(counts):
    "Direct evaluation of the sorted weighted-sum Gini in exact arithmetic."
    xs = sorted(counts)
    n = len(xs)
    total = sum(xs)
    s = sum(Fraction(n + 1 - i, n + 1) * Fraction(x, total) for i, x in enumerate(xs, start=1))
    return 1 - 2 * s


def expected_test_count(n, train_fraction="0.8"):
    if n <= 1:
        return 0
    share = (Decimal(n) * (1 - Decimal(train_fraction))).quantize(Decimal(1), rounding=ROUND_HALF_UP)
    return min(int(share), n - 1)


def prune_users_brute(pairs, t):
    counts = Counter(u for u, _ in pairs)
    return {(u, i) for u, i in pairs if counts[u] >= t}


def prune_recursive_brute(pairs, t):
    cur = set(pairs)
    while True:
        uc = Counter(u for u, _ in cur)
        ic = Counter(i for _, i in cur)
        nxt = {(u, i) for u, i in cur if uc[u] >= t and ic[i] >= t}
        if nxt == cur:
            return cur
        cur = nxt


def _histories(pairs):
    hist = defaultdict(set)
    for u, i in pairs:
        hist[u].add(i)
    return hist


def cosine(a: set, b: set) -> float:
    if not a or not b:
        return 0.0
    return len(a & b) / math.sqrt(len(a) * len(b))


def user_knn_scores(pairs, user, items, neighbours=20):
    """
    score(u, i) = sum of sim(u, v) over the most similar users v that
    consumed i; neighbours ranked by similarity then token.
    """
    hist = _histories(pairs)
    sims = [(cosine(hist[user], hist[v]), v) for v in sorted(hist) if v != user]
    sims = [(s, v) for s, v in sims if s > 0]
    sims.sort(key=lambda sv: (-sv[0], sv[1]))
    nbrs = sims[:neighbours]
    return {i: sum(s for s, v in nbrs if i in hist[v]) for i in items}


def item_knn_scores(pairs, user, items, neighbours=20):
    "score(u, i) = sum of the largest ``neighbours`` similarities sim(i, j), j in the user's history."
    hist = _histories(pairs)
    consumers = defaultdict(set)
    for u, i in pairs:
        consumers[i].add(u)
    out = {}
    for i in items:
        sims = sorted((cosine(consumers[i], consumers[j]) for j in hist[user] if j != i), reverse=True)
        out[i] = sum(s for s in sims[:neighbours] if s > 0)
    return out


def ranking_from_scores(scores: dict, exclude: set, k: int):
    cands = [i for i in scores if i not in exclude]
    cands.sort(key=lambda i: (-scores[i], i))
    return cands[:k]


def ndcg_direct(recommended, relevant, k):
    "Textbook binary nDCG, written from the per-rank gains."
    gains = [1 if x in relevant else 0 for x in recommended[:k]]
    dcg = sum(g / math.log2(r + 1) for r, g in enumerate(gains, start=1))
    ideal = sum(1 / math.log2(r + 1) for r in range(1, min(len(relevant), k) + 1))
    return dcg / ideal
