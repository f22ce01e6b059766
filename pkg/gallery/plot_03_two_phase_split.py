"""
Phase-1 and phase-2 test sets
=============================

Phase 1 holds out 20% of each coreset user's interactions.  Phase 2 keeps
the same training set but tests on a same-sized sample from the unpruned
log, so users and items removed by pruning show up at test time.
"""

from coreprune import prune, split_per_user, split_phase2
from coreprune.splitter import holdout_count
from coreprune.synthetic import power_law_log

# rounding is half-up on n * 0.2, never emptying a user's training side
print({n: holdout_count(n, 0.8) for n in (1, 2, 3, 7, 8, 12, 13)})

zero = power_law_log(300, 200, 5000, seed=2)
core = prune(zero, 10).log

p1 = split_per_user(core, 0.8, seed=7, core_t=10)
p2 = split_phase2(p1, zero)
print("train", p1.train.n_interactions, "| phase-1 test", p1.test.n_interactions,
      "| phase-2 test", p2.test.n_interactions)

# %%
# Phase-2 test users that the model never saw during training.
seen = set(p1.train.user_tokens.tolist())
cold = [u for u in p2.test.user_tokens.tolist() if u not in seen]
print(f"{len(cold)} of {p2.test.n_users} phase-2 test users are cold")
assert not p2.train.token_pairs() & p2.test.token_pairs()
