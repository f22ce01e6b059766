"""
Fitting the six recommenders
============================

Every model is fitted on the same phase-1 training split and scored with
nDCG, precision and recall at 10.
"""

import time

from coreprune import MetricSpec, RecommenderSpec, prune, split_per_user
from coreprune.experiment import ALGORITHMS, evaluate
from coreprune.synthetic import power_law_log

log = prune(power_law_log(500, 300, 10_000, seed=3), 5).log
pair = split_per_user(log, 0.8, seed=11)
metrics = [MetricSpec("ndcg"), MetricSpec("precision"), MetricSpec("recall")]

for kind in ALGORITHMS:
    start = time.perf_counter()
    model = RecommenderSpec(kind, seed=5).build().fit(pair.train)
    vals, n, _ = evaluate(model, pair.test, metrics)
    print(f"{kind:>12}: " + "  ".join(f"{k}={v:.4f}" for k, v in vals.items())
          + f"  ({n} users, {time.perf_counter() - start:.2f}s)")

# %%
# Lists never contain training items, and ties fall back to token order.
model = RecommenderSpec("popscore").build().fit(pair.train)
user = pair.train.user_tokens[0]
print(user, model.recommend_tokens(user, 5))
print("cold user:", model.recommend_tokens("nobody", 5))

# %%
# The ALS objective never increases between sweeps.
mf = RecommenderSpec("implicit_mf", {"sweeps": 8}, seed=5).build().fit(pair.train)
print([f"{v:.0f}" for v in mf.objective_history_])
