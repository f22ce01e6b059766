"""
Ingesting a raw log and pruning it into coresets
================================================

A raw explicit-feedback log is binarized at rating 4, deduplicated and
downsampled, then pruned at increasing user thresholds.
"""

import tempfile
from pathlib import Path

import numpy as np

from coreprune import LogFormat, downsample, prune, read_log

# %%
# Write a small ratings file: user, item, rating, timestamp.
rng = np.random.default_rng(0)
users = rng.zipf(1.6, 4000) % 300
items = rng.zipf(1.4, 4000) % 200
ratings = rng.integers(1, 6, 4000)
tmp = Path(tempfile.mkdtemp())
src = tmp / "ratings.csv"
src.write_text("".join(f"u{u},i{i},{r}.0,{n}\n" for n, (u, i, r) in enumerate(zip(users, items, ratings))))

# %%
# Stream it in.  ``counts`` reports what each step removed.
counts = {}
log = read_log(src, LogFormat.from_string("user,item,rating,timestamp"), 4.0, counts=counts)
print(counts, "->", log.n_interactions, "unique positive pairs")

# cap the log; the sample depends only on the seed and dataset name
log = downsample(log, 400, seed=42, dataset="toy")
print("after downsampling:", log.n_interactions)

# %%
# Coresets keep users with at least t interactions.  Item counts are not
# constrained in the default mode.
for t in (0, 2, 5, 8):
    core = prune(log, t)
    if core.empty:
        print(f"{t:>3}-core: empty")
        continue
    c = core.log
    print(f"{t:>3}-core: {c.n_interactions:5d} interactions, {c.n_users:4d} users, {c.n_items:4d} items, "
          f"min user count {c.per_user_counts.min()}")
