"""
Coreset characteristics and retention
=====================================

Density rises and the Gini coefficients fall as the core threshold grows,
while fewer and fewer users survive.
"""

from coreprune import characterize, prune, retention
from coreprune.characteristics import table_row
from coreprune.synthetic import power_law_log

log = power_law_log(500, 300, 10_000, seed=1)

# %%
# One row per core level, rounded the way the tables print them.
print(f"{'t':>4} {'users':>6} {'items':>6} {'avg/u':>7} {'sparsity':>10} {'gini_u':>7} {'gini_i':>7}")
for t in (0, 5, 10, 20, 50):
    core = prune(log, t)
    if core.empty:
        break
    row = table_row(characterize(core.log))
    print(f"{t:>4} {row['n_users']:>6} {row['n_items']:>6} {row['avg_int_per_user']:>7} "
          f"{row['sparsity']:>10} {row['gini_user']:>7} {row['gini_item']:>7}")

# %%
# Retention is always relative to the unpruned log.
for t in (5, 10, 20, 50):
    r = retention(prune(log, t), log)
    print(f"{t:>3}-core keeps {r.user_retention_pct:5.1f}% of users, "
          f"{r.item_retention_pct:5.1f}% of items, {r.interaction_retention_pct:5.1f}% of interactions")
