"""
The experiment grid and its report
==================================

Two synthetic datasets, four core levels and three algorithms.  The grid
returns one record per (dataset, core, phase, algorithm, metric); the
report turns those into relative-change tables, rank matrices and metric
grids.
"""

import tempfile
from pathlib import Path

from coreprune import PipelineConfig, run_grid
from coreprune.experiment import save_results
from coreprune.report import emit_tables, rank_matrix, relative_change
from coreprune.synthetic import power_law_log

datasets = {
    "steep": power_law_log(400, 250, 8000, seed=4, item_exponent=1.2),
    "flat": power_law_log(400, 250, 8000, seed=5, item_exponent=0.6),
}
config = PipelineConfig(core_levels=(0, 5, 10, 20), seed=42)
result = run_grid(config, datasets, ["popscore", "item_knn", "bpr"], ["ndcg"])
print(len(result.records), "records, config", result.config_hash[:12])

# %%
# Percent change of the dataset-averaged nDCG@10 against the 0-core.
for c in relative_change(result.records):
    pct = "undefined" if c.undefined else f"{c.pct_change:+.1f}%"
    print(f"{c.algorithm:>9} {c.core_t:>3}-core {pct}")

# %%
# Ranks per (dataset, core) column in each phase.
for phase in ("phase1", "phase2"):
    rm = rank_matrix([r for r in result.records if r.phase == phase])
    print(phase, [f"{d}/{t}" for d, t, _ in rm.columns])
    for name, row in zip(rm.algorithms, rm.ranks):
        print(f"  {name:>9}", row.tolist())

# %%
# Persist everything.
out = Path(tempfile.mkdtemp())
save_results(result, out)
paths = emit_tables(result, out / "report")
print(f"{len(paths)} report files under {out / 'report'}")
