import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coreprune.dataset import PipelineConfig
from coreprune.experiment import EvalRecord, GridResult, run_grid
from coreprune.report import (
    MetricGrid,
    RankMatrix,
    emit_tables,
    metric_grids,
    rank_matrix,
    read_characteristics_csv,
    read_grid_csv,
    read_grid_summary,
    read_rank_matrix_csv,
    read_relative_change_csv,
    relative_change,
    write_grid_csv,
)
from coreprune.synthetic import power_law_log


def rec(ds, t, algo, value, phase="phase1", metric="ndcg"):
    return EvalRecord(ds, t, phase, algo, metric, 10, value, 1)


def cell(cells, algo, t):
    return next(c for c in cells if c.algorithm == algo and c.core_t == t)


def test_relative_change_example():
    cells = relative_change([rec("cd", 0, "implicit_mf", 0.0204), rec("cd", 100, "implicit_mf", 0.0565)])
    assert cell(cells, "implicit_mf", 100).pct_change == pytest.approx(176.96, abs=0.005)
    assert cell(cells, "implicit_mf", 0).pct_change == 0.0


def test_relative_change_zero_baseline_undefined():
    cells = relative_change([rec("toys", 0, "random", 0.0), rec("toys", 5, "random", 0.001)])
    c = cell(cells, "random", 5)
    assert c.undefined and c.pct_change is None


def test_relative_change_missing_baseline():
    cells = relative_change([rec("a", 0, "bpr", 0.1), rec("a", 5, "pop", 0.2)])
    assert cell(cells, "pop", 5).undefined


def test_relative_change_averages_first():
    recs = [rec("a", 0, "x", 0.1), rec("b", 0, "x", 0.3), rec("a", 5, "x", 0.2), rec("b", 5, "x", 0.2)]
    # mean baseline 0.2, mean at 5 is 0.2: zero change (per-dataset mean would be +25%)
    assert cell(relative_change(recs), "x", 5).pct_change == pytest.approx(0.0)


@given(st.floats(1e-6, 1.0))
def test_relative_change_identity(v):
    cells = relative_change([rec("a", 0, "x", v), rec("a", 5, "x", v)])
    assert cell(cells, "x", 5).pct_change == 0.0


def test_rank_example():
    rm = rank_matrix([rec("d", 0, "A", 0.3), rec("d", 0, "B", 0.1), rec("d", 0, "C", 0.2)])
    assert dict(zip(rm.algorithms, rm.ranks[:, 0].tolist())) == {"A": 1, "B": 3, "C": 2}


def test_rank_tie_by_name():
    rm = rank_matrix([rec("d", 0, "zeta", 0.5), rec("d", 0, "alpha", 0.5), rec("d", 0, "mid", 0.1)])
    assert dict(zip(rm.algorithms, rm.ranks[:, 0].tolist())) == {"alpha": 1, "zeta": 2, "mid": 3}


def test_rank_missing_cells_last():
    recs = [rec("d", 0, "a", 0.1), rec("d", 0, "b", 0.2), rec("d", 5, "b", 0.2)]
    rm = rank_matrix(recs, algorithms=["a", "b", "c"])
    assert rm.columns == [("d", 0, "phase1"), ("d", 5, "phase1")]
    assert rm.ranks[:, 0].tolist() == [2, 1, 3]
    assert rm.ranks[:, 1].tolist() == [2, 1, 3]


def test_rank_eleven_permutation():
    rng = np.random.default_rng(0)
    names = [f"alg{n:02d}" for n in range(11)]
    recs = [rec(d, t, a, float(rng.random())) for d in ("x", "y") for t in (0, 5) for a in names]
    rm = rank_matrix(recs)
    for c in range(rm.ranks.shape[1]):
        assert sorted(rm.ranks[:, c].tolist()) == list(range(1, 12))


def test_rank_matrix_rejects_non_permutation():
    with pytest.raises(AssertionError):
        RankMatrix(["a", "b"], [("d", 0, "phase1")], np.array([[1], [1]]))


@given(st.lists(st.integers(0, 20), min_size=2, max_size=8))
def test_rank_monotone_invariance(raw):
    names = [f"a{n}" for n in range(len(raw))]
    vals = [v / 20 for v in raw]
    base = rank_matrix([rec("d", 0, a, v) for a, v in zip(names, vals)])
    moved = rank_matrix([rec("d", 0, a, (v**3 + 0.01) / 1.02) for a, v in zip(names, vals)])
    assert np.array_equal(base.ranks, moved.ranks)


def test_grid_summary_rows(tmp_path):
    recs = [rec(d, t, "pop", v) for (d, t, v) in [("a", 0, 0.1), ("a", 5, 0.3), ("b", 0, 0.2), ("b", 5, 0.05)]]
    (grid,) = metric_grids(recs, "phase1")
    s = grid.summary()
    assert s["Min"] == [0.1, 0.05]
    assert s["Max"] == [0.3, 0.2]
    assert s["Average"] == pytest.approx([0.2, 0.125])
    p = tmp_path / "g.csv"
    write_grid_csv(grid, p)
    back = read_grid_csv(p, "pop", "phase1", "ndcg@10")
    assert back == grid
    assert read_grid_summary(p) == s


def test_grid_missing_values_roundtrip(tmp_path):
    grid = MetricGrid("x", "phase2", "ndcg@10", [5, 10], ["a", "b"], [[0.1, None], [1 / 3, 0.2]])
    write_grid_csv(grid, tmp_path / "g.csv")
    assert read_grid_csv(tmp_path / "g.csv", "x", "phase2", "ndcg@10") == grid
    assert grid.summary()["Min"] == [0.1, 0.2]


@pytest.fixture(scope="module")
def grid_result():
    data = {"syn": power_law_log(150, 100, 2500, seed=4), "other": power_law_log(120, 80, 1800, seed=5)}
    return run_grid(PipelineConfig(core_levels=(0, 5, 10)), data, ["popscore", "item_knn", "random"], ["ndcg", "recall"])


def test_emit_tables_roundtrip(grid_result, tmp_path):
    paths = emit_tables(grid_result, tmp_path)
    names = {p.name for p in paths}
    assert {"tables.md", "report_meta.json", "characteristics_core-5.csv", "retention_syn.csv"} <= names
    assert "rank_matrix_phase2_ndcg@10.csv" in names
    recs = grid_result.records

    for phase in ("phase1", "phase2"):
        for g in metric_grids(recs, phase, "ndcg", 10):
            back = read_grid_csv(tmp_path / f"grid_{phase}_ndcg@10_{g.algorithm}.csv", g.algorithm, phase, "ndcg@10")
            assert back == g
        rm = rank_matrix([r for r in recs if r.phase == phase], "ndcg", 10)
        back = read_rank_matrix_csv(tmp_path / f"rank_matrix_{phase}_ndcg@10.csv")
        assert back.algorithms == rm.algorithms and back.columns == rm.columns
        assert np.array_equal(back.ranks, rm.ranks)

    assert read_relative_change_csv(tmp_path / "relative_change_phase1_recall@10.csv") == relative_change(recs, "recall", 10)
    chars = read_characteristics_csv(tmp_path / "characteristics_core-10.csv")
    for ds in ("syn", "other"):
        assert chars[ds]["gini_item"] == grid_result.characteristics[(ds, 10)].gini_item
        assert chars[ds]["n_users"] == grid_result.characteristics[(ds, 10)].n_users
    meta = json.loads((tmp_path / "report_meta.json").read_text())
    assert meta["notes"] == []
    assert meta["config_hash"] == grid_result.config_hash


def test_emit_tables_without_phase2(grid_result, tmp_path):
    only1 = GridResult(
        records=[r for r in grid_result.records if r.phase == "phase1"],
        characteristics=grid_result.characteristics,
        retention=grid_result.retention,
    )
    names = {p.name for p in emit_tables(only1, tmp_path)}
    assert not any("phase2" in n for n in names)
    meta = json.loads((tmp_path / "report_meta.json").read_text())
    assert any("phase-2" in n for n in meta["notes"])


def test_emit_tables_rejects_empty(tmp_path):
    with pytest.raises(ValueError):
        emit_tables(GridResult(), tmp_path)
