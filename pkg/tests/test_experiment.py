import json

import pytest

from coreprune.dataset import PipelineConfig
from coreprune.experiment import EvalRecord, config_hash, evaluate, load_results, run_grid, save_results
from coreprune.metrics import MetricSpec
from coreprune.recommenders import PopScore
from coreprune.synthetic import power_law_log

from conftest import log_from_pairs


@pytest.fixture(scope="module")
def datasets():
    return {
        "alpha": power_law_log(120, 80, 2000, seed=1),
        "beta": power_law_log(100, 90, 1500, seed=2),
    }


CONFIG = PipelineConfig(seed=3, core_levels=(0, 5, 10))


def test_record_counts(datasets):
    res = run_grid(CONFIG, datasets, ["popscore", "item_knn"], ["ndcg"])
    assert not res.issues
    p1 = [r for r in res.records if r.phase == "phase1"]
    p2 = [r for r in res.records if r.phase == "phase2"]
    assert len(p1) == 2 * 3 * 2
    assert len(p2) == 2 * 2 * 2
    assert all(r.core_t > 0 for r in p2)


def test_record_order(datasets):
    res = run_grid(CONFIG, datasets, ["popscore", "random"], ["ndcg", "recall"])
    keys = [(r.dataset, r.core_t, r.phase, r.algorithm, r.metric) for r in res.records]
    ds = {"alpha": 0, "beta": 1}
    al = {"popscore": 0, "random": 1}
    me = {"ndcg": 0, "recall": 1}
    assert keys == sorted(keys, key=lambda k: (ds[k[0]], k[1], k[2], al[k[3]], me[k[4]]))


def test_deterministic_and_parallel_order(datasets):
    a = run_grid(CONFIG, datasets, ["random", "bpr"], ["ndcg"], params={"bpr": {"epochs": 2}})
    b = run_grid(CONFIG, datasets, ["random", "bpr"], ["ndcg"], params={"bpr": {"epochs": 2}}, jobs=4)
    assert [r.to_json() for r in a.records] == [r.to_json() for r in b.records]


def test_phases_share_model(datasets):
    res = run_grid(CONFIG, datasets, ["implicit_mf"], ["ndcg"], params={"implicit_mf": {"sweeps": 2}})
    fps = {}
    for r in res.records:
        fps.setdefault((r.dataset, r.core_t), set()).add(r.model_fingerprint)
    assert all(len(v) == 1 for v in fps.values())
    assert len({next(iter(v)) for v in fps.values()}) == len(fps)


def test_provenance(datasets):
    res = run_grid(CONFIG, datasets, ["popscore"], ["ndcg"])
    for r in res.records:
        assert r.config_hash == res.config_hash
        assert set(r.seed_chain) == {"root", "split", "model"}
        assert r.seed_chain["root"] == 3
        assert 0.0 <= r.value <= 1.0
        assert r.n_users_evaluated > 0
    other = run_grid(PipelineConfig(seed=4, core_levels=(0, 5, 10)), datasets, ["popscore"], ["ndcg"])
    assert other.config_hash != res.config_hash


def test_error_isolated(datasets, monkeypatch):
    original = PopScore._fit

    def flaky(self, train):
        if train.n_users < 100:
            raise RuntimeError("boom")
        return original(self, train)

    monkeypatch.setattr(PopScore, "_fit", flaky)
    res = run_grid(CONFIG, datasets, ["popscore", "random"], ["ndcg"])
    failed = {(i.dataset, i.core_t) for i in res.issues if i.kind == "error"}
    assert failed
    assert all(i.algorithm == "popscore" and "boom" in i.message for i in res.issues)
    random_cells = {(r.dataset, r.core_t) for r in res.records if r.algorithm == "random"}
    assert len(random_cells) == 6
    assert not any((r.dataset, r.core_t) in failed and r.algorithm == "popscore" for r in res.records)


def test_empty_coreset_skipped():
    res = run_grid(PipelineConfig(core_levels=(0, 1000)), {"tiny": power_law_log(40, 30, 300)}, ["popscore"], ["ndcg"])
    assert [i.kind for i in res.issues] == ["empty-coreset"]
    assert {r.core_t for r in res.records} == {0}


def test_evaluate_counts_and_cold_users():
    train = log_from_pairs([("a", "x"), ("a", "y"), ("b", "y"), ("c", "z")])
    test = log_from_pairs([("a", "z"), ("d", "x")])
    model = PopScore().fit(train)
    vals, n, skipped = evaluate(model, test, [MetricSpec("precision", 1), MetricSpec("recall", 2)])
    # a -> [z]; d (cold) -> [y, x]
    assert n == 2
    assert skipped == 2
    assert vals["precision@1"] == pytest.approx(0.5)
    assert vals["recall@2"] == pytest.approx(1.0)


def test_eval_record_roundtrip_and_bounds():
    r = EvalRecord("d", 5, "phase1", "bpr", "ndcg", 10, 0.25, 7, seed_chain={"root": 1})
    assert EvalRecord.from_json(r.to_json()) == r
    with pytest.raises(ValueError):
        EvalRecord("d", 5, "phase1", "bpr", "ndcg", 10, 1.5, 7)


def test_config_hash_canonical():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_unknown_algorithm_rejected(datasets):
    with pytest.raises(ValueError):
        run_grid(CONFIG, datasets, ["lightgcn"])


def test_save_load_roundtrip(datasets, tmp_path):
    res = run_grid(CONFIG, datasets, ["popscore"], ["ndcg", "precision"])
    paths = save_results(res, tmp_path)
    assert {p.name for p in paths} == {"records.jsonl", "records.csv", "coresets.json", "issues.json"}
    back = load_results(tmp_path)
    assert back.records == res.records
    assert back.characteristics == res.characteristics
    assert back.retention == res.retention
    assert back.config_hash == res.config_hash
    lines = (tmp_path / "records.jsonl").read_text().splitlines()
    assert all(json.loads(x)["config_hash"] == res.config_hash for x in lines)
    # append-only
    save_results(res, tmp_path)
    assert len((tmp_path / "records.jsonl").read_text().splitlines()) == 2 * len(lines)
