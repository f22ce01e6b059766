import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coreprune.corefilter import prune_users
from coreprune.dataset import InteractionLog
from coreprune.splitter import (
    ATOMIC_HEADER,
    Phase,
    SplitPair,
    build_phase2_test,
    export_atomic,
    holdout_count,
    read_atomic,
    split_per_user,
    split_phase2,
)

from conftest import log_from_pairs, random_pairs
from oracles import expected_test_count


def sized_users(sizes):
    "One user per requested size, user k consuming items 0..n-1."
    return log_from_pairs([(f"u{k:03d}", f"i{j:03d}") for k, n in enumerate(sizes) for j in range(n)])


def test_ten_interactions():
    p = split_per_user(sized_users([10]), 0.8, 1)
    assert p.train.n_interactions == 8
    assert p.test.n_interactions == 2


def test_single_interaction_stays_in_train():
    p = split_per_user(sized_users([1, 10]), 0.8, 1)
    assert "u000" in p.train.user_tokens.tolist()
    assert "u000" not in p.test.user_tokens.tolist()


def test_five_interactions():
    assert holdout_count(5, 0.8) == 1
    p = split_per_user(sized_users([5]), 0.8, 1)
    assert (p.train.n_interactions, p.test.n_interactions) == (4, 1)


def test_rounding_half_up():
    # 0.5 test share * 3 = 1.5 rounds up to 2
    assert holdout_count(3, 0.5) == 2
    assert holdout_count(2, 0.5) == 1
    # clamp keeps a training row
    assert holdout_count(2, 0.1) == 1


@pytest.mark.parametrize("n", range(1, 51))
def test_per_user_counts_exhaustive(n):
    assert holdout_count(n, 0.8) == expected_test_count(n)


def test_all_sizes_in_one_log():
    sizes = list(range(1, 51))
    p = split_per_user(sized_users(sizes), 0.8, 99)
    test_users = dict(zip(p.test.user_tokens.tolist(), p.test.per_user_counts.tolist()))
    for k, n in enumerate(sizes):
        assert test_users.get(f"u{k:03d}", 0) == expected_test_count(n)


def test_test_fraction_band(rng):
    log = log_from_pairs(random_pairs(rng, 30, 80, 900))
    p = split_per_user(log, 0.8, 5)
    tcounts = dict(zip(p.test.user_tokens.tolist(), p.test.per_user_counts.tolist()))
    for u, n in zip(log.user_tokens.tolist(), log.per_user_counts.tolist()):
        if n >= 5:
            assert 0.1 <= tcounts.get(u, 0) / n <= 0.3


def test_split_deterministic_and_seed_sensitive(rng):
    log = log_from_pairs(random_pairs(rng, 30, 80, 900))
    a = split_per_user(log, 0.8, 5)
    b = split_per_user(log, 0.8, 5)
    assert a.test == b.test and a.train == b.train
    assert split_per_user(log, 0.8, 6).test != a.test


def test_split_rejects_bad_fraction():
    with pytest.raises(ValueError):
        split_per_user(sized_users([4]), 1.0)


def test_split_uniform_selection():
    # each of 5 items should be held out for the single user ~1/5 of the time
    log = sized_users([5])
    hits = np.zeros(5)
    for seed in range(2000):
        t = split_per_user(log, 0.8, seed).test
        hits[int(t.item_tokens[0][1:])] += 1
    assert np.allclose(hits / 2000, 0.2, atol=0.03)


pair_sets = st.sets(
    st.tuples(st.sampled_from([f"u{n}" for n in range(12)]), st.sampled_from([f"i{n}" for n in range(15)])),
    min_size=2,
    max_size=120,
)


@given(pair_sets, st.integers(0, 1000))
def test_phase1_partition(pairs, seed):
    log = log_from_pairs(pairs)
    p = split_per_user(log, 0.8, seed)
    train = p.train.token_pairs()
    test = set() if p.test is None else p.test.token_pairs()
    assert not train & test
    assert train | test == pairs


def test_phase2_forced_singleton():
    train = log_from_pairs([("a", "x"), ("b", "y")])
    zero = log_from_pairs([("a", "x"), ("b", "y"), ("c", "z")])
    t = build_phase2_test(zero, train, 1, 0)
    assert t.token_pairs() == {("c", "z")}


def test_phase2_exhaustion():
    train = log_from_pairs([("a", "x")])
    zero = log_from_pairs([("a", "x"), ("a", "y"), ("b", "x")])
    t = build_phase2_test(zero, train, 10, 0)
    assert t.token_pairs() == {("a", "y"), ("b", "x")}


def test_phase2_deterministic():
    zero_pairs = {(f"u{u}", f"i{i}") for u in range(4) for i in range(5)}
    cand = {("u0", "i0"), ("u1", "i1"), ("u2", "i2"), ("u3", "i3"), ("u3", "i4")}
    train = log_from_pairs(zero_pairs - cand)
    zero = log_from_pairs(zero_pairs)
    a = build_phase2_test(zero, train, 3, 11)
    b = build_phase2_test(zero, train, 3, 11)
    assert a.token_pairs() == b.token_pairs()
    assert len(a.token_pairs()) == 3
    assert a.token_pairs() <= cand


def test_phase2_no_candidates():
    log = log_from_pairs([("a", "x")])
    with pytest.raises(ValueError):
        build_phase2_test(log, log, 1)


def test_phase2_excludes_only_train(rng):
    zero = log_from_pairs(random_pairs(rng, 20, 30, 300))
    core = prune_users(zero, 10).log
    p1 = split_per_user(core, 0.8, 3, core_t=10)
    p2 = split_phase2(p1, zero)
    assert p2.phase is Phase.PHASE2
    assert p2.train is p1.train
    assert p2.test.n_interactions == p1.test.n_interactions
    assert not p2.test.token_pairs() & p1.train.token_pairs()
    assert p2.test.token_pairs() <= zero.token_pairs()


@settings(max_examples=60)
@given(pair_sets, st.integers(0, 6), st.integers(0, 100))
def test_phase2_size_exhaustive(pairs, t, seed):
    zero = log_from_pairs(pairs)
    core = prune_users(zero, t)
    if core.empty:
        return
    train = split_per_user(core.log, 0.8, seed).train
    cand = pairs - train.token_pairs()
    if not cand:
        return
    for target in range(1, len(cand) + 2):
        test = build_phase2_test(zero, train, target, seed)
        got = test.token_pairs()
        assert len(got) == min(target, len(cand))
        assert got <= cand


def test_splitpair_rejects_overlap():
    log = log_from_pairs([("a", "x"), ("a", "y")])
    with pytest.raises(AssertionError):
        SplitPair(log, log, Phase.PHASE1, 0, 0)


def test_export_atomic(tmp_path):
    train = log_from_pairs([("a", "x"), ("b", "y")])
    test = log_from_pairs([("a", "y")])
    pair = SplitPair(train, test, Phase.PHASE1, 5, 9)
    paths = export_atomic(pair, tmp_path, "toy")
    lines = (tmp_path / "toy.train.inter").read_text().splitlines()
    assert len(lines) == 3
    assert lines[0] == ATOMIC_HEADER == "user_id:token\titem_id:token\tlabel:float"
    assert lines[1] == "a\tx\t1.0"
    meta = json.loads((tmp_path / "toy.split.json").read_text())
    assert meta == {"phase": "phase1", "core_t": 5, "seed": 9, "n_train": 2, "n_test": 1}
    assert len(paths) == 3


def test_export_rejects_tab_token(tmp_path):
    train = log_from_pairs([("a\tb", "x")])
    pair = SplitPair(train, None, Phase.PHASE1, 0, 0)
    with pytest.raises(ValueError):
        export_atomic(pair, tmp_path, "bad")


def test_export_roundtrip_and_bytes(tmp_path, rng):
    log = log_from_pairs(random_pairs(rng, 30, 40, 300) | {('q"uote', "i,comma")})
    pair = split_per_user(log, 0.8, 4)
    export_atomic(pair, tmp_path / "a", "d")
    export_atomic(split_per_user(log, 0.8, 4), tmp_path / "b", "d")
    assert read_atomic(tmp_path / "a" / "d.train.inter") == pair.train
    assert read_atomic(tmp_path / "a" / "d.test.inter") == pair.test
    for name in ("d.train.inter", "d.test.inter", "d.split.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
