import itertools
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from patientzero.network import StaticNetwork, TemporalNetwork, bfs_distances, make_lattice
from patientzero.spreading import (PQPrior, Snapshot, SpreadingParams, StaticSimulator,
                                   TemporalParams, TemporalSimulator, batch_simulate,
                                   observe_subset, read_snapshot, simulate_static,
                                   simulate_temporal, write_snapshot)

PATH3 = StaticNetwork.from_edges(3, [(0, 1), (1, 2)])
CYCLE4 = StaticNetwork.from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)])


def test_params_model_constraints():
    assert SpreadingParams("si", 0.3, 0.7, 2).q == 0.0
    assert SpreadingParams("IC", 0.3, 0.2, 2).q == 1.0
    with pytest.raises(ValueError):
        SpreadingParams("SIR", 1.5, 0.1, 2)
    with pytest.raises(ValueError):
        SpreadingParams("SIS", 0.5, 0.1, 2)
    with pytest.raises(ValueError):
        TemporalParams(0.3, 0.01, t0=10, t_end=5)


def test_snapshot_mask_invariant():
    with pytest.raises(ValueError):
        Snapshot({1, 2}, observed_mask={1})


def test_deterministic_path():
    out = simulate_static(PATH3, SpreadingParams("SIR", 1, 1, 1), 1, seed=0)
    assert out.ever_infected == {0, 1, 2}


@pytest.mark.parametrize("model", ["SIR", "SI", "IC"])
@pytest.mark.parametrize("T", [1, 4])
def test_no_transmission(model, T):
    g = make_lattice(4, 4)
    for seed in range(5):
        assert simulate_static(g, SpreadingParams(model, 0, 0.5, T), 5, seed).ever_infected == {5}


def _cycle_outcome_law():
    # two independent Bernoulli(1/2) attempts from node 0 to nodes 1 and 3
    law = Counter()
    for hit1, hit3 in itertools.product([0, 1], repeat=2):
        law[frozenset({0} | ({1} if hit1 else set()) | ({3} if hit3 else set()))] += 0.25
    return law


def test_cycle_one_step_frequencies():
    law = _cycle_outcome_law()
    assert law[frozenset({0, 1, 3})] == 0.25
    n = 200_000
    res = batch_simulate(CYCLE4, SpreadingParams("SIR", 0.5, 1, 1), 0, n, seed=11)
    target = np.array([1, 1, 0, 1], dtype=bool)
    freq = (res.ever == target).all(axis=1).mean()
    assert abs(freq - 0.25) < 4 * np.sqrt(0.25 * 0.75 / n)


def test_temporal_deterministic_contact():
    tn = TemporalNetwork.from_events(2, [(0, 1, 5)])
    assert simulate_temporal(tn, TemporalParams(1, 0, 0, 10), 0, 1).ever_infected == {0, 1}
    assert simulate_temporal(tn, TemporalParams(1, 0, 0, 4), 0, 1).ever_infected == {0}


def test_temporal_start_day_skips_earlier_contacts():
    tn = TemporalNetwork.from_events(2, [(0, 1, 5)])
    assert simulate_temporal(tn, TemporalParams(1, 0, 6, 10), 0, 1).ever_infected == {0}


def test_temporal_chain_recovery_branch():
    # contacts a-b on day 1, b-c on day 2, p = 1. c is infected iff a survives the
    # day 0|1 boundary and b survives the day 1|2 boundary: (1 - q)^2.
    tn = TemporalNetwork.from_events(3, [(0, 1, 1), (1, 2, 2)])
    one = batch_simulate(tn, TemporalParams(1, 1, 0, 10), 0, 1000, seed=2)
    assert not one.ever[:, 2].any()
    n = 200_000
    half = batch_simulate(tn, TemporalParams(1, 0.5, 0, 10), 0, n, seed=2)
    assert abs(half.ever[:, 2].mean() - 0.25) < 4 * np.sqrt(0.25 * 0.75 / n)


def test_temporal_same_day_relay():
    # file order within a day: a-b then b-c lets the infection cross both contacts
    tn = TemporalNetwork.from_events(3, [(0, 1, 3), (1, 2, 3)])
    assert simulate_temporal(tn, TemporalParams(1, 0, 0, 5), 0, 0).ever_infected == {0, 1, 2}


def test_batch_n1_matches_single():
    prm = SpreadingParams("SIR", 0.6, 0.3, 4)
    g = make_lattice(5, 5)
    assert batch_simulate(g, prm, 12, 1, seed=9)[0] == simulate_static(g, prm, 12, seed=9)


def test_batch_deterministic_and_jobs_invariant():
    prm = SpreadingParams("SIR", 0.5, 0.5, 4)
    g = make_lattice(30, 30)
    a = batch_simulate(g, prm, 400, 10_000, seed=3)
    b = batch_simulate(g, prm, 400, 10_000, seed=3)
    c = batch_simulate(g, prm, 400, 10_000, seed=3, jobs=3)
    assert np.array_equal(a.ever, b.ever)
    assert np.array_equal(a.ever, c.ever)
    assert not np.array_equal(a.ever, batch_simulate(g, prm, 400, 10_000, seed=4).ever)


def test_batch_deterministic_path_all_identical():
    res = batch_simulate(PATH3, SpreadingParams("SIR", 1, 1, 1), 0, 50, seed=0)
    assert all(o.ever_infected == {0, 1} for o in res)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 7), st.integers(2, 7), st.integers(1, 6), st.integers(0, 10 ** 6))
def test_p1_q1_reaches_exactly_distance_T(rows, cols, T, seed):
    g = make_lattice(rows, cols)
    src = seed % g.node_count
    out = simulate_static(g, SpreadingParams("SIR", 1, 1, T), src, seed)
    d = bfs_distances(g, src)
    assert out.ever_infected == set(np.flatnonzero((d >= 0) & (d <= T)).tolist())


def _chunk_history(g, prm, source, steps):
    """Ever-infected sets after 1..steps steps, replaying one seed with growing T."""
    return [simulate_static(g, SpreadingParams(prm.model, prm.p, prm.q, t), source, 77).ever_infected
            for t in range(1, steps + 1)]


def test_source_always_in_outcome():
    g = make_lattice(6, 6)
    res = batch_simulate(g, SpreadingParams("SIR", 0.4, 0.4, 5), 14, 2000, seed=1)
    assert res.ever[:, 14].all()


def test_ever_infected_monotone_in_time():
    # the first T steps of a run do not depend on the horizon, so growing T replays it
    g = make_lattice(6, 6)
    for model in ("SIR", "SI", "IC"):
        hist = _chunk_history(g, SpreadingParams(model, 0.5, 0.5, 1), 14, 6)
        for a, b in zip(hist, hist[1:]):
            assert a <= b


def test_sir_q1_matches_ic_in_distribution():
    g = StaticNetwork.from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 2)])
    n = 100_000
    sir = batch_simulate(g, SpreadingParams("SIR", 0.4, 1, 3), 0, n, seed=1)
    ic = batch_simulate(g, SpreadingParams("IC", 0.4, 1, 3), 0, n, seed=2)

    def counts(res):
        keys = res.ever @ (1 << np.arange(4))
        return np.bincount(keys, minlength=16)

    table = np.array([counts(sir), counts(ic)])
    table = table[:, table.sum(axis=0) > 0]
    _, pvalue, _, _ = stats.chi2_contingency(table)
    assert pvalue > 0.01


def test_pruned_runs_contain_one_foreign_node():
    g = make_lattice(6, 6)
    snap = Snapshot({14, 15, 20, 8})
    res = batch_simulate(g, SpreadingParams("SIR", 0.6, 0.3, 5), 14, 5000, seed=5, prune_target=snap)
    allowed = np.zeros(36, dtype=bool)
    allowed[list(snap.ever_infected)] = True
    foreign = (res.ever & ~allowed).sum(axis=1)
    assert np.all(foreign[~res.pruned] == 0)
    assert np.all(foreign[res.pruned] == 1)
    assert res.pruned.any()


def test_pruning_keeps_exact_matches():
    g = make_lattice(4, 4)
    prm = SpreadingParams("SIR", 0.5, 0.5, 3)
    snap = Snapshot({5, 6, 9})
    target = np.zeros(16, dtype=bool)
    target[[5, 6, 9]] = True
    n = 100_000
    free = (batch_simulate(g, prm, 5, n, seed=8).ever == target).all(1)
    res = batch_simulate(g, prm, 5, n, seed=9, prune_target=snap)
    pruned = (res.ever == target).all(1)
    assert not (pruned & res.pruned).any()
    # pruning reorders random draws within a chunk, so compare match rates
    pooled = (free.sum() + pruned.sum()) / (2 * n)
    assert abs(free.mean() - pruned.mean()) < 4 * np.sqrt(2 * pooled * (1 - pooled) / n)


def test_early_exit_only_stops_hopeless_runs():
    g = make_lattice(10, 10)
    prm = SpreadingParams("SIR", 0.7, 0.3, 5)
    sim = StaticSimulator(g, prm)
    snap = Snapshot({44, 45, 54})
    (ever, flag), = sim.chunks(44, 2000, 1, snapshot=snap, early_exit_width=0.05)
    t = np.zeros(100, dtype=bool)
    t[[44, 45, 54]] = True
    union = (ever | t).sum(1)
    bound = 3 / union
    assert np.all(1 - bound[flag] > 0.05 * np.sqrt(-np.log(1e-12)))


def test_pq_prior_validation():
    with pytest.raises(ValueError):
        PQPrior(((0.5, 0.5), (0.1, 0.1)), (0.5, 0.6))
    PQPrior(((0.5, 0.5),), (1.0,))


def test_t0_window_draws():
    tn = TemporalNetwork.from_events(2, [(0, 1, 5)])
    sim = TemporalSimulator(tn, TemporalParams(1, 0, 0, 10), t0_window=(4, 7))
    (ever, _), = sim.chunks(0, 20_000, 3)
    # infected iff the start day is <= 5: days 4 and 5 of {4, 5, 6, 7}
    assert abs(ever[:, 1].mean() - 0.5) < 0.02


def test_snapshot_file_roundtrip(tmp_path):
    g = StaticNetwork.from_edges(3, [(0, 1), (1, 2)], labels=("a", "b", "c"))
    snap = Snapshot({0, 2}, observed_mask={0, 1, 2})
    write_snapshot(snap, tmp_path / "s.txt", g.labels, tmp_path / "o.txt")
    assert (tmp_path / "s.txt").read_text() == "a\nc\n"
    back = read_snapshot(tmp_path / "s.txt", g, tmp_path / "o.txt")
    assert back == snap


def test_observe_subset():
    snap = observe_subset({1, 2, 3, 4}, 20, 0.5, seed=1)
    assert len(snap.observed_mask) == 10
    assert snap.ever_infected == {1, 2, 3, 4} & snap.observed_mask
