import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from patientzero.network import (NetworkFormatError, StaticNetwork, TemporalNetwork,
                                 bfs_distances, graph_distance, load_static, load_temporal,
                                 make_lattice, make_synthetic_temporal, randomize_bins)


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_path_graph(tmp_path):
    g = load_static(write(tmp_path, "g.txt", "0 1\n1 2\n"))
    assert g.node_count == 3
    assert g.edge_count == 2
    assert g.edges() == [(0, 1), (1, 2)]


def test_load_rejects_self_loop(tmp_path):
    with pytest.raises(NetworkFormatError, match="self-loop at line 1"):
        load_static(write(tmp_path, "g.txt", "0 0\n"))


def test_load_dedups_edges(tmp_path):
    g = load_static(write(tmp_path, "g.txt", "0 1\n0 1\n1 0\n"))
    assert g.edge_count == 1


def test_load_parse_error_reports_line(tmp_path):
    with pytest.raises(NetworkFormatError, match="line 2"):
        load_static(write(tmp_path, "g.txt", "0 1\n7\n"))


def test_load_remaps_labels_and_writes_id_map(tmp_path):
    path = write(tmp_path, "g.txt", "# comment\n10 30\n30 20  # trailing\n")
    g = load_static(path, id_map_path=tmp_path / "ids.csv")
    assert g.labels == ("10", "20", "30")
    assert g.index_of(30) == 2
    assert (tmp_path / "ids.csv").read_text() == "original_id,dense_id\n10,0\n20,1\n30,2\n"


def test_load_string_labels(tmp_path):
    g = load_static(write(tmp_path, "g.txt", "bob alice\nalice carol\n"))
    assert g.labels == ("alice", "bob", "carol")
    assert graph_distance(g, g.index_of("bob"), g.index_of("carol")) == 2


def test_load_temporal_shift(tmp_path):
    tn = load_temporal(write(tmp_path, "t.txt", "1 2 999\n1 2 1005\n"), discard_before=1000)
    assert tn.events() == [(0, 1, 5)]


def test_load_temporal_identity(tmp_path):
    tn = load_temporal(write(tmp_path, "t.txt", "1 2 50\n"), discard_before=0)
    assert tn.events() == [(0, 1, 50)]


def test_load_temporal_sorts(tmp_path):
    tn = load_temporal(write(tmp_path, "t.txt", "0 1 9\n1 2 3\n0 2 5\n"))
    assert [t for _, _, t in tn.events()] == [3, 5, 9]


def test_load_temporal_empty_after_discard(tmp_path):
    with pytest.raises(NetworkFormatError):
        load_temporal(write(tmp_path, "t.txt", "0 1 3\n"), discard_before=10)


@pytest.mark.parametrize("rows,cols,nodes,edges", [(2, 2, 4, 4), (1, 5, 5, 4), (1, 1, 1, 0)])
def test_lattice_small(rows, cols, nodes, edges):
    g = make_lattice(rows, cols)
    assert (g.node_count, g.edge_count) == (nodes, edges)


def _lattice_edges_by_enumeration(rows, cols):
    cells = list(itertools.product(range(rows), range(cols)))
    return sum(1 for a, b in itertools.combinations(cells, 2)
               if abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1)


def test_lattice_30x30_edge_count():
    # independent count: pairs of grid cells at Manhattan distance 1
    expected = _lattice_edges_by_enumeration(30, 30)
    assert expected == 1740
    g = make_lattice(30, 30)
    assert g.node_count == 900
    assert g.edge_count == expected


@given(st.integers(1, 12), st.integers(1, 12))
def test_lattice_edge_formula_and_degree(rows, cols):
    g = make_lattice(rows, cols)
    assert g.edge_count == 2 * rows * cols - rows - cols
    assert max(g.degree(u) for u in range(g.node_count)) <= 4
    if rows >= 3 and cols >= 3:
        assert g.degree(cols + 1) == 4


def test_lattice_id_layout():
    g = make_lattice(3, 4)
    assert set(g.neighbors(5).tolist()) == {1, 4, 6, 9}


def test_graph_distance_basics():
    path = StaticNetwork.from_edges(3, [(0, 1), (1, 2)])
    assert graph_distance(path, 0, 2) == 2
    assert graph_distance(path, 1, 1) == 0
    two = StaticNetwork.from_edges(4, [(0, 1), (2, 3)])
    assert graph_distance(two, 0, 3) is None


edge_lists = st.integers(2, 9).flatmap(
    lambda n: st.tuples(st.just(n), st.sets(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1))
                                            .filter(lambda e: e[0] != e[1]), max_size=20)))


@given(edge_lists)
def test_adjacency_symmetric(data):
    n, edges = data
    g = StaticNetwork.from_edges(n, edges)
    for u in range(n):
        for v in g.neighbors(u):
            assert u in g.neighbors(v)
            assert u != v


@given(edge_lists, st.data())
def test_distance_metric_axioms(data, draw):
    n, edges = data
    g = StaticNetwork.from_edges(n, edges)
    u, v, w = (draw.draw(st.integers(0, n - 1)) for _ in range(3))
    duv, dvu = graph_distance(g, u, v), graph_distance(g, v, u)
    assert duv == dvu
    duw, dwv = graph_distance(g, u, w), graph_distance(g, w, v)
    if duw is not None and dwv is not None:
        assert duv is not None and duv <= duw + dwv


def test_bfs_unreachable_marker():
    g = StaticNetwork.from_edges(3, [(0, 1)])
    assert bfs_distances(g, 0).tolist() == [0, 1, -1]


def _bin_multisets(tn, delta):
    out = {}
    for _, _, t in tn.events():
        out.setdefault((t - tn.t_min) // delta, []).append(t)
    return {k: sorted(v) for k, v in out.items()}


def test_randomize_delta_one_keeps_days():
    tn = TemporalNetwork.from_events(4, [(0, 1, 0), (1, 2, 0), (2, 3, 1), (0, 3, 4)])
    out = randomize_bins(tn, 1, seed=3)
    assert sorted(out.events()) == sorted(tn.events())


def test_randomize_single_event_bin_unchanged():
    tn = TemporalNetwork.from_events(3, [(0, 1, 0), (1, 2, 10)])
    assert randomize_bins(tn, 5, seed=0).events() == tn.events()


@settings(max_examples=50)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5), st.integers(0, 60))
                .filter(lambda e: e[0] != e[1]), min_size=1, max_size=40),
       st.integers(1, 30), st.integers(0, 2 ** 32))
def test_randomize_preserves_bins_and_aggregate(events, delta, seed):
    tn = TemporalNetwork.from_events(6, events)
    out = randomize_bins(tn, delta, seed)
    assert len(out) == len(tn)
    assert _bin_multisets(out, delta) == _bin_multisets(tn, delta)
    assert out.aggregate().edges() == tn.aggregate().edges()
    assert sorted((u, v) for u, v, _ in out.events()) == sorted((u, v) for u, v, _ in tn.events())
    assert np.all(np.diff(out.times) >= 0)


def test_aggregate_edges_match_events():
    tn = TemporalNetwork.from_events(4, [(0, 1, 3), (1, 0, 5), (2, 3, 1)])
    assert tn.aggregate().edges() == [(0, 1), (2, 3)]


def test_synthetic_temporal_is_reproducible():
    a = make_synthetic_temporal(side=6, days=30, seed=4)
    b = make_synthetic_temporal(side=6, days=30, seed=4)
    assert a.events() == b.events()
    assert a.node_count == 36
    assert a.t_min >= 0 and a.t_max <= 29


def test_synthetic_temporal_contacts_are_grid_neighbours():
    tn = make_synthetic_temporal(side=5, days=200, contact_rate=0.3, seed=1)
    torus = {tuple(sorted(e)) for e in make_lattice(5, 5).edges()}
    torus |= {tuple(sorted((r * 5, r * 5 + 4))) for r in range(5)}
    torus |= {tuple(sorted((c, 20 + c))) for c in range(5)}
    assert set(tn.aggregate().edges()) <= torus
    # mean daily contacts per node close to the requested rate
    assert abs(len(tn) / (25 * 200) - 0.3) < 0.05
