import math

import numpy as np
from hypothesis import given, settings, strategies as st

from streamhop import oracle
from streamhop.hopset import HopsetEdge


def _triangle():
    return {(1, 2): 1.0, (2, 3): 1.0, (1, 3): 5.0}


def test_hop_bounded_examples():
    G = _triangle()
    assert oracle.hop_bounded_bf(3, G, 1, 1)[3] == 5.0
    assert oracle.hop_bounded_bf(3, G, 1, 2)[3] == 2.0
    assert oracle.hop_bounded_bf(3, G, 1, 0)[2] == math.inf
    # an extra edge counts as one hop
    assert oracle.hop_bounded_bf(3, G, 1, 1, [(1, 3, 2.5)])[3] == 2.5


def test_dijkstra_predecessors():
    d, pred = oracle.dijkstra(3, _triangle(), 1)
    assert d[3] == 2.0 and pred[3] == 2 and pred[2] == 1 and pred[1] == -1


def test_exact_bfs_ignores_weights():
    assert oracle.exact_bfs(3, _triangle(), [1])[3] == 1


def _random_graph(draw_edges, n):
    G = {}
    for a, b, w in draw_edges:
        a, b = 1 + a % n, 1 + b % n
        if a != b:
            G[(min(a, b), max(a, b))] = float(w)
    return G


@settings(max_examples=30)
@given(st.integers(2, 12), st.lists(st.tuples(st.integers(0, 50), st.integers(0, 50), st.integers(1, 9)),
                                    max_size=30))
def test_hop_bounded_agrees_with_dijkstra(n, raw):
    G = _random_graph(raw, n)
    d = oracle.dijkstra(n, G, 1)[0]
    full = oracle.hop_bounded_bf(n, G, 1, n - 1)
    assert np.allclose(full[1:], d[1:])
    prev = None
    for t in range(n):
        cur = oracle.hop_bounded_bf(n, G, 1, t)
        assert np.all(cur[1:] >= d[1:] - 1e-12)
        if prev is not None:
            assert np.all(cur <= prev)
        prev = cur


def test_validate_spanner_flags_foreign_and_stretch():
    G = {(1, 2): 1.0, (2, 3): 1.0, (3, 4): 1.0, (1, 4): 1.0}
    rep = oracle.validate_spanner(4, G, [(1, 2), (2, 3), (3, 4)], 0.0, 2, [(1, 4)])
    assert rep["ok"] and rep["worst_additive"]["slack"] == 2
    rep = oracle.validate_spanner(4, G, [(1, 2), (2, 3), (3, 4)], 0.0, 1, [(1, 4)])
    assert not rep["ok"] and rep["violations"] == 1
    rep = oracle.validate_spanner(4, G, [(1, 3)], 1.0, 10, [(1, 2)])
    assert rep["foreign_edges"] == 1 and not rep["ok"]


def test_validate_hopset_checks():
    G = {(i, i + 1): 1.0 for i in range(1, 6)}
    good = [HopsetEdge(1, 6, 5.0, 2, path=(1, 2, 3, 4, 5, 6))]
    assert oracle.validate_hopset(6, G, good, 0.1, 1, [(1, 6)])["ok"]
    short = [(1, 6, 4.0, None)]
    rep = oracle.validate_hopset(6, G, short, 0.1, 1, [(1, 6)])
    assert rep["short_edges"] == 1 and rep["lower_violations"] == 1 and not rep["ok"]
    assert oracle.validate_hopset(6, G, [], 0.1, 2, [(1, 6)])["upper_violations"] == 1
    broken = [HopsetEdge(1, 6, 5.0, 2, path=(1, 3, 6))]
    assert oracle.validate_hopset(6, G, broken, 0.1, 1, [(1, 6)])["path_errors"] == 1
    light = [HopsetEdge(1, 3, 2.5, 2, path=(1, 2, 3))]
    assert not oracle.validate_hopset(6, G, light, 0.5, 5, [(1, 3)])["ok"]
    assert oracle.validate_hopset(6, G, light, 0.5, 5, [(1, 3)], exact_paths=False)["ok"]


def test_sample_pairs_connected_and_deterministic():
    G = {(1, 2): 1.0, (3, 4): 1.0, (4, 5): 1.0}
    a = oracle.sample_pairs(6, G, 10, 3)
    assert a == oracle.sample_pairs(6, G, 10, 3)
    lab = oracle.components(6, G)
    assert all(lab[u] == lab[v] and u < v for u, v in a)


def test_stretch_of_cycle_minus_edge():
    G = {(1, 2): 1.0, (2, 3): 1.0, (3, 4): 1.0, (1, 4): 1.0}
    sub = {k: v for k, v in G.items() if k != (1, 4)}
    assert oracle.stretch(4, G, sub) == 3.0
