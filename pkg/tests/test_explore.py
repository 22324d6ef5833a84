import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from streamhop import oracle
from streamhop.explore import (LINK_STREAM, Overlay, approx_bellman_ford, bfs_forest, edge_key, in_range,
                               lambda_bound, range_bounds, range_index, repetitions)
from streamhop.stream import final_edges, generate_stream

from support import path_edges, stream_of


def test_bfs_on_a_path():
    s = stream_of(10, path_edges(10))
    f = bfs_forest(s, [1], eta=3, seed=1)
    assert {v: int(f.layer[v]) for v in (1, 2, 3, 4)} == {1: 0, 2: 1, 3: 2, 4: 3}
    assert all(f.layer[v] < 0 for v in range(5, 11))
    assert f.passes == 3 == s.passes_taken
    assert f.path_to_root(4) == [4, 3, 2, 1]


def test_bfs_all_roots():
    s = stream_of(5, path_edges(5))
    f = bfs_forest(s, [1, 2, 3, 4, 5], eta=2, seed=0)
    assert f.edges == []
    assert np.all(f.layer[1:] == 0)


@pytest.mark.parametrize("seed", range(5))
def test_bfs_layers_match_oracle(seed):
    s = generate_stream(120, 360, churn=1, seed=seed)
    roots = [1, 50]
    f = bfs_forest(s, roots, eta=4, seed=seed)
    d = oracle.exact_bfs(120, final_edges(s), roots)
    want = np.where(d <= 4, d, -1)
    assert np.array_equal(f.layer[1:], want[1:].astype(int))
    assert s.passes_taken == 4
    G = final_edges(s)
    for v, p in f.edges:
        assert (min(v, p), max(v, p)) in G
        assert f.layer[p] == f.layer[v] - 1


def test_bf_single_edge_is_exact():
    s = stream_of(2, [(1, 2, 5.0)])
    est = approx_bellman_ford(s, [1], eta=1, zeta=0.1, lam_bound=5)
    assert est.dist[2] == 5.0


def test_bf_triangle():
    s = stream_of(3, [(1, 2, 1.0), (2, 3, 1.0), (1, 3, 3.0)])
    est = approx_bellman_ford(s, [1], eta=2, zeta=0.2, lam_bound=6)
    assert 2 <= est.dist[3] <= 2.4


@pytest.mark.parametrize("seed", range(4))
def test_bf_sandwich_and_paths(seed):
    n = 80
    s = generate_stream(n, 240, churn=1, weighted=True, max_weight=32, seed=seed)
    G = final_edges(s)
    eta, zeta = 5, 0.25
    est = approx_bellman_ford(s, [1, 2], eta, zeta, lambda_bound(s), seed=seed)
    d = oracle.hop_bounded(n, G, [1, 2], eta)
    fin = np.isfinite(d)
    assert np.array_equal(np.isfinite(est.dist[1:]), fin[1:])
    assert np.all(est.dist[fin] >= d[fin])
    assert np.all(est.dist[fin] <= (1 + zeta) * d[fin] + 1e-9)
    for v in np.flatnonzero(fin[1:]) + 1:
        verts, links, weights = est.path(int(v))
        assert verts[0] in (1, 2) and verts[-1] == v
        assert all(link == LINK_STREAM for link in links)
        total = sum(G[(min(a, b), max(a, b))] for a, b in zip(verts, verts[1:]))
        assert total == est.dist[v] == sum(weights)


def test_bf_with_overlay_edges():
    # a long path plus an exact shortcut from 1 to 9
    s = stream_of(10, path_edges(10, 2.0))
    ov = Overlay.from_edges([(1, 9, 16.0)])
    est = approx_bellman_ford(s, [1], eta=2, zeta=0.1, lam_bound=18, overlay=ov)
    assert est.dist[9] == 16.0
    assert est.dist[10] == 18.0
    verts, links, _ = est.path(10)
    assert verts == [1, 9, 10] and links == [0, LINK_STREAM]


@given(st.floats(0.001, 1.0), st.floats(1.0, 1e6))
def test_range_bounds_cover(zeta_p, top):
    b = range_bounds(zeta_p, top)
    assert b[0] == 1.0 and b[-1] >= top
    assert np.all(np.diff(b) > 0)
    xs = np.linspace(1.0, top, 50)
    j = range_index(xs, b)
    assert np.all(in_range(xs, j, b))


def test_repetitions_and_keys():
    assert repetitions(100) == math.ceil(3 * math.log(100) / math.log(8 / 7))
    assert edge_key(3, 2, 10) == edge_key(2, 3, 10) == 2 * 11 + 3


def test_lambda_bound_takes_one_pass():
    s = stream_of(4, [(1, 2, 3.0), (2, 3, 7.0)])
    assert lambda_bound(s) == 3 * 7.0
    assert s.passes_taken == 1
