import math

import numpy as np
import pytest

from streamhop import oracle
from streamhop.hopset import path_weight
from streamhop.paths import apasp_unweighted, multi_source_asp_unweighted, multi_source_asp_weighted
from streamhop.stream import final_edges, generate_stream

from support import path_edges, stream_of


def test_apasp_path_graph_is_exact():
    n = 25
    s = stream_of(n, path_edges(n))
    ap = apasp_unweighted(s, 0.5, kappa=4, rho=0.5, seed=1)
    assert ap.spanner.edges == set(path_edges(n))
    assert ap.distance(3, 20) == 17 == ap.distance(20, 3)
    assert ap.distance(7, 7) == 0


@pytest.mark.parametrize("seed", range(2))
def test_apasp_random_graph(seed):
    n = 300
    s = generate_stream(n, 900, churn=1, seed=seed)
    G = final_edges(s)
    ap = apasp_unweighted(s, 0.5, kappa=4, rho=0.5, seed=seed)
    beta = ap.spanner.params.beta
    assert ap.passes == s.passes_taken
    D = oracle.distances_from(n, G, range(1, 31), weighted=False)
    for i, u in enumerate(range(1, 31)):
        row = ap.row(u)
        finite = np.isfinite(D[i])
        assert np.all(row[finite] >= D[i][finite])
        assert np.all(row[finite] <= 1.5 * D[i][finite] + beta)
        assert np.all(~np.isfinite(row[~finite]))


def test_sources_checked():
    s = stream_of(16, path_edges(16))
    with pytest.raises(ValueError):
        multi_source_asp_unweighted(s, [], 0.5)
    with pytest.raises(ValueError):
        multi_source_asp_unweighted(s, [0], 0.5)
    with pytest.raises(ValueError):
        multi_source_asp_unweighted(s, [1, 2, 3, 4, 5], 0.5, rho=0.5)


@pytest.mark.parametrize("seed", range(2))
def test_multi_source_unweighted(seed):
    n = 200
    s = generate_stream(n, 500, churn=1, seed=seed)
    G = final_edges(s)
    sources = [1, 17, 99]
    ms = multi_source_asp_unweighted(s, sources, 0.5, rho=0.5, kappa=4, seed=seed)
    D = oracle.distances_from(n, G, ms.sources, weighted=False)
    finite = np.isfinite(D)
    assert np.all(ms.dist[finite] >= D[finite])
    assert np.all(ms.dist[finite] <= 1.5 * D[finite] + 1e-9)
    near = D <= ms.depth
    assert np.array_equal(ms.dist[near], D[near])
    assert ms.passes == s.passes_taken


def test_weighted_path_graph():
    n = 20
    s = stream_of(n, path_edges(n, weight=2.0))
    ws = multi_source_asp_weighted(s, [1, 10], 0.3, rho=0.5, seed=2)
    assert ws.dist[0, 20] == 38 and ws.dist[1, 1] == 18
    assert ws.path(1, 5) == (1, 2, 3, 4, 5)


@pytest.mark.parametrize("override", [None, 4])
def test_weighted_random_graph(override):
    n = 60
    s = generate_stream(n, 150, churn=1, weighted=True, max_weight=5, seed=7)
    G = final_edges(s)
    sources = [2, 30, 45]
    ws = multi_source_asp_weighted(s, sources, 0.5, rho=0.5, kappa=2, seed=7, beta_override=override)
    D = oracle.distances_from(n, G, ws.sources)
    finite = np.isfinite(D)
    assert np.all(ws.dist[finite] >= D[finite] * (1 - 1e-9))
    assert np.all(ws.dist[finite] <= 1.5 * D[finite] * (1 + 1e-9))
    assert np.all(~np.isfinite(ws.dist[~finite]))
    for i, src in enumerate(ws.sources):
        for v in (5, 17, 33, 59):
            p = ws.path(src, v)
            if not math.isfinite(ws.dist[i, v]):
                assert p is None
                continue
            assert p[0] == src and p[-1] == v
            assert path_weight(p, G) == pytest.approx(ws.dist[i, v])
    if override is not None:
        assert ws.hops == ws.hopset.hopbound == 9


def test_weighted_with_reduction():
    n = 18
    s = generate_stream(n, 40, churn=1, weighted=True, max_weight=100, log_weights=True, seed=3)
    G = final_edges(s)
    ws = multi_source_asp_weighted(s, [1, 9], 0.5, rho=0.5, kappa=2, seed=3, beta_override=4,
                                   reduce_aspect=True)
    D = oracle.distances_from(n, G, ws.sources)
    finite = np.isfinite(D)
    assert np.all(ws.dist[finite] >= D[finite] * (1 - 1e-9))
    assert np.all(ws.dist[finite] <= 1.5 * D[finite] * (1 + 1e-9))
    assert ws.hopset.reduced
