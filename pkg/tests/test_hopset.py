import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from streamhop import oracle
from streamhop.explore import lambda_bound
from streamhop.hopset import (MAX_PASSES, Contraction, HopsetEdge, aspect_ratio_reduce, hopset_params,
                              inner_params, light_class, multi_scale_hopset, path_weight, relevant_scales_of,
                              single_scale_hopset)
from streamhop.stream import final_edges, generate_stream

from support import path_edges, stream_of


def test_faithful_parameters_frozen():
    p = hopset_params(120, 0.5, 4, 0.5, 256)
    assert p.ell == 3 and p.i0 == 1
    assert p.eps2 == pytest.approx(1 / 64)
    assert p.eps == pytest.approx(1 / 6144)
    assert (p.k0, p.k_lam) == (37, 7)
    assert list(p.scales) == []
    assert p.pass_count() == 0


def test_override_parameters():
    p = hopset_params(120, 0.5, 2, 0.5, 256, beta_override=4)
    assert p.ell == 2 and p.eps == pytest.approx(0.5)
    assert p.beta == 4 and p.k0 == 2 and p.hops == 9 == p.hopbound


@pytest.mark.parametrize("lam", [4, 64, 1024, 2 ** 20])
def test_slack_recursion_matches_closed_form(lam):
    p = hopset_params(500, 0.3, 2, 0.5, lam, beta_override=2)
    for k in range(p.k0, p.k_lam + 1):
        closed = (1 + p.eps2) ** (2 * (k - p.k0 + 1)) - 1
        assert p.eps_k(k) == pytest.approx(closed, rel=1e-12)
    assert p.eps_k(p.k0 - 1) == 0.0


@pytest.mark.parametrize("lam", [2, 100, 2 ** 30])
def test_top_slack_within_target(lam):
    p = hopset_params(1000, 0.5, 4, 0.5, lam)
    assert p.eps_k(p.k_lam) <= p.eps_prime


def test_schedule_growth():
    p = hopset_params(100, 0.5, 2, 0.5, 64, beta_override=4)
    delta, radius = p.schedule(3)
    assert radius[0] == 0
    for i in range(1, len(delta)):
        assert radius[i] == pytest.approx(radius[i - 1] + delta[i - 1])
        assert delta[i] == pytest.approx(p.eps ** p.ell * 2 ** 4 / p.eps ** i + 4 * radius[i])
    assert all(a > b for a, b in zip(p.scaled_delta(3), delta))


@pytest.mark.parametrize("bad", [dict(eps_prime=0), dict(eps_prime=1), dict(kappa=1), dict(rho=0.7),
                                 dict(rho=0.1), dict(lam=0.5), dict(beta_override=0.5)])
def test_rejects_bad_parameters(bad):
    args = dict(n=50, eps_prime=0.5, kappa=4, rho=0.5, lam=16)
    args.update(bad)
    with pytest.raises(ValueError):
        hopset_params(**args)


def test_huge_schedule_refused():
    s = stream_of(10, path_edges(10, weight=1.0), weighted=True)
    with pytest.raises(ValueError, match="passes"):
        multi_scale_hopset(s, 0.5, 2, 0.5, 2 ** 40, beta_override=1e5)
    assert MAX_PASSES == 1_000_000


def test_scale_below_first_is_empty():
    s = stream_of(5, path_edges(5, weight=1.0), weighted=True)
    p = hopset_params(5, 0.5, 2, 0.5, 64, beta_override=4)
    assert single_scale_hopset(s, p.k0 - 1, [], p) == []
    assert s.passes_taken == 0


def test_single_edge_hop_is_exact():
    p = hopset_params(2, 0.5, 2, 0.5, 16, beta_override=4)
    found = 0
    for seed in range(6):
        s = stream_of(2, [(1, 2, 5.0)], weighted=True)
        out = single_scale_hopset(s, 2, [], p, seed=seed)
        assert len(out) <= 1
        for e in out:
            assert e.key() == (1, 2) and e.weight == 5.0 and e.path in ((1, 2), (2, 1))
        found += len(out)
    assert found > 0


def _check(n, G, H, hopbound, eps, seed, count=300):
    pairs = oracle.sample_pairs(n, G, count, seed)
    rep = oracle.validate_hopset(n, G, H.edges, eps, hopbound, pairs)
    assert rep["ok"], rep
    return rep


def test_unit_path_graph():
    n = 30
    s = stream_of(n, path_edges(n, weight=1.0), weighted=True)
    G = final_edges(s)
    H = multi_scale_hopset(s, 0.5, 2, 0.5, lambda_bound(s), seed=3, beta_override=4)
    assert len(H) > 0
    assert H.passes == H.params.pass_count()
    _check(n, G, H, H.hopbound, 0.5, 3)
    # nothing shorter than the graph distance and every path is a walk in G
    for e in H.edges:
        assert e.weight == abs(e.u - e.v)
        assert path_weight(e.path, G) == e.weight


@pytest.mark.parametrize("seed", range(2))
def test_random_weighted_graph(seed):
    n = 40
    s = generate_stream(n, 90, churn=1, weighted=True, max_weight=6, seed=seed)
    G = final_edges(s)
    H = multi_scale_hopset(s, 0.5, 2, 0.5, lambda_bound(s), seed=seed, beta_override=4)
    rep = _check(n, G, H, H.hopbound, 0.5, seed)
    assert rep["paths_checked"] == len(H)


def test_all_equal_weights():
    n = 30
    rng = np.random.default_rng(5)
    edges = {(min(a, b), max(a, b)) for a, b in rng.integers(1, n + 1, size=(80, 2)) if a != b}
    s = stream_of(n, [(a, b, 3.0) for a, b in sorted(edges)], weighted=True)
    G = final_edges(s)
    H = multi_scale_hopset(s, 0.5, 2, 0.5, lambda_bound(s), seed=1, beta_override=4)
    _check(n, G, H, H.hopbound, 0.5, 1)
    assert all(e.weight % 3 == 0 for e in H.edges)


def test_without_path_reporting():
    s = stream_of(12, path_edges(12, weight=1.0), weighted=True)
    H = multi_scale_hopset(s, 0.5, 2, 0.5, 16, seed=0, path_reporting=False, beta_override=4)
    assert H.edges and all(e.path is None for e in H.edges)


def test_path_weight():
    w = {(1, 2): 2.0, (2, 3): 1.5}
    assert path_weight((3, 2, 1), w) == 3.5
    with pytest.raises(KeyError):
        path_weight((1, 3), w)


def test_star_weight_example():
    con = Contraction(8, 0.5, 0, 5)
    assert con.unit(4) == 1.0
    assert con.unit(4) * 3 == 3.0


@given(st.floats(1e-3, 1e6), st.integers(2, 5000))
def test_light_class_brackets_weight(w, n):
    eps = 0.05
    k = int(light_class(np.array([w]), n, eps, -1000)[0])
    assert eps / n * 2.0 ** (k - 1) < w <= eps / n * 2.0 ** k


@given(st.floats(1e-3, 1e6), st.integers(2, 5000))
def test_relevant_scales_match_direct_scan(w, n):
    direct = [k for k in range(-40, 80) if 2.0 ** k / n < w <= 2.0 ** (k + 1)]
    assert relevant_scales_of(w, n) == direct


@given(st.floats(0.01, 1.0), st.integers(1, 20), st.integers(1, 20), st.integers(2, 400), st.integers(-3, 12))
def test_node_weights_stay_in_inner_range(frac, sx, sy, n, k):
    eps = 0.02
    con = Contraction(n, eps, -5, 20)
    con.size[k] = np.array([0, sx, sy])
    w = frac * 2.0 ** (k + 1)
    W = con.node_edge_weight(k, w, 1, 2) / (2 * con.unit(k))
    assert 1.0 <= W
    if sx + sy <= n:
        assert W <= math.ceil(2 * n / eps)


def test_inner_parameters_cover_normalized_range():
    p = inner_params(50, 0.5, 2, 0.5, 0.5 / 24, 4)
    assert p.lam == math.ceil(2 * 50 / (0.5 / 24))
    assert p.eps_prime == pytest.approx(0.125)


def _union_find_components(n, G, eps, k0, k):
    parent = list(range(n + 1))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for (a, b), w in G.items():
        if light_class(np.array([w]), n, eps, k0)[0] <= k:
            parent[find(a)] = find(b)
    return [find(v) for v in range(n + 1)]


def _same_partition(a, b):
    pairs = {}
    for x, y in zip(a[1:], b[1:]):
        if pairs.setdefault(x, y) != y:
            return False
    return len(set(pairs.values())) == len(pairs)


@pytest.mark.parametrize("seed", range(3))
def test_contraction_matches_union_find(seed):
    n = 80
    s = generate_stream(n, 200, churn=1, weighted=True, max_weight=1000, log_weights=True, seed=seed)
    G = final_edges(s)
    H = aspect_ratio_reduce(s, 0.5, 2, 0.5, seed=seed, beta_override=4, contraction_only=True)
    assert s.passes_taken == 1
    con = H.info["contraction"]
    eps, k0 = H.info["eps"], H.info["k0"]
    for k in range(k0, H.info["k_lam"] + 1):
        assert _same_partition(con.components[k], _union_find_components(n, G, eps, k0, k))
        # centers are members of their own node
        for v in range(1, n + 1):
            c = con.center[k][v]
            assert con.components[k][c] == con.components[k][v]
    assert len(con.stars) <= n * math.ceil(math.log2(n))
    # star edges never undercut the graph
    for c, v, w, k in con.stars:
        d = oracle.dijkstra(n, G, c)[0][v]
        assert d <= w + 1e-9


def test_small_full_reduction():
    n = 20
    s = generate_stream(n, 45, churn=1, weighted=True, max_weight=200, log_weights=True, seed=4)
    G = final_edges(s)
    H = aspect_ratio_reduce(s, 0.5, 2, 0.5, seed=4, beta_override=4)
    assert H.reduced and H.hopbound == 3 * H.params.hops + 2
    pairs = oracle.sample_pairs(n, G, 200, 4)
    rep = oracle.validate_hopset(n, G, H.edges, 0.5, H.hopbound, pairs, exact_paths=False)
    assert rep["ok"], rep
    for e in H.edges:
        assert e.path[0] in (e.u, e.v) and e.path[-1] in (e.u, e.v)
        assert path_weight(e.path, G) <= e.weight * (1 + 1e-9)


def test_edge_key_orientation():
    assert HopsetEdge(5, 2, 1.0, 0).key() == (2, 5)
