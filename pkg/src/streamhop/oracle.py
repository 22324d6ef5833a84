"""Offline reference computations used to check the streaming constructions.

Everything here reads the final graph directly and is not charged to the
pass counter.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from .hashing import rng_for
from .stream import MultipassStream, final_edges


def adjacency(n: int, edges: dict, weighted: bool = True):
    """Symmetric CSR matrix on vertices 0..n (row 0 unused)."""
    if not edges:
        return coo_matrix((n + 1, n + 1)).tocsr()
    uv = np.array(list(edges.keys()), dtype=np.int64)
    w = np.array([edges[k] if weighted else 1.0 for k in edges], dtype=np.float64)
    rows = np.concatenate([uv[:, 0], uv[:, 1]])
    cols = np.concatenate([uv[:, 1], uv[:, 0]])
    data = np.concatenate([w, w])
    return coo_matrix((data, (rows, cols)), shape=(n + 1, n + 1)).tocsr()


def graph_of(stream: MultipassStream) -> dict:
    return final_edges(stream)


def distances_from(n: int, edges: dict, sources, weighted: bool = True) -> np.ndarray:
    """Exact distances, shape (len(sources), n+1); inf where unreachable."""
    A = adjacency(n, edges, weighted)
    src = np.asarray(list(sources), dtype=np.int64)
    if len(src) == 0:
        return np.empty((0, n + 1))
    return shortest_path(A, method="D", directed=False, unweighted=not weighted, indices=src)


def all_pairs(n: int, edges: dict, weighted: bool = True) -> np.ndarray:
    return distances_from(n, edges, range(n + 1), weighted)


def multi_source(n: int, edges: dict, sources, weighted: bool = True) -> np.ndarray:
    """Distance from the nearest source."""
    d = distances_from(n, edges, sources, weighted)
    return d.min(axis=0) if len(d) else np.full(n + 1, math.inf)


def _edge_arrays(edges: dict, extra_edges=()):
    items = [(a, b, w) for (a, b), w in edges.items()] + [(int(a), int(b), float(w)) for a, b, w in extra_edges]
    if not items:
        z = np.empty(0, dtype=np.int64)
        return z, z, np.empty(0)
    a, b, w = zip(*items)
    a = np.array(a, dtype=np.int64)
    b = np.array(b, dtype=np.int64)
    w = np.array(w, dtype=np.float64)
    return np.concatenate([a, b]), np.concatenate([b, a]), np.concatenate([w, w])


def hop_bounded(n: int, edges: dict, sources, hops: int, extra_edges=()) -> np.ndarray:
    """Shortest distances using at most ``hops`` edges (multi-source), by synchronous relaxation rounds."""
    src, dst, w = _edge_arrays(edges, extra_edges)
    d = np.full(n + 1, math.inf)
    d[list(sources)] = 0.0
    for _ in range(min(hops, n)):
        nd = d.copy()
        np.minimum.at(nd, dst, d[src] + w)
        if np.array_equal(nd, d):
            break
        d = nd
    return d


def hop_bounded_bf(n: int, edges: dict, s: int, t_hops: int, extra_edges=()) -> np.ndarray:
    """d^(t)(s, v) for every v: the lightest path from s with at most t edges."""
    return hop_bounded(n, edges, [s], t_hops, extra_edges)


def exact_bfs(n: int, edges: dict, sources) -> np.ndarray:
    """Hop distance from the nearest source, ignoring weights."""
    return multi_source(n, edges, sources, weighted=False)


def dijkstra(n: int, edges: dict, s: int) -> tuple[np.ndarray, np.ndarray]:
    """Weighted distances from s and a shortest-path parent per vertex (-1 at s or unreachable)."""
    d, pred = shortest_path(adjacency(n, edges, True), directed=False, indices=[s], return_predecessors=True)
    pred = pred[0].astype(np.int64)
    pred[pred < 0] = -1
    return d[0], pred


def hop_bounded_pairs(n: int, edges: dict, pairs, hops: int, extra_edges=()) -> np.ndarray:
    """d^(hops)(u, v) for each pair, grouping pairs by source."""
    out = np.empty(len(pairs))
    by_src: dict[int, list[int]] = {}
    for i, (u, _) in enumerate(pairs):
        by_src.setdefault(u, []).append(i)
    for u, idx in by_src.items():
        d = hop_bounded(n, edges, [u], hops, extra_edges)
        for i in idx:
            out[i] = d[pairs[i][1]]
    return out


def components(n: int, edges: dict) -> np.ndarray:
    _, lab = connected_components(adjacency(n, edges, False), directed=False)
    return lab


def sample_pairs(n: int, edges: dict, count: int, seed: int, hubs: int = 32) -> list[tuple[int, int]]:
    """Uniform connected pairs plus all pairs among the highest-degree vertices."""
    lab = components(n, edges)
    rng = rng_for(seed, "pairs")
    out = set()
    tries = 0
    while len(out) < count and tries < 50 * count:
        tries += 1
        a, b = (int(x) for x in rng.integers(1, n + 1, size=2))
        if a != b and lab[a] == lab[b]:
            out.add((min(a, b), max(a, b)))
    deg = np.zeros(n + 1, dtype=np.int64)
    for a, b in edges:
        deg[a] += 1
        deg[b] += 1
    top = [int(v) for v in np.argsort(-deg[1:], kind="stable")[:hubs] + 1]
    for i, a in enumerate(top):
        for b in top[i + 1:]:
            if lab[a] == lab[b]:
                out.add((min(a, b), max(a, b)))
    return sorted(out)


def stretch(n: int, edges: dict, sub: dict, weighted: bool = False) -> float:
    """Largest d_sub(u,v) / d_G(u,v) over edges of G (which bounds all pairs)."""
    if not edges:
        return 1.0
    A = adjacency(n, sub, weighted)
    us = sorted({a for a, _ in edges})
    d = shortest_path(A, directed=False, unweighted=not weighted, indices=us)
    row = {u: i for i, u in enumerate(us)}
    worst = 1.0
    for (a, b), w in edges.items():
        base = w if weighted else 1.0
        worst = max(worst, d[row[a], b] / base)
    return worst


def validate_spanner(n: int, graph: dict, spanner, eps: float, beta: float, pairs) -> dict:
    """Check H is a subgraph of G and d_H <= (1+eps) d_G + beta on the given pairs."""
    sub = {}
    foreign = 0
    for a, b in spanner:
        key = (min(a, b), max(a, b))
        if key not in graph:
            foreign += 1
        else:
            sub[key] = graph[key]
    by_src: dict[int, list[int]] = {}
    for u, v in pairs:
        by_src.setdefault(u, []).append(v)
    srcs = sorted(by_src)
    dg = distances_from(n, graph, srcs, weighted=False)
    dh = distances_from(n, sub, srcs, weighted=False)
    violations = 0
    worst_mult = (1.0, None)
    worst_add = (0.0, None)
    for i, u in enumerate(srcs):
        for v in by_src[u]:
            g, h = dg[i, v], dh[i, v]
            if not math.isfinite(g):
                continue
            if h > (1 + eps) * g + beta + 1e-9:
                violations += 1
            if g > 0 and h / g > worst_mult[0]:
                worst_mult = (float(h / g), (u, v))
            if h - g > worst_add[0]:
                worst_add = (float(h - g), (u, v))
    return {"ok": foreign == 0 and violations == 0, "pairs": len(pairs), "edges": len(sub),
            "foreign_edges": foreign, "violations": violations,
            "worst_multiplicative": {"ratio": worst_mult[0], "pair": worst_mult[1]},
            "worst_additive": {"slack": worst_add[0], "pair": worst_add[1]}}


def _as_triples(hopset):
    out = []
    for e in hopset:
        if hasattr(e, "weight"):
            out.append((int(e.u), int(e.v), float(e.weight), getattr(e, "path", None)))
        else:
            out.append((int(e[0]), int(e[1]), float(e[2]), e[3] if len(e) > 3 else None))
    return out


def validate_hopset(n: int, graph: dict, hopset, eps_prime: float, beta_prime: int, pairs,
                    exact_paths: bool = True, rel_tol: float = 1e-9) -> dict:
    """Check d_G <= d^(beta')_{G+H} <= (1+eps') d_G on the pairs, and every reported path.

    ``exact_paths`` demands path weight equal to the edge weight; otherwise
    the path may be lighter (never heavier) than the edge.
    """
    items = _as_triples(hopset)
    extra = [(u, v, w) for u, v, w, _ in items]
    by_src: dict[int, list[int]] = {}
    for u, v in pairs:
        by_src.setdefault(u, []).append(v)
    srcs = sorted(by_src)
    dg = distances_from(n, graph, srcs)
    lower = upper = 0
    worst = (1.0, None)
    for i, u in enumerate(srcs):
        db = hop_bounded(n, graph, [u], beta_prime, extra)
        for v in by_src[u]:
            g, b = dg[i, v], db[v]
            if not math.isfinite(g):
                if math.isfinite(b):
                    lower += 1
                continue
            if b < g * (1 - rel_tol):
                lower += 1
            if b > (1 + eps_prime) * g * (1 + rel_tol):
                upper += 1
            if g > 0 and b / g > worst[0]:
                worst = (float(b / g), (u, v))
    # every edge must be at least the true distance
    ends = sorted({u for u, *_ in items})
    de = distances_from(n, graph, ends) if ends else np.empty((0, n + 1))
    row = {u: i for i, u in enumerate(ends)}
    short = sum(1 for u, v, w, _ in items if w < de[row[u], v] * (1 - rel_tol))
    path_errors = 0
    checked = 0
    for u, v, w, path in items:
        if path is None:
            continue
        checked += 1
        if path[0] != u or path[-1] != v:
            path_errors += 1
            continue
        total = 0.0
        for a, b in zip(path, path[1:]):
            key = (min(a, b), max(a, b))
            if key not in graph:
                total = math.nan
                break
            total += graph[key]
        if math.isnan(total):
            path_errors += 1
        elif exact_paths and abs(total - w) > rel_tol * max(1.0, w):
            path_errors += 1
        elif not exact_paths and total > w * (1 + rel_tol):
            path_errors += 1
    ok = lower == 0 and upper == 0 and short == 0 and path_errors == 0
    return {"ok": ok, "pairs": len(pairs), "hopbound": int(beta_prime), "edges": len(items),
            "lower_violations": lower, "upper_violations": upper, "short_edges": short,
            "paths_checked": checked, "path_errors": path_errors,
            "worst_ratio": {"ratio": worst[0], "pair": worst[1]}}
