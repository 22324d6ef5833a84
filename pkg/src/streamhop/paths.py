"""Distance applications built on the spanner and hopset constructions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.sparse.csgraph import shortest_path

from .explore import LINK_STREAM, bellman_ford_gen, bfs_batch_gen, lambda_bound
from .hopset import Hopset, aspect_ratio_reduce, multi_scale_hopset
from .oracle import adjacency
from .spanner import Spanner, spanner_gen, spanner_schedule
from .stream import MultipassStream, run_one, run_passes


class _SpannerIndex:
    """BFS rows of the stored spanner, computed when first asked for."""

    def __init__(self, n: int, edges):
        self.n = n
        self.A = adjacency(n, {e: 1.0 for e in edges}, weighted=False)
        self.row = lru_cache(maxsize=4096)(self._row)

    def _row(self, u: int) -> np.ndarray:
        return shortest_path(self.A, directed=False, unweighted=True, indices=[u])[0]

    def distance(self, u: int, v: int) -> float:
        if u == v:
            return 0.0
        # answer from the smaller endpoint so both orders agree
        a, b = (u, v) if u < v else (v, u)
        return float(self.row(a)[b])


@dataclass
class AllPairs:
    spanner: Spanner
    passes: int
    index: _SpannerIndex = field(repr=False)

    def distance(self, u: int, v: int) -> float:
        return self.index.distance(u, v)

    def row(self, u: int) -> np.ndarray:
        return self.index.row(u)


def _kappa(kappa, rho):
    return 1.0 / rho if kappa is None else kappa


def apasp_unweighted(stream: MultipassStream, eps: float, kappa: float | None = None, rho: float = 0.5,
                     seed: int = 0, **kw) -> AllPairs:
    """Near-additive all-pairs estimates: build a spanner, answer by BFS on it."""
    params = spanner_schedule(stream.n, eps, _kappa(kappa, rho), rho)
    start = stream.passes_taken
    edges, phases, retries = run_one(stream, spanner_gen(stream.n, params, seed, **kw))
    sp = Spanner(stream.n, edges, params, stream.passes_taken - start, phases, retries)
    return AllPairs(sp, sp.passes, _SpannerIndex(stream.n, edges))


@dataclass
class MultiSource:
    sources: list
    dist: np.ndarray  # (sources, n+1)
    passes: int
    depth: int = 0
    spanner: Spanner | None = None
    exact_part: np.ndarray | None = None
    spanner_part: np.ndarray | None = None


def _check_sources(n: int, sources, rho: float) -> list[int]:
    S = sorted(set(int(s) for s in sources))
    if not S:
        raise ValueError("need at least one source")
    if S[0] < 1 or S[-1] > n:
        raise ValueError("source outside 1..n")
    if len(S) > n ** rho + 1e-9:
        raise ValueError(f"{len(S)} sources exceed n^rho = {n ** rho:.1f}")
    return S


def multi_source_asp_unweighted(stream: MultipassStream, sources, eps: float, rho: float = 0.5,
                                kappa: float | None = None, seed: int = 0, c1: float = 3.0) -> MultiSource:
    """Spanner estimates, replaced by exact BFS distances up to depth beta/eps."""
    n = stream.n
    S = _check_sources(n, sources, rho)
    params = spanner_schedule(n, eps, _kappa(kappa, rho), rho)
    depth = min(math.ceil(params.beta / eps), n - 1)
    start = stream.passes_taken
    (edges, phases, retries), forests = run_passes(
        stream, spanner_gen(n, params, seed, c1),
        bfs_batch_gen(n, [[s] for s in S], depth, c1, seed, tag="asp-bfs"))
    sp = Spanner(n, edges, params, stream.passes_taken - start, phases, retries)
    index = _SpannerIndex(n, edges)
    exact = np.full((len(S), n + 1), math.inf)
    approx = np.full((len(S), n + 1), math.inf)
    for i, (s, f) in enumerate(zip(S, forests)):
        reached = f.layer >= 0
        exact[i, reached] = f.layer[reached]
        approx[i] = index.row(s)
    approx[:, 0] = exact[:, 0] = math.inf
    return MultiSource(S, np.minimum(exact, approx), sp.passes, depth, sp, exact, approx)


@dataclass
class WeightedMultiSource:
    sources: list
    dist: np.ndarray
    passes: int
    hopset: Hopset
    hops: int
    estimates: list = field(repr=False, default_factory=list)

    def path(self, s: int, v: int) -> tuple | None:
        """G path from s to v whose weight is the reported estimate (None if unreached)."""
        est = self.estimates[self.sources.index(s)]
        if est.rec[v] < 0:
            return None
        verts, links, _ = est.path(v)
        out = [verts[0]]
        for link, x in zip(links, verts[1:]):
            if link == LINK_STREAM:
                out.append(x)
                continue
            sub = self.hopset.edges[link].path
            if sub[0] != out[-1]:
                sub = tuple(reversed(sub))
            out.extend(sub[1:])
        return tuple(out)


def multi_source_asp_weighted(stream: MultipassStream, sources, eps: float, rho: float = 0.5,
                              kappa: float | None = None, lam: float | None = None, seed: int = 0,
                              beta_override: float | None = None, reduce_aspect: bool = False,
                              c1: float = 3.0) -> WeightedMultiSource:
    """(1+eps) distances from every source: hopset at eps/3, then Bellman-Ford at eps/3."""
    n = stream.n
    S = _check_sources(n, sources, rho)
    kap = _kappa(kappa, rho)
    start = stream.passes_taken
    if reduce_aspect:
        H = aspect_ratio_reduce(stream, eps / 3, kap, rho, seed, beta_override=beta_override)
    else:
        if lam is None:
            lam = lambda_bound(stream)
        H = multi_scale_hopset(stream, eps / 3, kap, rho, lam, seed, True, beta_override)
    if lam is None:
        lam = lambda_bound(stream)
    hops = min(H.hopbound, n - 1)
    ests = run_one(stream, bellman_ford_gen(n, [[s] for s in S], hops, eps / 3, lam,
                                            overlay=H.overlay(), c1=c1, seed=seed, tag="asp-bf"))
    dist = np.stack([e.dist for e in ests])
    dist[:, 0] = math.inf
    return WeightedMultiSource(S, dist, stream.passes_taken - start, H, hops, ests)
