"""Path-reporting hopsets for weighted dynamic streams.

A hopset is a set of extra weighted edges, each at least as long as the true
distance between its endpoints, such that few-hop paths in the augmented
graph approximate shortest paths. Scales ``(2^k, 2^{k+1}]`` are handled one
at a time, each scale exploring the graph plus the hopsets of lower scales.
:func:`aspect_ratio_reduce` instead contracts light edges per scale and
builds all scales in parallel over the contracted node graphs.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .encoding import build_codebook
from .explore import (LINK_ROOT, LINK_STREAM, Overlay, PathRecords, bellman_ford_gen, edge_key,
                      edge_key_domain, in_range, overlay_sweep, range_bounds, range_index, repetitions)
from .hashing import HashFamily, ceil_log2, rng_for
from .samplers import INF, ST_OK, LevelAccumulator, on_grid, recover_cis, recover_xor
from .spanner import attempt_count
from .stream import ConstructionError, MultipassStream, UpdateChunk, run_one, run_passes, translated

log = logging.getLogger(__name__)

MAX_PASSES = 1_000_000


# parameters

@dataclass(frozen=True)
class HopsetParams:
    n: int
    eps_prime: float
    kappa: float
    rho: float
    lam: float
    ell: int
    i0: int
    deg: tuple
    eps2: float
    eps: float
    chi: float
    beta: float
    k0: int
    k_lam: int
    c5: float = 2.0

    @property
    def hops(self) -> int:
        """Bellman-Ford iterations per exploration, 2*beta + 1."""
        return 2 * math.ceil(self.beta - 1e-9) + 1

    @property
    def hopbound(self) -> int:
        return self.hops

    @property
    def scales(self) -> range:
        return range(self.k0, self.k_lam + 1)

    def eps_k(self, k: int) -> float:
        """Stretch slack of G plus hopsets of scales below and including k (0 below k0)."""
        a = self.eps2 * (2.0 + self.eps2)  # (1+eps'')^2 - 1
        e = 0.0
        for _ in range(self.k0, k + 1):
            e = e + a + a * e
        return e

    def schedule(self, k: int) -> tuple[tuple, tuple]:
        """(delta_i, R_i) for scale k before rescaling."""
        alpha = self.eps ** self.ell * 2.0 ** (k + 1)
        delta, radius = [], [0.0]
        for i in range(self.ell + 1):
            delta.append(alpha * (1 / self.eps) ** i + 4 * radius[i])
            radius.append(radius[i] + delta[i])
        return tuple(delta), tuple(radius[:-1])

    def scaled_delta(self, k: int) -> tuple:
        f = (1 + self.chi) * (1 + self.eps_k(k - 1))
        return tuple(f * d for d in self.schedule(k)[0])

    def passes_per_scale(self) -> int:
        h = self.hops
        return self.ell * h + (self.ell + 1) * 2 * h

    def pass_count(self) -> int:
        return max(0, len(self.scales)) * self.passes_per_scale()


def hopset_params(n: int, eps_prime: float, kappa: float, rho: float, lam: float,
                  beta_override: float | None = None, c5: float = 2.0) -> HopsetParams:
    if not 0 < eps_prime < 1:
        raise ValueError("eps_prime must lie in (0, 1)")
    if kappa < 2:
        raise ValueError("kappa must be at least 2")
    if kappa * rho < 1 or rho > 0.5:
        raise ValueError("rho must satisfy 1/kappa <= rho <= 1/2")
    if lam < 1:
        raise ValueError("aspect bound must be at least 1")
    i0 = math.floor(math.log2(kappa * rho) + 1e-12)
    ell = i0 + math.ceil((kappa + 1) / (kappa * rho) - 1e-12) - 1
    deg = tuple(n ** (2 ** i / kappa) if i <= i0 else n ** rho for i in range(ell + 1))
    log_lam = max(1.0, math.log2(lam))
    eps2 = eps_prime / (4 * log_lam)
    if beta_override is None:
        eps = eps2 / (16 * c5 * ell)
        beta = (1 / eps) ** ell
    else:
        if beta_override < 1:
            raise ValueError("beta override must be at least 1")
        beta = float(beta_override)
        eps = beta ** (-1.0 / ell)
    k0 = math.floor(math.log2(beta) + 1e-12)
    k_lam = math.ceil(math.log2(lam) - 1e-12) - 1
    return HopsetParams(n, eps_prime, kappa, rho, lam, ell, i0, deg, eps2, eps, eps2, beta, k0, k_lam, c5)


# edges and path expansion

@dataclass
class HopsetEdge:
    u: int
    v: int
    weight: float
    scale: int
    kind: str = "hop"
    path: tuple | None = None

    def key(self) -> tuple[int, int]:
        return (self.u, self.v) if self.u < self.v else (self.v, self.u)


def _oriented(path: tuple, a: int) -> tuple:
    return path if path[0] == a else tuple(reversed(path))


def _route_path(records: PathRecords, rec: int, lower: list[HopsetEdge]) -> tuple:
    """G path implementing a record chain; overlay hops expand through lower edges."""
    chain = records.chain(rec)
    out = [records.vertex[chain[0]]]
    for r in chain[1:]:
        v = records.vertex[r]
        link = records.link[r]
        if link == LINK_STREAM:
            out.append(v)
        else:
            sub = _oriented(lower[link].path, out[-1])
            out.extend(sub[1:])
    return tuple(out)


def path_weight(path, weights: dict) -> float:
    total = 0.0
    for a, b in zip(path, path[1:]):
        total += weights[(a, b) if a < b else (b, a)]
    return total


# single scale

class _CandidateJob:
    """Pass one of an interconnection sub-phase: sample improving sources per (vertex, range)."""

    module = "hopset"

    def __init__(self, dist, src_vertex, fam, cb, bounds, top):
        self.dist = dist  # (sources, n+1)
        self.a = fam.count
        self.levels = fam.levels(src_vertex)
        self.cx = cb.xs[src_vertex]
        self.cy = cb.ys[src_vertex]
        self.bounds = bounds
        self.ranges = len(bounds) - 1
        self.top = top
        self.reach = np.isfinite(dist).any(axis=0)
        self.acc = LevelAccumulator(fam.lam + 1, {"count": (np.int64, "sum"), "sx": (np.int64, "sum"),
                                                  "sy": (np.int64, "sum")})

    def consume(self, ch: UpdateChunk) -> None:
        for x, y in ((ch.u, ch.v), (ch.v, ch.u)):
            rows = np.flatnonzero(self.reach[y])
            if not len(rows):
                continue
            xs, ys = x[rows], y[rows]
            val = on_grid(self.dist[:, ys] + ch.weight[rows][None, :])
            s, m = np.nonzero((val <= self.top) & (val < self.dist[:, xs]))
            if not len(m):
                continue
            vv = val[s, m]
            j = range_index(vv, self.bounds)
            sg = ch.sign[rows[m]]
            base = (xs[m] * self.ranges + j) * self.a
            bank = base[None, :] + np.arange(self.a)[:, None]
            self.acc.add(bank.ravel(), self.levels[:, s].ravel(), count=np.tile(sg, self.a),
                         sx=np.tile(sg * self.cx[s], self.a), sy=np.tile(sg * self.cy[s], self.a))

    @property
    def nbytes(self) -> int:
        return self.acc.nbytes


class _TupleGuessJob:
    """Pass two: distance guesses for each (vertex, source, range) candidate tuple."""

    module = "hopset"

    def __init__(self, dist, tid, tj, fam, bounds, top, node_mode):
        self.dist = dist
        self.tid = tid  # (n+1, sources)
        self.tj = tj
        self.has = (tid >= 0).any(axis=1)
        self.h = fam.count
        self.fam = fam
        self.bounds = bounds
        self.top = top
        self.node_mode = node_mode
        fields = {"count": (np.int64, "sum"), "dist": (np.float64, "sum"), "name": (np.int64, "xor")}
        if node_mode:
            fields["key"] = (np.int64, "xor")
            fields["raw"] = (np.float64, "sum")
        self.acc = LevelAccumulator(fam.lam + 1, fields)

    def consume(self, ch: UpdateChunk) -> None:
        for x, y in ((ch.u, ch.v), (ch.v, ch.u)):
            rows = np.flatnonzero(self.has[x])
            if not len(rows):
                continue
            xs, ys = x[rows], y[rows]
            tids = self.tid[xs].T  # (sources, M)
            val = on_grid(self.dist[:, ys] + ch.weight[rows][None, :])
            s, m = np.nonzero((tids >= 0) & (val <= self.top) & (val < self.dist[:, xs]))
            if not len(m):
                continue
            tup = tids[s, m]
            vv = val[s, m]
            keep = range_index(vv, self.bounds) == self.tj[tup]
            s, m, tup, vv = s[keep], m[keep], tup[keep], vv[keep]
            if not len(m):
                continue
            r = rows[m]
            yy = ys[m]
            hashed = ch.key[r] if self.node_mode else yy
            lv = self.fam.levels(hashed)
            sg = ch.sign[r]
            bank = tup[None, :] * self.h + np.arange(self.h)[:, None]
            extra = {}
            if self.node_mode:
                extra = {"key": np.tile(ch.key[r], self.h), "raw": np.tile(on_grid(ch.raw[r]) * sg, self.h)}
            self.acc.add(bank.ravel(), lv.ravel(), count=np.tile(sg, self.h), dist=np.tile(vv * sg, self.h),
                         name=np.tile(yy, self.h), **extra)

    @property
    def nbytes(self) -> int:
        return self.acc.nbytes


class _Idle:
    module = "hopset"
    nbytes = 0

    def consume(self, ch) -> None:
        pass


def _decide_candidates(banks, L, attempts, ranges, sources, cb, cap):
    """Smallest range per discovered (vertex, source); None when some bank is inconsistent."""
    k = len(sources)
    if len(banks) == 0:
        return np.zeros((0, 3), dtype=np.int64)
    status, sid, cnt = recover_cis(L["count"], L["sx"], L["sy"], cb)
    grp = banks // attempts  # x * ranges + j
    pos = np.minimum(np.searchsorted(sources, sid), max(k - 1, 0))
    valid = (status == ST_OK) & (sources[pos] == sid) & (cnt >= 1)
    if np.any((status == ST_OK) & ~valid):
        return None
    trip = np.unique(np.stack([grp[valid], pos[valid], cnt[valid]], axis=1), axis=0)
    if len(trip) and np.any(np.diff(trip[:, 0] * (k + 1) + trip[:, 1]) == 0):
        return None
    ug, first = np.unique(grp, return_index=True)
    total = L["count"][first, -1]
    found = np.zeros(len(ug), dtype=np.int64)
    if len(trip):
        np.add.at(found, np.searchsorted(ug, trip[:, 0]), trip[:, 2])
    if np.any(found != total):
        return None
    x = trip[:, 0] // ranges
    j = trip[:, 0] % ranges
    # smallest range per (vertex, source)
    order = np.lexsort((j, trip[:, 1], x))
    x, s, j = x[order], trip[order, 1], j[order]
    firsts = np.r_[True, (x[1:] != x[:-1]) | (s[1:] != s[:-1])] if len(x) else np.zeros(0, bool)
    out = np.stack([x[firsts], s[firsts], j[firsts]], axis=1)
    if cap is not None and len(out):
        _, cnts = np.unique(out[:, 0], return_counts=True)
        if cnts.max() > cap:
            keep = np.ones(len(out), dtype=bool)
            start = 0
            for c in cnts:
                keep[start + cap:start + c] = False
                start += c
            log.warning("update lists over capacity %d; %d entries dropped", cap, int((~keep).sum()))
            out = out[keep]
    return out


def _decide_tuple_guesses(banks, L, reps, ntup, tx, ts, tj, dist, bounds, n, node_mode):
    status, names, lvl = recover_xor(L["count"], L["name"])
    rows = np.arange(len(lvl))
    lv = np.maximum(lvl, 0)
    d = np.where(lvl >= 0, L["dist"][rows, lv], INF)
    tup = banks // reps
    ok = status == ST_OK
    valid = ok & (names >= 1) & (names <= n)
    df = np.full(len(tup), INF)
    df[valid] = dist[ts[tup[valid]], names[valid]]
    valid &= np.isfinite(df)
    safe_d = np.where(valid, d, 1.0)
    valid &= in_range(safe_d, tj[tup], bounds)
    valid &= (safe_d - np.where(valid, df, 0.0)) >= 1.0 - 1e-9 * np.abs(safe_d)
    valid &= safe_d < dist[ts[tup], tx[tup]]
    pos = np.flatnonzero(valid)
    order = pos[np.lexsort((d[pos], tup[pos]))]
    g, first = np.unique(tup[order], return_index=True)
    if len(g) < ntup:
        return None
    best = order[first]
    out = {"dist": d[best], "parent": names[best]}
    if node_mode:
        out["key"] = L["key"][best, lv[best]]
        out["raw"] = L["raw"][best, lv[best]]
    return out


def estimates_gen(n: int, sources, hops: int, zeta: float, top: float, overlay: Overlay | None,
                  records: PathRecords, *, deg: float, seed: int, tag, c1=3.0, c1_prime=3.0, c4=2.0,
                  max_attempts: int | None = 256, node_mode=False, rho=0.5):
    """Separate hop-bounded explorations from every source, two passes per hop.

    Returns (dist, rec) of shape (sources, n+1): the estimate of each vertex
    to each source and the record that implements it.
    """
    sources = np.asarray(sorted(int(s) for s in sources), dtype=np.int64)
    k = len(sources)
    dist = np.full((k, n + 1), INF)
    rec = np.full((k, n + 1), -1, dtype=np.int64)
    isroot = np.zeros((k, n + 1), dtype=bool)
    isroot[:, 0] = True
    if k:
        dist[np.arange(k), sources] = 0.0
        isroot[np.arange(k), sources] = True
        rec[np.arange(k), sources] = records.append(sources, -1, LINK_ROOT, 0.0, 0.0)
    zeta_p = zeta / (2 * hops)
    bounds = range_bounds(zeta_p, top)
    ranges = len(bounds) - 1
    cb = build_codebook(n)
    attempts = attempt_count(n, deg, c1_prime, c4, max_attempts)
    cap = math.ceil(c1_prime * n ** rho * math.log(max(n, 2)))
    reps = repetitions(n, c1)
    gdomain = edge_key_domain(n) if node_mode else n
    for p in range(1, hops + 1):
        frozen = dist.copy()
        for attempt in range(2):
            fam = HashFamily(n, attempts, rng_for(seed, tag, "cand", p, attempt))
            job = _CandidateJob(frozen, sources, fam, cb, bounds, top)
            yield job
            banks, L = job.acc.finalize()
            tup = _decide_candidates(banks, L, attempts, ranges, sources, cb, cap)
            if tup is None:
                yield _Idle()
                continue
            tx, ts, tj = tup[:, 0], tup[:, 1], tup[:, 2]
            tid = np.full((n + 1, k), -1, dtype=np.int64)
            tid[tx, ts] = np.arange(len(tx))
            gfam = HashFamily(gdomain, reps, rng_for(seed, tag, "guess", p, attempt))
            gjob = _TupleGuessJob(frozen, tid, tj, gfam, bounds, top, node_mode)
            yield gjob
            gb, GL = gjob.acc.finalize()
            res = _decide_tuple_guesses(gb, GL, reps, len(tx), tx, ts, tj, frozen, bounds, n, node_mode)
            if res is not None:
                break
        else:
            raise ConstructionError(f"{tag}: interconnection sub-phase {p} failed after retry")
        if len(tx):
            par = res["parent"]
            d = res["dist"]
            prec = rec[ts, par]
            lw = d - frozen[ts, par]
            if node_mode:
                new = records.append(tx, prec, LINK_STREAM, lw, d, res["key"], res["raw"])
            else:
                new = records.append(tx, prec, LINK_STREAM, lw, d)
            dist[ts, tx] = d
            rec[ts, tx] = new
        overlay_sweep(dist, rec, records, overlay, isroot)
    return sources, dist, rec


@dataclass
class ScaleResult:
    scale: int
    edges: list
    records: PathRecords = field(repr=False)
    rec_of: list = field(default_factory=list)
    phases: list = field(default_factory=list)


def single_scale_gen(n: int, k: int, lower: list[HopsetEdge], params: HopsetParams, seed: int, *,
                     vertices=None, node_mode=False, tag="", c1=3.0, c1_prime=3.0, c4=2.0,
                     max_attempts: int | None = 256):
    """Pass generator building the hopset edges of one scale; returns a :class:`ScaleResult`."""
    overlay = Overlay.from_edges([(e.u, e.v, e.weight) for e in lower])
    delta = params.scaled_delta(k)
    records = PathRecords()
    verts = np.arange(1, n + 1) if vertices is None else np.asarray(sorted(vertices), dtype=np.int64)
    center_of = np.zeros(n + 1, dtype=np.int64)
    center_of[verts] = verts
    edges: list[tuple[int, int, float, int]] = []  # (u, v, weight, record)
    phases = []
    opts = dict(c1=c1, c1_prime=c1_prime, c4=c4, max_attempts=max_attempts, node_mode=node_mode, rho=params.rho)
    for i in range(params.ell + 1):
        centers = np.unique(center_of[center_of > 0])
        info = {"phase": i, "clusters": len(centers)}
        if i < params.ell:
            rng = rng_for(seed, tag, "hop-sample", k, i)
            sampled = centers[rng.random(len(centers)) < 1.0 / params.deg[i]]
            est = (yield from bellman_ford_gen(n, [sampled.tolist()], params.hops, params.chi, delta[i],
                                               overlay=overlay, c1=c1, seed=seed, tag=f"{tag}sc{k}.{i}",
                                               node_mode=node_mode, records=records))[0]
            new = np.zeros(n + 1, dtype=np.int64)
            for r in sampled:
                new[center_of == r] = r
            sset = set(sampled.tolist())
            for r in centers:
                if int(r) in sset or not est.dist[r] <= delta[i]:
                    continue
                root = est.root(int(r))
                new[center_of == r] = root
                edges.append((root, int(r), float(est.dist[r]), int(est.rec[r])))
            joined = new > 0
            leftover = np.unique(center_of[(~joined) & (center_of > 0)])
            info["superclusters"] = len(sampled)
        else:
            new = None
            leftover = centers
        srcs, dist, rec = yield from estimates_gen(
            n, leftover, params.hops, params.chi, delta[i] / 2, overlay, records, deg=params.deg[i],
            seed=seed, tag=f"{tag}ic{k}.{i}", **opts)
        lset = {int(s): idx for idx, s in enumerate(srcs)}
        for a, ia in lset.items():
            for b in lset:
                if b == a:
                    continue
                d = dist[ia, b]
                if d <= delta[i] / 2:
                    edges.append((a, b, float(d), int(rec[ia, b])))
        info["unclustered"] = len(leftover)
        phases.append(info)
        if new is not None:
            center_of = new
    # keep the lightest edge per pair
    best: dict[tuple[int, int], tuple] = {}
    for u, v, w, r in edges:
        key = (u, v) if u < v else (v, u)
        if key not in best or w < best[key][2]:
            best[key] = (u, v, w, r)
    chosen = [best[key] for key in sorted(best)]
    return ScaleResult(k, [(u, v, w) for u, v, w, _ in chosen], records, [r for *_, r in chosen], phases)


def single_scale_hopset(stream: MultipassStream, k: int, lower: list[HopsetEdge], params: HopsetParams,
                        seed: int = 0, **kw) -> list[HopsetEdge]:
    """Hopset edges for scale k; ``lower`` are all edges of lower scales (paths required)."""
    if k < params.k0:
        return []
    res = run_one(stream, single_scale_gen(stream.n, k, lower, params, seed, **kw))
    return [HopsetEdge(u, v, w, k, "hop", _route_path(res.records, r, lower))
            for (u, v, w), r in zip(res.edges, res.rec_of)]


@dataclass
class Hopset:
    n: int
    edges: list
    params: HopsetParams
    passes: int = 0
    reduced: bool = False
    info: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.edges)

    def weights(self) -> dict[tuple[int, int], float]:
        out: dict[tuple[int, int], float] = {}
        for e in self.edges:
            k = e.key()
            if k not in out or e.weight < out[k]:
                out[k] = e.weight
        return out

    def triples(self) -> list[tuple[int, int, float]]:
        return [(e.u, e.v, e.weight) for e in self.edges]

    def overlay(self) -> Overlay:
        return Overlay.from_edges(self.triples())

    @property
    def hopbound(self) -> int:
        """Hop budget of the guarantee; a contracted-graph hop costs up to three hops in G plus H."""
        h = self.params.hops
        return 3 * h + 2 if self.reduced else h


def _check_passes(params: HopsetParams, scales: int) -> None:
    need = scales * params.passes_per_scale()
    if scales and need > MAX_PASSES:
        raise ValueError(f"schedule needs about {need:.3g} passes (beta = {params.beta:.3g}); "
                         "pass a smaller beta override")


def multi_scale_gen(n: int, params: HopsetParams, seed: int, *, vertices=None, node_mode=False, tag="",
                    **kw):
    """Scales k0..k_lam in order, each using the edges of all lower scales."""
    edges: list[HopsetEdge] = []
    for k in params.scales:
        res = yield from single_scale_gen(n, k, edges, params, seed, vertices=vertices, node_mode=node_mode,
                                          tag=tag, **kw)
        new = []
        for (u, v, w), r in zip(res.edges, res.rec_of):
            new.append(HopsetEdge(u, v, w, k, "hop", None if node_mode else _route_path(res.records, r, edges)))
            if node_mode:
                new[-1].path = ("records", res.records, r, len(edges))  # expanded later
        edges.extend(new)
    return edges


def multi_scale_hopset(stream: MultipassStream, eps_prime: float, kappa: float, rho: float,
                       lam: float, seed: int = 0, path_reporting: bool = True,
                       beta_override: float | None = None, **kw) -> Hopset:
    params = hopset_params(stream.n, eps_prime, kappa, rho, lam, beta_override)
    _check_passes(params, len(params.scales))
    start = stream.passes_taken
    edges = run_one(stream, multi_scale_gen(stream.n, params, seed, **kw))
    if not path_reporting:
        for e in edges:
            e.path = None
    return Hopset(stream.n, edges, params, stream.passes_taken - start)


# aspect-ratio reduction

SCALE_SLOTS = 64


def light_class(w: np.ndarray, n: int, eps: float, k0: int) -> np.ndarray:
    """Scale k with w in (eps/n) * (2^{k-1}, 2^k], raised to k0 for lighter edges."""
    x = np.asarray(w, dtype=np.float64) * n / eps
    k = np.ceil(np.log2(x)).astype(np.int64)
    # repair float rounding at exact powers of two
    k = np.where(np.ldexp(1.0, k - 1) >= x, k - 1, k)
    k = np.where(np.ldexp(1.0, k) < x, k + 1, k)
    return np.maximum(k, k0)


def relevant_scales_of(w: float, n: int) -> list[int]:
    """Scales k with w in (2^k / n, 2^{k+1}]."""
    lo = math.ceil(math.log2(w)) - 2
    hi = math.ceil(math.log2(w * n)) + 1
    return [k for k in range(lo, hi + 1) if 2.0 ** k / n < w <= 2.0 ** (k + 1)]


class _SketchJob:
    """The single reduction pass: XOR connectivity slots per (vertex, light class, copy)."""

    module = "reduce"

    def __init__(self, n, eps, k0, copies, rng):
        self.n, self.eps, self.k0 = n, eps, k0
        self.copies = copies
        dom = edge_key_domain(n)
        self.fam = HashFamily(dom, copies, rng)
        self.fp = HashFamily(dom, 1, rng, out_bits=40)
        self.acc = LevelAccumulator(self.fam.lam + 1, {"count": (np.int64, "sum"), "key": (np.int64, "xor"),
                                                       "fp": (np.int64, "xor"), "w": (np.float64, "sum")})
        self.max_weight = 0.0
        self.window: dict[int, int] = {}

    def consume(self, ch: UpdateChunk) -> None:
        if not len(ch):
            return
        self.max_weight = max(self.max_weight, float(ch.weight.max()))
        a = np.minimum(ch.u, ch.v)
        b = np.maximum(ch.u, ch.v)
        key = edge_key(a, b, self.n)
        cls = light_class(ch.weight, self.n, self.eps, self.k0) - self.k0
        ok = cls < SCALE_SLOTS
        fp = self.fp.values(key)[0]
        lv = self.fam.levels(key)
        for end, orient in ((a, 1), (b, -1)):
            bank = (end[ok] * SCALE_SLOTS + cls[ok])[None, :] * self.copies + np.arange(self.copies)[:, None]
            sg = ch.sign[ok] * orient
            self.acc.add(bank.ravel(), lv[:, ok].ravel(), count=np.tile(sg, self.copies),
                         key=np.tile(key[ok], self.copies), fp=np.tile(fp[ok], self.copies),
                         w=np.tile(on_grid(ch.weight[ok]) * sg, self.copies))
        for w, s in zip(ch.weight.tolist(), ch.sign.tolist()):
            for k in relevant_scales_of(w, self.n):
                self.window[k] = self.window.get(k, 0) + s

    @property
    def nbytes(self) -> int:
        return self.acc.nbytes + 8 * len(self.window)


@dataclass
class Contraction:
    """Nodes of every scale's contracted graph plus the star and forest edges."""

    n: int
    eps: float
    k0: int
    k_lam: int
    center: dict = field(default_factory=dict)  # k -> center per vertex
    size: dict = field(default_factory=dict)  # k -> node size per vertex
    components: dict = field(default_factory=dict)  # k -> component label per vertex
    stars: list = field(default_factory=list)  # (center, vertex, weight, k)
    forest: list = field(default_factory=list)  # (a, b, weight, k)
    lists: dict = field(default_factory=dict)  # vertex -> [(k, center)]
    relevant: list = field(default_factory=list)
    fallbacks: int = 0

    def unit(self, k: int) -> float:
        return self.eps / self.n * 2.0 ** k

    def node_edge_weight(self, k: int, w, x, y):
        """W(X, Y) = w + (eps/n) 2^k (|X| + |Y|) for G-edge (x, y) of weight w."""
        return w + self.unit(k) * (self.size[k][x] + self.size[k][y])

    def forest_path(self, k: int, a: int, b: int) -> list[int]:
        """Path from a to b inside their common node using merge edges of scales <= k."""
        if a == b:
            return [a]
        adj: dict[int, list[int]] = {}
        for x, y, _, kk in self.forest:
            if kk <= k:
                adj.setdefault(x, []).append(y)
                adj.setdefault(y, []).append(x)
        prev = {a: a}
        frontier = [a]
        while frontier and b not in prev:
            nxt = []
            for x in frontier:
                for y in adj.get(x, ()):
                    if y not in prev:
                        prev[y] = x
                        nxt.append(y)
            frontier = nxt
        if b not in prev:
            raise ValueError(f"{a} and {b} are not in one node at scale {k}")
        out = [b]
        while out[-1] != a:
            out.append(prev[out[-1]])
        return out[::-1]


def _group_reduce(groups, L):
    """Merge per-bank ladders into per-group ladders (sum / xor by field)."""
    order = np.argsort(groups, kind="stable")
    g = groups[order]
    starts = np.flatnonzero(np.r_[True, g[1:] != g[:-1]])
    out = {
        "count": np.add.reduceat(L["count"][order], starts, axis=0),
        "key": np.bitwise_xor.reduceat(L["key"][order], starts, axis=0),
        "fp": np.bitwise_xor.reduceat(L["fp"][order], starts, axis=0),
        "w": np.add.reduceat(L["w"][order], starts, axis=0),
    }
    return g[starts], out


def compute_cc(job: _SketchJob, banks, L, n: int, eps: float, k0: int, k_lam: int) -> Contraction:
    """Offline Boruvka over the merged slot ladders, scale by scale."""
    R = job.copies
    copy = banks % R
    rest = banks // R
    cls = rest % SCALE_SLOTS + k0
    vert = rest // SCALE_SLOTS
    con = Contraction(n, eps, k0, k_lam)
    comp = np.arange(n + 1, dtype=np.int64)
    center = np.arange(n + 1, dtype=np.int64)
    size = np.ones(n + 1, dtype=np.int64)
    for k in range(k0, k_lam + 1):
        sel = cls == k
        kb_vert, kb_copy = vert[sel], copy[sel]
        KL = {f: v[sel] for f, v in L.items()}
        before = comp.copy()
        rnd = 0
        while True:
            if not len(kb_vert):
                break
            groups = comp[kb_vert] * R + kb_copy
            gid, M = _group_reduce(groups, KL)
            gcomp, gcopy = gid // R, gid % R
            top_empty = (M["count"][:, -1] == 0) & (M["key"][:, -1] == 0) & (M["fp"][:, -1] == 0) \
                & (M["w"][:, -1] == 0)
            found: dict[int, tuple[int, int, float]] = {}
            failed = set()
            pending: dict[int, list[int]] = {}
            for row in range(len(gid)):
                pending.setdefault(int(gcomp[row]), []).append(row)
            for c, rows in pending.items():
                if all(top_empty[r] for r in rows):
                    continue
                # try copies starting from a round-dependent offset
                rows = sorted(rows, key=lambda r: (int(gcopy[r]) - rnd) % R)
                hit = None
                for r in rows:
                    if top_empty[r]:
                        continue
                    hit = _isolate_edge(M, r, job, n, comp, c, k, eps, k0)
                    if hit is not None:
                        break
                    con.fallbacks += 1
                if hit is None:
                    failed.add(c)
                else:
                    found[c] = hit
            if failed:
                raise ConstructionError(f"scale {k}: no sketch copy isolated an outgoing edge")
            if not found:
                break
            for c, (a, b, w) in found.items():
                ra, rb = comp[a], comp[b]
                if ra == rb:
                    continue
                lo, hi = min(ra, rb), max(ra, rb)
                comp[comp == hi] = lo
                con.forest.append((a, b, w, k))
            rnd += 1
        # centers: largest constituent node keeps its center
        labels = np.unique(comp[1:])
        for lab in labels:
            members = np.flatnonzero(comp == lab)
            members = members[members > 0]
            olds = np.unique(before[members])
            if len(olds) == 1:
                continue
            best = max(olds, key=lambda o: (int(size[o]), -int(center[o])))
            c_new = int(center[best])
            total = len(members)
            for v in members:
                if int(center[before[v]]) != c_new:
                    con.stars.append((c_new, int(v), con.unit(k) * total, k))
                    con.lists.setdefault(int(v), []).append((k, c_new))
            for o in olds:
                center[o] = c_new
            center[lab] = c_new
            size[lab] = total
        cvec = np.zeros(n + 1, dtype=np.int64)
        svec = np.zeros(n + 1, dtype=np.int64)
        cvec[1:] = center[comp[1:]]
        svec[1:] = size[comp[1:]]
        con.center[k] = cvec
        con.size[k] = svec
        con.components[k] = comp.copy()
    return con


def _isolate_edge(M, r, job: _SketchJob, n, comp, c, k, eps, k0):
    cnt, key, fp, w = M["count"][r], M["key"][r], M["fp"][r], M["w"][r]
    for lvl in range(len(cnt)):
        if abs(cnt[lvl]) != 1:
            continue
        kk = int(key[lvl])
        if kk <= 0 or kk >= edge_key_domain(n):
            continue
        if int(job.fp.values(np.array([kk]))[0, 0]) != int(fp[lvl]):
            continue
        a, b = divmod(kk, n + 1)
        if not (1 <= a < b <= n):
            continue
        if (comp[a] == c) == (comp[b] == c):
            continue
        weight = abs(float(w[lvl]))
        if int(light_class(np.array([weight]), n, eps, k0)[0]) != k:
            continue
        return a, b, weight
    return None


def _node_translator(con: Contraction, k: int):
    cen, siz = con.center[k], con.size[k]
    unit = con.unit(k)
    norm = 2 * unit
    n = con.n
    top = 2.0 ** (k + 1)

    def translate(ch: UpdateChunk):
        cu, cv = cen[ch.u], cen[ch.v]
        keep = (ch.weight <= top) & (cu != cv)
        if not keep.any():
            return None
        u, v, w = ch.u[keep], ch.v[keep], ch.weight[keep]
        W = (w + unit * (siz[u] + siz[v])) / norm
        return UpdateChunk(cu[keep], cv[keep], ch.sign[keep], W, edge_key(u, v, n), w)

    return translate


def _expand_node_path(con: Contraction, k: int, records: PathRecords, rec: int, inner: list, norm: float,
                      cache: dict) -> tuple:
    chain = records.chain(rec)
    out = [records.vertex[chain[0]]]
    n = con.n
    for r in chain[1:]:
        v = records.vertex[r]
        link = records.link[r]
        here = out[-1]
        if link == LINK_STREAM:
            a, b = divmod(int(records.key[r]), n + 1)
            if con.center[k][a] != con.center[k][here]:
                a, b = b, a
            out.extend(con.forest_path(k, here, a)[1:])
            out.append(b)
            out.extend(con.forest_path(k, b, v)[1:])
        else:
            sub = _inner_path(con, k, inner, link, norm, cache)
            out.extend(_oriented(sub, here)[1:])
    return tuple(out)


def _inner_path(con, k, inner, idx, norm, cache):
    if idx not in cache:
        e = inner[idx]
        _, records, rec, lower_count = e.path
        cache[idx] = _expand_node_path(con, k, records, rec, inner[:lower_count], norm, cache)
    return cache[idx]


def inner_params(n: int, eps_prime: float, kappa: float, rho: float, eps: float,
                 beta_override: float | None) -> HopsetParams:
    """Parameters for the hopset built inside one contracted graph (normalized weights)."""
    lam = math.ceil(2 * n / eps)
    return hopset_params(n, eps_prime / 4, kappa, rho, lam, beta_override)


def aspect_ratio_reduce(stream: MultipassStream, eps_prime: float, kappa: float, rho: float, seed: int = 0,
                        beta_override: float | None = None, path_reporting: bool = True,
                        contraction_only: bool = False, **kw) -> Hopset:
    """Star edges plus per-scale hopsets of the contracted node graphs, built in parallel."""
    n = stream.n
    eps = eps_prime / 24
    outer = hopset_params(n, eps_prime, kappa, rho, 2.0, beta_override)
    k0 = outer.k0
    start = stream.passes_taken
    copies = 2 * max(1, ceil_log2(max(n, 2)))
    for attempt in range(2):
        def first_pass(attempt=attempt):
            job = _SketchJob(n, eps, k0, copies, rng_for(seed, "reduce", attempt))
            yield job
            return job
        job = run_one(stream, first_pass())
        banks, L = job.acc.finalize()
        lam = max(1.0, (n - 1) * max(job.max_weight, 1.0))
        k_lam = math.ceil(math.log2(lam) - 1e-12) - 1
        try:
            con = compute_cc(job, banks, L, n, eps, k0, k_lam)
            break
        except ConstructionError:
            if attempt:
                raise
    con.relevant = sorted(k for k, c in job.window.items() if c > 0 and k0 <= k <= k_lam)
    edges = [HopsetEdge(c, v, w, k, "star", tuple(con.forest_path(k, c, v)) if path_reporting else None)
             for c, v, w, k in con.stars]
    info = {"contraction": con, "eps": eps, "k0": k0, "k_lam": k_lam, "relevant": con.relevant}
    if contraction_only:
        return Hopset(n, edges, outer, stream.passes_taken - start, True, info)
    inner = inner_params(n, eps_prime, kappa, rho, eps, beta_override)
    _check_passes(inner, len(inner.scales))
    gens = []
    for k in con.relevant:
        verts = np.unique(con.center[k][1:])
        g = multi_scale_gen(n, inner, seed, vertices=verts, node_mode=True, tag=f"r{k}:", **kw)
        gens.append(translated(g, _node_translator(con, k)))
    results = run_passes(stream, *gens)
    for k, inner_edges in zip(con.relevant, results):
        norm = 2 * con.unit(k)
        cache: dict = {}
        for idx, e in enumerate(inner_edges):
            path = _inner_path(con, k, inner_edges, idx, norm, cache) if path_reporting else None
            edges.append(HopsetEdge(e.u, e.v, e.weight * norm, k, "hop", path))
    info["inner"] = inner
    return Hopset(n, edges, inner, stream.passes_taken - start, True, info)
