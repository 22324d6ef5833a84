"""Near-additive spanners of unweighted dynamic streams.

Each phase grows superclusters around randomly sampled cluster centers and
then connects every cluster that was left out to all clusters whose centers
lie within half the phase radius. Both steps are built out of pass
generators from :mod:`explore` and the visitor samplers below, so the whole
construction runs as a fixed schedule of passes.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .encoding import build_codebook
from .explore import bfs_batch_gen, repetitions
from .hashing import HashFamily, rng_for
from .samplers import ST_FAIL, ST_OK, LevelAccumulator, recover_cis
from .stream import ConstructionError, MultipassStream, UpdateChunk, run_one

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SpannerParams:
    n: int
    eps: float
    kappa: float
    rho: float
    ell: int
    i0: int
    deg: tuple
    delta: tuple
    radius: tuple

    @property
    def exponent(self) -> float:
        return math.log2(self.kappa * self.rho) + 1 / self.rho

    @property
    def beta(self) -> float:
        """Additive term ((log kappa*rho + 1/rho) / eps) ** (log kappa*rho + 1/rho)."""
        x = self.exponent
        return (x / self.eps) ** x

    def depth(self, i: int) -> int:
        """Interconnection exploration depth of phase i."""
        return 1 if i == 0 else self.delta[i] // 2

    def pass_count(self) -> int:
        return sum(self.delta[:self.ell]) + sum(2 * self.depth(i) for i in range(self.ell + 1))


def spanner_schedule(n: int, eps: float, kappa: float, rho: float) -> SpannerParams:
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if kappa < 2:
        raise ValueError("kappa must be at least 2")
    if kappa * rho < 1:
        raise ValueError("kappa * rho must be at least 1")
    if rho > 0.5:
        raise ValueError("rho must be at most 1/2")
    i0 = math.floor(math.log2(kappa * rho) + 1e-12)
    ell = i0 + math.ceil((kappa + 1) / (kappa * rho) - 1e-12) - 1
    deg = tuple(n ** (2 ** i / kappa) if i <= i0 else n ** rho for i in range(ell + 1))
    delta, radius = [], [0]
    for i in range(ell + 1):
        d = round((1 / eps) ** i + 4 * radius[i], 9)
        delta.append(math.ceil(d - 1e-9))
        radius.append(radius[i] + delta[i])
    return SpannerParams(n, eps, kappa, rho, ell, i0, deg, tuple(delta), tuple(radius[:-1]))


@dataclass
class ClusterPartition:
    """Vertex-disjoint clusters; ``center_of[v]`` is 0 for uncovered vertices."""

    center_of: np.ndarray

    @classmethod
    def singletons(cls, n: int) -> "ClusterPartition":
        c = np.arange(n + 1, dtype=np.int64)
        return cls(c)

    @property
    def centers(self) -> np.ndarray:
        c = np.unique(self.center_of[1:])
        return c[c > 0]

    @property
    def clusters(self) -> list[dict]:
        out = []
        for r in self.centers:
            out.append({"center": int(r), "members": set(np.flatnonzero(self.center_of == r).tolist())})
        return out

    def __len__(self) -> int:
        return len(self.centers)


def edge(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


# superclustering

def superclustering_gen(n: int, part: ClusterPartition, params: SpannerParams, i: int, seed: int,
                        c1: float = 3.0):
    centers = part.centers
    rng = rng_for(seed, "spanner-sample", i)
    sampled = centers[rng.random(len(centers)) < 1.0 / params.deg[i]]
    forest = (yield from bfs_batch_gen(n, [sampled.tolist()], params.delta[i], c1, seed,
                                       tag=f"super{i}"))[0]
    new = np.zeros(n + 1, dtype=np.int64)
    edges: set[tuple[int, int]] = set()
    for r in sampled:
        new[part.center_of == r] = r
    for r in centers:
        if forest.layer[r] <= 0:
            continue
        root = int(forest.root_of[r])
        new[part.center_of == r] = root
        path = forest.path_to_root(int(r))
        edges.update(edge(a, b) for a, b in zip(path, path[1:]))
    return ClusterPartition(new), edges


def superclustering_step(stream: MultipassStream, part: ClusterPartition, params: SpannerParams,
                         i: int, seed: int = 0, c1: float = 3.0):
    return run_one(stream, superclustering_gen(stream.n, part, params, i, seed, c1))


# interconnection

class _VisitorJob:
    """First pass of a sub-phase: sample new sources seen over each vertex's edges."""

    module = "spanner"

    def __init__(self, vis, src_vertex, fam, cb):
        self.vis = vis
        self.any = vis.any(axis=1)
        self.a = fam.count
        self.levels = fam.levels(src_vertex)  # (attempts, sources)
        self.cx = cb.xs[src_vertex]
        self.cy = cb.ys[src_vertex]
        self.acc = LevelAccumulator(fam.lam + 1, {"count": (np.int64, "sum"), "sx": (np.int64, "sum"),
                                                  "sy": (np.int64, "sum")})

    def consume(self, ch: UpdateChunk) -> None:
        for x, y in ((ch.u, ch.v), (ch.v, ch.u)):
            rows = np.flatnonzero(self.any[y])
            if not len(rows):
                continue
            xs, ys = x[rows], y[rows]
            m, s = np.nonzero(self.vis[ys] & ~self.vis[xs])
            if not len(m):
                continue
            sg = ch.sign[rows[m]]
            bank = xs[m][None, :] * self.a + np.arange(self.a)[:, None]
            self.acc.add(bank.ravel(), self.levels[:, s].ravel(), count=np.tile(sg, self.a),
                         sx=np.tile(sg * self.cx[s], self.a), sy=np.tile(sg * self.cy[s], self.a))

    @property
    def nbytes(self) -> int:
        return self.acc.nbytes


class _TupleParentJob:
    """Second pass: one parent per (vertex, source) tuple among the previous layer."""

    module = "spanner"

    def __init__(self, tid, slot_level, prev, fam, full_bank):
        self.tid = tid
        self.slot_level = slot_level
        self.prev = prev
        self.any = prev.any(axis=1)
        self.has = (tid >= 0).any(axis=1)
        self.h = fam.count
        self.table = fam.level_table()
        self.full = full_bank
        levels = fam.lam + 1 if full_bank else 1
        self.acc = LevelAccumulator(levels, {"count": (np.int64, "sum"), "name": (np.int64, "xor")})

    def consume(self, ch: UpdateChunk) -> None:
        for x, y in ((ch.u, ch.v), (ch.v, ch.u)):
            rows = np.flatnonzero(self.has[x] & self.any[y])
            if not len(rows):
                continue
            xs, ys = x[rows], y[rows]
            m, s = np.nonzero((self.tid[xs] >= 0) & self.prev[ys])
            if not len(m):
                continue
            tup = self.tid[xs[m], s]
            yy = ys[m]
            lv = self.table[:, yy]  # (reps, items)
            sg = np.broadcast_to(ch.sign[rows[m]], lv.shape)
            bank = tup[None, :] * self.h + np.arange(self.h)[:, None]
            names = np.broadcast_to(yy, lv.shape)
            if self.full:
                self.acc.add(bank.ravel(), lv.ravel(), count=sg.ravel(), name=names.ravel())
            else:
                keep = lv <= self.slot_level[tup][None, :]
                self.acc.add(bank[keep], np.zeros(int(keep.sum()), dtype=np.int64),
                             count=sg[keep], name=names[keep])

    @property
    def nbytes(self) -> int:
        return self.acc.nbytes


@dataclass
class Interconnection:
    edges: set
    trees: dict = field(default_factory=dict)
    tuples: int = 0
    retries: int = 0
    dropped: int = 0


def attempt_count(n: int, deg: float, c1_prime: float, c4: float, cap: int | None) -> int:
    """Parallel visitor attempts: 16 * c4 * (c1' * deg * ln n) * ln n, optionally capped."""
    ln = math.log(max(n, 2))
    mu = math.ceil(16 * c4 * c1_prime * deg * ln * ln)
    return mu if cap is None else max(1, min(mu, cap))


def _prune(parent: dict[int, int], keep: set) -> set[tuple[int, int]]:
    """Delete non-kept leaves until every leaf is kept; returns surviving edges."""
    children: dict[int, int] = {}
    for v, p in parent.items():
        children[p] = children.get(p, 0) + 1
    alive = set(parent)
    stack = [v for v in parent if children.get(v, 0) == 0 and v not in keep]
    while stack:
        v = stack.pop()
        if v not in alive:
            continue
        alive.discard(v)
        p = parent[v]
        children[p] -= 1
        if children[p] == 0 and p in parent and p not in keep:
            stack.append(p)
    return {edge(v, parent[v]) for v in alive}


def interconnection_gen(n: int, sources, centers, depth: int, params: SpannerParams, i: int, seed: int,
                        c1: float = 3.0, c1_prime: float = 3.0, c4: float = 2.0,
                        max_attempts: int | None = 256, full_parent_bank: bool = False):
    sources = np.asarray(sorted(int(s) for s in sources), dtype=np.int64)
    k = len(sources)
    cb = build_codebook(n)
    attempts = attempt_count(n, params.deg[i], c1_prime, c4, max_attempts)
    cap = math.ceil(c1_prime * n ** params.rho * math.log(max(n, 2)))
    reps = repetitions(n, c1)
    vis = np.zeros((n + 1, k), dtype=bool)
    vis[sources, np.arange(k)] = True
    layer_prev = vis.copy()  # S_0: each source at distance 0 from itself
    parent = [dict() for _ in range(k)]
    retries = dropped = ntuples = 0
    for j in range(1, depth + 1):
        for attempt in range(2):
            fam = HashFamily(n, attempts, rng_for(seed, "visit", i, j, attempt))
            job = _VisitorJob(vis, sources, fam, cb)
            yield job
            banks, L = job.acc.finalize()
            ok, tup = _decide_visitors(banks, L, attempts, vis, sources, cb)
            if ok:
                tv, ts, tk = tup
                # parents for every new tuple
                tid = np.full((n + 1, k), -1, dtype=np.int64)
                tid[tv, ts] = np.arange(len(tv))
                lam = fam.lam
                slot = np.maximum(0, lam - np.ceil(np.log2(np.maximum(tk, 1))).astype(np.int64) - 1)
                pfam = HashFamily(n, reps, rng_for(seed, "visit-parent", i, j, attempt))
                pjob = _TupleParentJob(tid, slot, layer_prev, pfam, full_parent_bank)
                yield pjob
                pb, PL = pjob.acc.finalize()
                ok, found = _decide_parents(pb, PL, reps, len(tv), tv, ts, layer_prev, n)
                if ok:
                    break
            else:
                # keep the pass schedule aligned: the second pass still happens
                yield _Idle()
            retries += 1
        else:
            raise ConstructionError(f"interconnection phase {i} sub-phase {j} failed after retry")
        layer = np.zeros_like(vis)
        for idx in range(len(tv)):
            v, s = int(tv[idx]), int(ts[idx])
            parent[s][v] = int(found[idx])
        layer[tv, ts] = True
        new_vis = vis | layer
        over = new_vis.sum(axis=1) > cap
        if over.any():
            # drop the newest sources above capacity
            for v in np.flatnonzero(over):
                extra = np.flatnonzero(layer[v])
                room = cap - int(vis[v].sum())
                drop = extra[max(room, 0):]
                new_vis[v, drop] = False
                layer[v, drop] = False
                dropped += len(drop)
            log.warning("visitor lists over capacity %d; %d entries dropped", cap, dropped)
        vis = new_vis
        layer_prev = layer
        ntuples += len(tv)
    keep = set(int(c) for c in centers)
    edges: set[tuple[int, int]] = set()
    trees = {}
    for s in range(k):
        surv = _prune(parent[s], keep)
        trees[int(sources[s])] = surv
        edges |= surv
    return Interconnection(edges, trees, ntuples, retries, dropped)


class _Idle:
    module = "spanner"
    nbytes = 0

    def consume(self, ch) -> None:
        pass


def _decide_visitors(banks, L, attempts, vis, sources, cb):
    """Collect discovered (vertex, source, count) tuples; False if any vertex is incomplete."""
    k = len(sources)
    empty = (np.zeros(0, np.int64),) * 3
    if len(banks) == 0:
        return True, empty
    status, sid, cnt = recover_cis(L["count"], L["sx"], L["sy"], cb)
    vert = banks // attempts
    pos = np.searchsorted(sources, sid)
    pos_c = np.minimum(pos, max(k - 1, 0))
    valid = (status == ST_OK) & (sources[pos_c] == sid) & (cnt >= 1)
    valid[valid] = ~vis[vert[valid], pos_c[valid]]
    if np.any((status == ST_OK) & ~valid):
        return False, empty
    pairs = np.unique(np.stack([vert[valid], pos_c[valid], cnt[valid]], axis=1), axis=0)
    if len(pairs) and np.any(np.diff(pairs[:, 0] * (k + 1) + pairs[:, 1]) == 0):
        return False, empty  # one source decoded with two counts
    # completeness: counts of the discovered sources add up to the top-level total
    uv, first = np.unique(vert, return_index=True)
    total = L["count"][first, -1]
    found = np.zeros(len(uv), dtype=np.int64)
    if len(pairs):
        np.add.at(found, np.searchsorted(uv, pairs[:, 0]), pairs[:, 2])
    if np.any(found != total):
        return False, empty
    return True, (pairs[:, 0], pairs[:, 1], pairs[:, 2])


def _decide_parents(banks, L, reps, ntup, tv, ts, prev, n):
    found = np.zeros(ntup, dtype=np.int64)
    if ntup == 0:
        return True, found
    count = L["count"]
    name = L["name"]
    lvl = np.argmax(count == 1, axis=1)
    hit = count[np.arange(len(banks)), lvl] == 1
    nm = name[np.arange(len(banks)), lvl]
    tup = banks // reps
    valid = hit & (nm >= 1) & (nm <= n)
    valid[valid] = prev[nm[valid], ts[tup[valid]]]
    pos = np.flatnonzero(valid)
    g, first = np.unique(tup[pos], return_index=True)
    if len(g) < ntup:
        return False, found
    found[g] = nm[pos[first]]
    return True, found


def interconnection_step(stream: MultipassStream, sources, part: ClusterPartition, params: SpannerParams,
                         i: int, seed: int = 0, **kw) -> Interconnection:
    gen = interconnection_gen(stream.n, sources, part.centers, params.depth(i), params, i, seed, **kw)
    return run_one(stream, gen)


# full construction

@dataclass
class Spanner:
    n: int
    edges: set
    params: SpannerParams
    passes: int
    phases: list = field(default_factory=list)
    retries: int = 0

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)


def spanner_gen(n: int, params: SpannerParams, seed: int, c1: float = 3.0, **kw):
    part = ClusterPartition.singletons(n)
    edges: set[tuple[int, int]] = set()
    phases = []
    retries = 0
    for i in range(params.ell + 1):
        info = {"phase": i, "clusters": len(part)}
        if i < params.ell:
            new, sup_edges = yield from superclustering_gen(n, part, params, i, seed, c1)
            joined = new.center_of > 0
            leftover = np.unique(part.center_of[(~joined) & (part.center_of > 0)])
            leftover = leftover[leftover > 0]
            edges |= sup_edges
            info["superclusters"] = len(new)
            info["superclustering_edges"] = len(sup_edges)
        else:
            new = None
            leftover = part.centers
            sup_edges = set()
        inter = yield from interconnection_gen(n, leftover, part.centers, params.depth(i), params, i, seed,
                                               c1=c1, **kw)
        edges |= inter.edges
        retries += inter.retries
        info.update(unclustered=len(leftover), interconnection_edges=len(inter.edges),
                    tuples=inter.tuples, dropped=inter.dropped)
        info["partition"] = part
        info["leftover"] = leftover
        info["trees"] = inter.trees
        phases.append(info)
        if new is not None:
            part = new
    return edges, phases, retries


def build_spanner(stream: MultipassStream, eps: float, kappa: float, rho: float, seed: int = 0,
                  c1: float = 3.0, **kw) -> Spanner:
    """(1+eps, beta)-spanner of the final graph of an unweighted stream."""
    params = spanner_schedule(stream.n, eps, kappa, rho)
    start = stream.passes_taken
    edges, phases, retries = run_one(stream, spanner_gen(stream.n, params, seed, c1, **kw))
    return Spanner(stream.n, edges, params, stream.passes_taken - start, phases, retries)
