"""Multipass explorations: BFS forests and approximate Bellman-Ford.

Both are written as pass generators (see :func:`stream.run_passes`) so that
the spanner and hopset constructions can embed them, and so several
explorations can share the same passes. The public functions
:func:`bfs_forest` and :func:`approx_bellman_ford` run a single exploration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hashing import HashFamily, rng_for
from .samplers import INF, ST_FAIL, ST_OK, LevelAccumulator, on_grid, recover_xor
from .stream import ConstructionError, MultipassStream, UpdateChunk, run_one

LINK_ROOT = -2
LINK_STREAM = -1


def repetitions(n: int, c1: float = 3.0) -> int:
    """Parallel sampler invocations per vertex: ceil(c1 * log_{8/7} n)."""
    return max(1, math.ceil(c1 * math.log(max(n, 2)) / math.log(8 / 7)))


def edge_key(x, y, n: int):
    """Integer name of the undirected edge {x, y}; works on arrays."""
    a = np.minimum(x, y)
    b = np.maximum(x, y)
    return a * (n + 1) + b


def edge_key_domain(n: int) -> int:
    return (n + 1) * (n + 1)


# BFS forest

@dataclass
class BfsForest:
    n: int
    roots: list[int]
    parent: np.ndarray
    layer: np.ndarray
    root_of: np.ndarray
    passes: int = 0
    retries: int = 0

    @property
    def edges(self) -> list[tuple[int, int]]:
        vs = np.flatnonzero(self.parent > 0)
        return [(int(v), int(self.parent[v])) for v in vs]

    def path_to_root(self, v: int) -> list[int]:
        if self.layer[v] < 0:
            raise ValueError(f"vertex {v} not reached")
        out = [v]
        while self.parent[out[-1]] > 0:
            out.append(int(self.parent[out[-1]]))
        return out


class _ParentJob:
    module = "bfs"

    def __init__(self, n, prev, active, fam):
        self.n, self.prev, self.active, self.fam = n, prev, active, fam
        self.h = fam.count
        self.acc = LevelAccumulator(fam.lam + 1, {"count": (np.int64, "sum"), "name": (np.int64, "xor")})

    def consume(self, ch: UpdateChunk) -> None:
        for x, y in ((ch.u, ch.v), (ch.v, ch.u)):
            e, m = np.nonzero(self.active[:, x] & self.prev[:, y])
            if not len(e):
                continue
            ys = y[m]
            lv = self.fam.levels(ys)
            base = (e * (self.n + 1) + x[m]) * self.h
            bank = base[None, :] + np.arange(self.h)[:, None]
            k = len(m)
            self.acc.add(bank.ravel(), lv.ravel(), count=np.tile(ch.sign[m], self.h),
                         name=np.tile(ys, self.h))

    @property
    def nbytes(self) -> int:
        return self.acc.nbytes


def bfs_batch_gen(n: int, root_sets, eta: int, c1: float = 3.0, seed: int = 0, tag="bfs",
                  retries: int = 1):
    """Pass generator growing one BFS forest per root set for ``eta`` layers."""
    E = len(root_sets)
    layer = np.full((E, n + 1), -1, dtype=np.int64)
    parent = np.zeros((E, n + 1), dtype=np.int64)
    root_of = np.zeros((E, n + 1), dtype=np.int64)
    for e, S in enumerate(root_sets):
        S = np.asarray(sorted(set(int(s) for s in S)), dtype=np.int64)
        layer[e, S] = 0
        root_of[e, S] = S
    layer[:, 0] = -2  # slot 0 is never a vertex
    H = repetitions(n, c1)
    used_retries = 0
    passes = 0
    for p in range(1, eta + 1):
        prev = layer == p - 1
        active = layer == -1
        for attempt in range(retries + 1):
            fam = HashFamily(n, H, rng_for(seed, tag, p, attempt))
            job = _ParentJob(n, prev, active, fam)
            yield job
            passes += 1
            banks, L = job.acc.finalize()
            status, names, _ = recover_xor(L["count"], L["name"])
            vert = banks // H
            e_idx = vert // (n + 1)
            x_idx = vert % (n + 1)
            ok = status == ST_OK
            valid = ok & (names >= 1) & (names <= n)
            valid[valid] = prev[e_idx[valid], names[valid]]
            status = np.where(ok & ~valid, ST_FAIL, status)
            # first successful hash per (exploration, vertex); banks are sorted by hash index
            uv, first = np.unique(vert, return_index=True)
            any_ok = np.zeros(len(uv), dtype=bool)
            any_fail = np.zeros(len(uv), dtype=bool)
            grp = np.searchsorted(uv, vert)
            np.logical_or.at(any_ok, grp, status == ST_OK)
            np.logical_or.at(any_fail, grp, status == ST_FAIL)
            if np.any(any_fail & ~any_ok):
                used_retries += 1
                continue
            okpos = np.flatnonzero(status == ST_OK)
            g_ok, firstok = np.unique(grp[okpos], return_index=True)
            pick = okpos[firstok]
            ee, xx = e_idx[pick], x_idx[pick]
            par = names[pick]
            layer[ee, xx] = p
            parent[ee, xx] = par
            root_of[ee, xx] = root_of[ee, par]
            break
        else:
            raise ConstructionError(f"BFS layer {p}: some vertex found no parent after retry")
    layer[:, 0] = -1
    return [BfsForest(n, sorted(set(int(s) for s in root_sets[e])), parent[e].copy(),
                      layer[e].copy(), root_of[e].copy(), passes, used_retries) for e in range(E)]


def bfs_forest(stream: MultipassStream, roots, eta: int, c1: float = 3.0, seed: int = 0) -> BfsForest:
    """BFS forest rooted at ``roots`` to depth ``eta``; exactly ``eta`` passes without retries."""
    if not roots:
        raise ValueError("root set must be non-empty")
    return run_one(stream, bfs_batch_gen(stream.n, [roots], eta, c1, seed))[0]


# approximate Bellman-Ford

class PathRecords:
    """Append-only log of estimate commits.

    A record remembers the parent's record *at commit time*, so following
    records reproduces exactly the path whose weight was committed, even if
    the parent later improved.
    """

    def __init__(self):
        self.vertex: list[int] = []
        self.parent: list[int] = []
        self.link: list[int] = []
        self.weight: list[float] = []
        self.dist: list[float] = []
        self.key: list[int] = []
        self.raw: list[float] = []

    def __len__(self) -> int:
        return len(self.vertex)

    def append(self, vertex, parent, link, weight, dist, key=None, raw=None) -> np.ndarray:
        start = len(self.vertex)
        vertex = np.atleast_1d(vertex)
        k = len(vertex)
        self.vertex.extend(np.asarray(vertex, dtype=np.int64).tolist())
        self.parent.extend(np.broadcast_to(np.asarray(parent, dtype=np.int64), (k,)).tolist())
        self.link.extend(np.broadcast_to(np.asarray(link, dtype=np.int64), (k,)).tolist())
        self.weight.extend(np.broadcast_to(np.asarray(weight, dtype=np.float64), (k,)).tolist())
        self.dist.extend(np.broadcast_to(np.asarray(dist, dtype=np.float64), (k,)).tolist())
        self.key.extend(np.broadcast_to(np.asarray(0 if key is None else key, dtype=np.int64), (k,)).tolist())
        self.raw.extend(np.broadcast_to(np.asarray(0.0 if raw is None else raw, dtype=np.float64), (k,)).tolist())
        return np.arange(start, start + k, dtype=np.int64)

    def chain(self, rec: int) -> list[int]:
        out = []
        while rec >= 0:
            out.append(rec)
            rec = self.parent[rec]
        out.reverse()
        return out

    def path(self, rec: int) -> tuple[list[int], list[int], list[float]]:
        """Vertices from the root, plus the link kind and weight of each hop."""
        ch = self.chain(rec)
        verts = [self.vertex[r] for r in ch]
        return verts, [self.link[r] for r in ch[1:]], [self.weight[r] for r in ch[1:]]


@dataclass
class Overlay:
    """Extra weighted edges relaxed offline after every phase."""

    u: np.ndarray
    v: np.ndarray
    w: np.ndarray

    @classmethod
    def from_edges(cls, edges) -> "Overlay":
        if not edges:
            z = np.empty(0, dtype=np.int64)
            return cls(z, z, np.empty(0))
        u, v, w = zip(*edges)
        return cls(np.array(u, dtype=np.int64), np.array(v, dtype=np.int64), np.array(w, dtype=np.float64))

    def __len__(self) -> int:
        return len(self.u)


@dataclass
class DistanceEstimates:
    dist: np.ndarray
    rec: np.ndarray
    records: PathRecords = field(repr=False)
    roots: list[int] = field(default_factory=list)
    passes: int = 0
    retries: int = 0
    clamped: int = 0

    @property
    def parent(self) -> np.ndarray:
        out = np.zeros(len(self.rec), dtype=np.int64)
        has = self.rec >= 0
        par = np.array([self.records.parent[r] for r in self.rec[has]], dtype=np.int64)
        pv = np.array([self.records.vertex[r] if r >= 0 else 0 for r in par], dtype=np.int64)
        out[has] = pv
        return out

    def path(self, v: int):
        if self.rec[v] < 0:
            raise ValueError(f"vertex {v} has no estimate")
        return self.records.path(int(self.rec[v]))

    def root(self, v: int) -> int:
        return self.records.vertex[self.records.chain(int(self.rec[v]))[0]]


def range_bounds(zeta_p: float, top: float) -> np.ndarray:
    """Powers (1+zeta')^j for j = 0..gamma+1, gamma = ceil(log_{1+zeta'} top) - 1."""
    gamma = max(0, math.ceil(math.log(top) / math.log1p(zeta_p)) - 1) if top > 1 else 0
    b = np.power(1.0 + zeta_p, np.arange(gamma + 2, dtype=np.float64))
    # guard the last bound against rounding below the target
    if b[-1] < top:
        b = np.append(b, b[-1] * (1.0 + zeta_p))
    return b


def range_index(vals: np.ndarray, bounds: np.ndarray) -> np.ndarray:
    """Index j with bounds[j] < val <= bounds[j+1]; the first range is closed at 1."""
    j = np.searchsorted(bounds, vals, side="left") - 1
    return np.maximum(j, 0)


def in_range(vals: np.ndarray, j: np.ndarray, bounds: np.ndarray) -> np.ndarray:
    lo = bounds[j]
    hi = bounds[j + 1]
    return np.where(j == 0, (vals >= 1.0) & (vals <= hi), (vals > lo) & (vals <= hi))


class _GuessJob:
    module = "explore"

    def __init__(self, n, dist, isroot, fam, bounds, node_mode):
        self.n, self.dist, self.isroot, self.fam = n, dist, isroot, fam
        self.bounds = bounds
        self.ranges = len(bounds) - 1
        self.top = bounds[-1]
        self.h = fam.count
        self.node_mode = node_mode
        fields = {"count": (np.int64, "sum"), "dist": (np.float64, "sum"), "name": (np.int64, "xor")}
        if node_mode:
            fields["key"] = (np.int64, "xor")
            fields["raw"] = (np.float64, "sum")
        self.acc = LevelAccumulator(fam.lam + 1, fields)
        self.clamped = 0

    def consume(self, ch: UpdateChunk) -> None:
        for x, y in ((ch.u, ch.v), (ch.v, ch.u)):
            d = on_grid(self.dist[:, y] + ch.weight[None, :])
            fin = np.isfinite(d) & ~self.isroot[:, x]
            over = fin & (d > self.top)
            self.clamped += int(over.sum())
            e, m = np.nonzero(fin & ~over)
            if not len(e):
                continue
            val = d[e, m]
            j = range_index(val, self.bounds)
            ys = y[m]
            hashed = ch.key[m] if self.node_mode else ys
            lv = self.fam.levels(hashed)
            base = ((e * (self.n + 1) + x[m]) * self.ranges + j) * self.h
            bank = base[None, :] + np.arange(self.h)[:, None]
            sg = ch.sign[m]
            extra = {}
            if self.node_mode:
                extra = {"key": np.tile(ch.key[m], self.h), "raw": np.tile(on_grid(ch.raw[m]) * sg, self.h)}
            self.acc.add(bank.ravel(), lv.ravel(), count=np.tile(sg, self.h),
                         dist=np.tile(val * sg, self.h), name=np.tile(ys, self.h), **extra)

    @property
    def nbytes(self) -> int:
        return self.acc.nbytes


def _first_per_group(groups: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """For sorted ``groups``: the distinct groups having a True, and the first such position."""
    pos = np.flatnonzero(mask)
    g, first = np.unique(groups[pos], return_index=True)
    return g, pos[first]


def decide_guesses(banks, L, H, ranges, n, dist, bounds, node_mode):
    """Reduce guess banks to one winner per (exploration, vertex).

    Returns (error, e, x, d, parent, key, raw) for the winning guesses, where
    error flags a failed guess below the winning range.
    """
    status, names, lvl = recover_xor(L["count"], L["name"])
    rows = np.arange(len(lvl))
    d = np.where(lvl >= 0, L["dist"][rows, np.maximum(lvl, 0)], INF)
    g = banks // H
    j = g % ranges
    ex = g // ranges
    e_idx = ex // (n + 1)
    ok = status == ST_OK
    valid = ok & (names >= 1) & (names <= n)
    df = np.full(len(g), INF)
    df[valid] = dist[e_idx[valid], names[valid]]
    valid &= np.isfinite(df) & np.isfinite(d)
    valid &= in_range(np.where(valid, d, 1.0), j, bounds)
    gap = np.where(valid, d - np.where(valid, df, 0.0), 0.0)
    valid &= gap >= 1.0 - 1e-9 * np.abs(np.where(valid, d, 0.0))
    status = np.where(ok & ~valid, ST_FAIL, status)
    # best bank per guess: smallest dist, then lowest hash index (banks sorted by hash index)
    okpos = np.flatnonzero(status == ST_OK)
    order = okpos[np.lexsort((d[okpos], g[okpos]))]
    g_ok, first = np.unique(g[order], return_index=True)
    best = order[first]
    fail_g = np.unique(g[status == ST_FAIL])
    fail_g = np.setdiff1d(fail_g, g_ok)
    # winner per (exploration, vertex): smallest range index
    ex_ok = g_ok // ranges
    w_ex, wfirst = np.unique(ex_ok, return_index=True)
    win = best[wfirst]
    win_j = g_ok[wfirst] % ranges
    error = False
    if len(fail_g):
        f_ex, ffirst = np.unique(fail_g // ranges, return_index=True)
        f_j = fail_g[ffirst] % ranges
        matched = np.isin(f_ex, w_ex)
        if not matched.all():
            error = True
        elif np.any(f_j < win_j[np.searchsorted(w_ex, f_ex)]):
            error = True
    kk = rr = None
    if node_mode:
        kk = L["key"][win, lvl[win]]
        rr = L["raw"][win, lvl[win]]
    return error, w_ex // (n + 1), w_ex % (n + 1), d[win], names[win], kk, rr


def overlay_sweep(dist, rec, records: PathRecords, overlay: Overlay, isroot) -> int:
    """One Jacobi relaxation of every estimate over the overlay edges; returns #updates."""
    if overlay is None or not len(overlay):
        return 0
    E = dist.shape[0]
    src = np.concatenate([overlay.u, overlay.v])
    dst = np.concatenate([overlay.v, overlay.u])
    w = np.concatenate([overlay.w, overlay.w])
    oid = np.concatenate([np.arange(len(overlay)), np.arange(len(overlay))])
    cand = dist[:, dst] + w[None, :]  # estimate at src via dst
    e, m = np.nonzero(np.isfinite(cand) & ~isroot[:, src])
    if not len(e):
        return 0
    c = cand[e, m]
    tgt = src[m]
    flat = e * dist.shape[1] + tgt
    order = np.lexsort((m, c, flat))
    flat_s = flat[order]
    first = order[np.r_[True, flat_s[1:] != flat_s[:-1]]]
    fe, ft, fc, fm = e[first], tgt[first], c[first], m[first]
    better = fc < dist[fe, ft]
    fe, ft, fc, fm = fe[better], ft[better], fc[better], fm[better]
    if not len(fe):
        return 0
    prec = rec[fe, dst[fm]]
    new = records.append(ft, prec, oid[fm], w[fm], fc)
    dist[fe, ft] = fc
    rec[fe, ft] = new
    return len(fe)


def bellman_ford_gen(n: int, root_sets, eta: int, zeta: float, lam_bound: float, *,
                     overlay: Overlay | None = None, c1: float = 3.0, seed: int = 0, tag="bf",
                     node_mode: bool = False, retries: int = 1, records: PathRecords | None = None):
    """Pass generator for one approximate Bellman-Ford exploration per root set.

    ``node_mode`` is for translated streams whose chunks carry the name of the
    underlying simple-graph edge: samplers then hash and XOR that name, so
    parallel node-graph edges never collide.
    """
    E = len(root_sets)
    records = PathRecords() if records is None else records
    dist = np.full((E, n + 1), INF)
    rec = np.full((E, n + 1), -1, dtype=np.int64)
    isroot = np.zeros((E, n + 1), dtype=bool)
    isroot[:, 0] = True
    for e, S in enumerate(root_sets):
        S = np.asarray(sorted(set(int(s) for s in S)), dtype=np.int64)
        if len(S):
            dist[e, S] = 0.0
            isroot[e, S] = True
            rec[e, S] = records.append(S, -1, LINK_ROOT, 0.0, 0.0)
    zeta_p = zeta / (2 * eta)
    bounds = range_bounds(zeta_p, 2 * lam_bound)
    ranges = len(bounds) - 1
    H = repetitions(n, c1)
    domain = edge_key_domain(n) if node_mode else n
    passes = used = clamped = 0
    for p in range(1, eta + 1):
        frozen = dist.copy()
        for attempt in range(retries + 1):
            fam = HashFamily(domain, H, rng_for(seed, tag, p, attempt))
            job = _GuessJob(n, frozen, isroot, fam, bounds, node_mode)
            yield job
            passes += 1
            clamped += job.clamped
            banks, L = job.acc.finalize()
            err, we, wx, wd, wy, wk, wr = decide_guesses(banks, L, H, ranges, n, frozen, bounds, node_mode)
            if err:
                used += 1
                continue
            better = wd < frozen[we, wx]
            we, wx, wd, wy = we[better], wx[better], wd[better], wy[better]
            prec = rec[we, wy]
            lw = wd - frozen[we, wy]
            if node_mode:
                new = records.append(wx, prec, LINK_STREAM, lw, wd, wk[better], wr[better])
            else:
                new = records.append(wx, prec, LINK_STREAM, lw, wd)
            dist[we, wx] = wd
            rec[we, wx] = new
            break
        else:
            raise ConstructionError(f"Bellman-Ford phase {p}: guess failed after retry")
        overlay_sweep(dist, rec, records, overlay, isroot)
    return [DistanceEstimates(dist[e].copy(), rec[e].copy(), records,
                              sorted(set(int(s) for s in root_sets[e])), passes, used, clamped)
            for e in range(E)]


def approx_bellman_ford(stream: MultipassStream, roots, eta: int, zeta: float, lam_bound: float,
                        overlay: Overlay | None = None, c1: float = 3.0, seed: int = 0) -> DistanceEstimates:
    """(eta, zeta)-approximate distances from ``roots``; exactly ``eta`` passes without retries."""
    if zeta <= 0:
        raise ValueError("zeta must be positive")
    gen = bellman_ford_gen(stream.n, [roots], eta, zeta, lam_bound, overlay=overlay, c1=c1, seed=seed)
    return run_one(stream, gen)[0]


class _MaxWeightJob:
    module = "explore"
    nbytes = 8

    def __init__(self):
        self.max_weight = 0.0

    def consume(self, ch: UpdateChunk) -> None:
        if len(ch):
            self.max_weight = max(self.max_weight, float(ch.weight.max()))


def lambda_bound(stream: MultipassStream) -> float:
    """One pass: (n - 1) times the largest weight seen."""
    def gen():
        job = _MaxWeightJob()
        yield job
        return max(1.0, (stream.n - 1) * max(job.max_weight, 1.0))
    return run_one(stream, gen())
