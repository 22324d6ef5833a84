"""Convexly independent codes and the sketches built on them.

Every coordinate ``i`` gets a lattice point ``nu(i)`` on the convex hull of
the integer disc of radius ``R``. Because no code is a convex combination of
the others, a non-negative integer sum ``L = sum a_i * nu(i)`` with counter
``c = sum a_i`` satisfies ``L / c == nu(i)`` exactly when ``i`` is the only
coordinate present. That single test gives deterministic dense detection for
1-sparse recovery, and the s-sparse and l0 sketches are grids of it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable

import numpy as np

from .hashing import HashFamily, ceil_log2, rng_for


class _Sentinel:
    def __init__(self, name: str):
        self.name = name

    def __repr__(self) -> str:
        return self.name


EMPTY = _Sentinel("Empty")
DENSE = _Sentinel("Dense")
FAIL = _Sentinel("Fail")


@dataclass(frozen=True)
class One:
    index: int
    value: int


class TurnstileViolation(ValueError):
    pass


class SketchCorruption(RuntimeError):
    pass


def _cross(o, a, b) -> int:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _chain(points) -> list:
    # one monotone-chain half; keeps strict left turns only
    out: list = []
    for p in points:
        while len(out) >= 2 and _cross(out[-2], out[-1], p) <= 0:
            out.pop()
        out.append(p)
    return out


def convex_hull(points) -> list[tuple[int, int]]:
    """Strict convex hull vertices in counter-clockwise order (exact integers)."""
    pts = sorted(set((int(x), int(y)) for x, y in points))
    if len(pts) <= 2:
        return pts
    lower = _chain(pts)
    upper = _chain(reversed(pts))
    return lower[:-1] + upper[:-1]


def disc_hull(radius: int) -> list[tuple[int, int]]:
    """Hull vertices of the integer points in the disc, counter-clockwise from (-R, 0)."""
    r2 = radius * radius
    top = [(x, math.isqrt(r2 - x * x)) for x in range(-radius, radius + 1)]
    lower = _chain([(x, -y) for x, y in top])
    upper = _chain(reversed(top))
    return lower[:-1] + upper[:-1]


@dataclass
class CisCodebook:
    n: int
    radius: int
    points: list[tuple[int, int]]
    inverse: dict[tuple[int, int], int] = field(repr=False, default_factory=dict)

    def __post_init__(self):
        if not self.inverse:
            self.inverse = {p: i + 1 for i, p in enumerate(self.points)}
        self.xs = np.array([0] + [p[0] for p in self.points], dtype=np.int64)
        self.ys = np.array([0] + [p[1] for p in self.points], dtype=np.int64)
        side = 2 * self.radius + 1
        keys = (self.xs[1:] + self.radius) * side + (self.ys[1:] + self.radius)
        order = np.argsort(keys)
        self._keys = keys[order]
        self._ids = order + 1

    def code(self, i: int) -> tuple[int, int]:
        return self.points[i - 1]

    def lookup(self, x: int, y: int) -> int | None:
        return self.inverse.get((x, y))

    def lookup_many(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Coordinate index for each point, 0 where the point is not a code."""
        x = np.asarray(x, dtype=np.int64)
        y = np.asarray(y, dtype=np.int64)
        out = np.zeros(x.shape, dtype=np.int64)
        r = self.radius
        ok = (np.abs(x) <= r) & (np.abs(y) <= r)
        keys = (x[ok] + r) * (2 * r + 1) + (y[ok] + r)
        pos = np.searchsorted(self._keys, keys)
        pos = np.minimum(pos, len(self._keys) - 1)
        hit = self._keys[pos] == keys
        sub = np.zeros(keys.shape, dtype=np.int64)
        sub[hit] = self._ids[pos[hit]]
        out[ok] = sub
        return out

    def decode_many(self, lx: np.ndarray, ly: np.ndarray, cnt: np.ndarray) -> np.ndarray:
        """Vectorized isolation test: index i where L / cnt == nu(i) exactly, else 0."""
        lx = np.asarray(lx, dtype=np.int64)
        ly = np.asarray(ly, dtype=np.int64)
        cnt = np.asarray(cnt, dtype=np.int64)
        out = np.zeros(cnt.shape, dtype=np.int64)
        pos = cnt > 0
        c = cnt[pos]
        qx, rx = np.divmod(lx[pos], c)
        qy, ry = np.divmod(ly[pos], c)
        found = self.lookup_many(qx, qy)
        found[(rx != 0) | (ry != 0)] = 0
        out[pos] = found
        return out

    def is_convexly_independent(self) -> bool:
        if self.n <= 2:
            return len(set(self.points)) == self.n
        return len(convex_hull(self.points)) == self.n


@lru_cache(maxsize=16)
def build_codebook(n: int) -> CisCodebook:
    """Codes for 1..n: the first n disc-hull vertices clockwise from angle 0."""
    if n < 1:
        raise ValueError("n must be positive")
    radius = max(1, math.ceil(n ** 1.5))
    while True:
        hull = disc_hull(radius)
        if len(hull) >= n:
            break
        radius *= 2
    start = hull.index((radius, 0))
    cw = [hull[(start - t) % len(hull)] for t in range(n)]
    cb = CisCodebook(n, radius, cw)
    if not cb.is_convexly_independent():
        raise AssertionError("codebook failed the convex independence check")
    return cb


def save_codebook(cb: CisCodebook, directory) -> Path:
    path = Path(directory) / f"cis-{cb.n}.npz"
    np.savez(path, n=cb.n, radius=cb.radius, points=np.array(cb.points, dtype=np.int64))
    return path


def load_codebook(n: int, directory) -> CisCodebook | None:
    path = Path(directory) / f"cis-{n}.npz"
    if not path.exists():
        return None
    data = np.load(path)
    cb = CisCodebook(int(data["n"]), int(data["radius"]), [tuple(map(int, p)) for p in data["points"]])
    if not cb.is_convexly_independent():
        raise ValueError(f"cached codebook {path} is not convexly independent")
    return cb


# 1-sparse recovery

@dataclass
class OneSparseSketch:
    lx: int = 0
    ly: int = 0
    ctr: int = 0

    def update(self, i: int, delta: int, cb: CisCodebook) -> None:
        if not 1 <= i <= cb.n:
            raise ValueError(f"coordinate {i} outside 1..{cb.n}")
        x, y = cb.code(i)
        self.lx += x * delta
        self.ly += y * delta
        self.ctr += delta

    def merge(self, other: "OneSparseSketch") -> "OneSparseSketch":
        return OneSparseSketch(self.lx + other.lx, self.ly + other.ly, self.ctr + other.ctr)

    def recover(self, cb: CisCodebook):
        return one_sparse_recover(self, cb)


def one_sparse_update(sk: OneSparseSketch, i: int, delta: int, cb: CisCodebook) -> None:
    sk.update(i, delta, cb)


def one_sparse_recover(sk: OneSparseSketch, cb: CisCodebook):
    if sk.ctr == 0:
        if sk.lx == 0 and sk.ly == 0:
            return EMPTY
        raise TurnstileViolation("zero counter with non-zero sum")
    if sk.ctr < 0:
        raise TurnstileViolation("negative counter")
    qx, rx = divmod(sk.lx, sk.ctr)
    qy, ry = divmod(sk.ly, sk.ctr)
    if rx == 0 and ry == 0:
        i = cb.lookup(qx, qy)
        if i is not None:
            return One(i, sk.ctr)
    return DENSE


# s-sparse recovery

class SparseRecovery:
    """Rows of 1-sparse buckets; each row spreads coordinates with its own hash."""

    def __init__(self, s: int, delta: float, cb: CisCodebook, seed: int):
        if s < 1 or not 0 < delta < 1:
            raise ValueError("need s >= 1 and 0 < delta < 1")
        self.cb = cb
        self.s = s
        self.rows = max(1, math.ceil(math.log2(s / delta)))
        bits = ceil_log2(2 * s)
        self.family = HashFamily(max(cb.n, 2), self.rows, rng_for(seed, "s-sparse"), out_bits=bits)
        self.lx = np.zeros((self.rows, 1 << bits), dtype=np.int64)
        self.ly = np.zeros_like(self.lx)
        self.ctr = np.zeros_like(self.lx)
        self._row = np.arange(self.rows)

    def update(self, i: int, delta: int) -> None:
        bucket = self.family.values(np.array([i]))[:, 0] - 1
        x, y = self.cb.code(i)
        self.lx[self._row, bucket] += x * delta
        self.ly[self._row, bucket] += y * delta
        self.ctr[self._row, bucket] += delta

    def recover(self):
        found: dict[int, int] = {}
        complete = False
        for r in range(self.rows):
            row_ok = True
            for b in range(self.lx.shape[1]):
                res = one_sparse_recover(
                    OneSparseSketch(int(self.lx[r, b]), int(self.ly[r, b]), int(self.ctr[r, b])), self.cb)
                if res is DENSE:
                    row_ok = False
                elif isinstance(res, One):
                    if found.get(res.index, res.value) != res.value:
                        raise SketchCorruption(f"coordinate {res.index} decoded with two values")
                    found[res.index] = res.value
            complete = complete or row_ok
        if not complete or len(found) > self.s:
            return DENSE
        return dict(sorted(found.items()))


def s_sparse_recover(updates: Iterable[tuple[int, int]], s: int, delta: float,
                     cb: CisCodebook, seed: int):
    """Exact vector ``{i: a_i}`` or DENSE.

    A returned vector is always exact: some row decoded every bucket, and
    each decoded bucket is exact.
    """
    sk = SparseRecovery(s, delta, cb, seed)
    for i, d in updates:
        sk.update(i, d)
    return sk.recover()


# l0 sampling

class L0Sampler:
    """Repetitions of geometric scales, each a 1-sparse sketch.

    Coordinate ``i`` takes part in scale ``j`` of a repetition iff its hash
    for that (repetition, scale) is at most ``2^(lam - j)``. Scale 0 keeps
    everything so singletons always decode.
    """

    def __init__(self, delta: float, cb: CisCodebook, seed: int):
        if not 0 < delta < 1:
            raise ValueError("delta must be in (0, 1)")
        self.cb = cb
        n = max(cb.n, 2)
        self.lam = ceil_log2(n)
        self.reps = max(1, math.ceil(math.log(1 / delta) / -math.log(1 - math.exp(-1) / 2)))
        self.scales = self.lam + 1
        self.family = HashFamily(n, self.reps * self.scales, rng_for(seed, "l0"))
        self.limit = np.tile(1 << (self.lam - np.arange(self.scales)), self.reps)
        size = self.reps * self.scales
        self.lx = np.zeros(size, dtype=np.int64)
        self.ly = np.zeros(size, dtype=np.int64)
        self.ctr = np.zeros(size, dtype=np.int64)

    def update_many(self, idx, deltas) -> None:
        idx = np.asarray(idx, dtype=np.int64)
        deltas = np.asarray(deltas, dtype=np.int64)
        member = self.family.values(idx) <= self.limit[:, None]
        self.ctr += member @ deltas
        self.lx += member @ (deltas * self.cb.xs[idx])
        self.ly += member @ (deltas * self.cb.ys[idx])

    def update(self, i: int, delta: int) -> None:
        self.update_many([i], [delta])

    def sample(self):
        ids = self.cb.decode_many(self.lx, self.ly, self.ctr)
        if not self.ctr.any() and not self.lx.any() and not self.ly.any():
            return EMPTY
        if np.any(self.ctr < 0) or np.any((self.ctr == 0) & ((self.lx != 0) | (self.ly != 0))):
            raise TurnstileViolation("l0 sketch holds a negative coordinate")
        hit = np.flatnonzero(ids)
        if len(hit) == 0:
            return FAIL
        k = hit[0]
        return int(ids[k]), int(self.ctr[k])


def l0_sample(updates: Iterable[tuple[int, int]], delta: float, cb: CisCodebook, seed: int):
    """A support coordinate and its value, EMPTY for the zero vector, or FAIL."""
    sk = L0Sampler(delta, cb, seed)
    ups = list(updates)
    if ups:
        idx, d = zip(*ups)
        sk.update_many(idx, d)
    return sk.sample()
