"""The per-vertex stream samplers and their shared slot ladder.

Each sampler owns a :class:`SlotBank` with levels ``0..lam``. An item whose
hash value is ``h`` is added to every level ``k >= ceil(log2 h)``, so level
``k`` sees roughly a ``2^k / 2^lam`` fraction of the items and the top level
sees all of them. Recovery looks for a level holding exactly one item.

Four samplers feed the ladder differently:

* :class:`FindParent` XORs the names of neighbours in a frontier set.
* :class:`GuessDistance` also sums candidate distances that fall in a range.
* :class:`FindNewVisitor` sums CIS codes of sources a neighbour knows and
  ``v`` does not.
* :class:`FindNewCandidate` does the same for sources whose estimate through
  the neighbour lands in a range and improves ``v``'s estimate.

These classes are the reference implementation. The drivers in
``explore``, ``spanner`` and ``hopset`` run thousands of them at once through
:class:`LevelAccumulator`, which stores each item at its lowest level only
and takes prefix sums (prefix XORs) over levels when the pass ends. The two
forms hold identical values; the tests check this.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .encoding import EMPTY, FAIL, CisCodebook
from .hashing import PairwiseHash, ceil_log2
from .stream import EdgeUpdate, MultipassStream

INF = math.inf

# Accumulated distances live on this dyadic grid (rounded up), so their
# signed sums are exact and do not depend on the order of the updates.
GRID = float(1 << 24)


def on_grid(x):
    return np.ceil(np.asarray(x, dtype=np.float64) * GRID) / GRID


@dataclass(frozen=True)
class Range:
    """Half-open ``(low, high]``, or closed ``[low, high]`` for the first range."""

    low: float
    high: float
    closed: bool = False

    def __contains__(self, x: float) -> bool:
        if self.closed:
            return self.low <= x <= self.high
        return self.low < x <= self.high


class SlotBank:
    def __init__(self, lam: int, kind: str):
        if kind not in ("xor", "dist", "cis"):
            raise ValueError(kind)
        self.lam = lam
        self.kind = kind
        size = lam + 1
        self.count = [0] * size
        if kind == "cis":
            self.sx = [0] * size
            self.sy = [0] * size
        else:
            self.name = [0] * size
        if kind == "dist":
            self.dist = [0.0] * size

    def add(self, h: int, sign: int, name: int = 0, dist: float = 0.0,
            code: tuple[int, int] = (0, 0)) -> None:
        for k in range(ceil_log2(h), self.lam + 1):
            self.count[k] += sign
            if self.kind == "cis":
                self.sx[k] += sign * code[0]
                self.sy[k] += sign * code[1]
            else:
                self.name[k] ^= name
                if self.kind == "dist":
                    self.dist[k] += sign * dist

    def state(self) -> tuple:
        if self.kind == "cis":
            return tuple(self.count), tuple(self.sx), tuple(self.sy)
        if self.kind == "dist":
            return tuple(self.count), tuple(self.name), tuple(self.dist)
        return tuple(self.count), tuple(self.name)

    def is_empty(self) -> bool:
        top = self.lam
        if self.kind == "cis":
            return self.count[top] == 0 and self.sx[top] == 0 and self.sy[top] == 0
        return self.count[top] == 0 and self.name[top] == 0

    def isolate(self, cb: CisCodebook | None = None):
        """Lowest level holding a single item: (level, payload), or None."""
        for k in range(self.lam + 1):
            c = self.count[k]
            if self.kind == "cis":
                if c > 0 and self.sx[k] % c == 0 and self.sy[k] % c == 0:
                    s = cb.lookup(self.sx[k] // c, self.sy[k] // c)
                    if s is not None:
                        return k, (s, c)
            elif c == 1:
                if self.kind == "dist":
                    return k, (self.dist[k], self.name[k])
                return k, self.name[k]
        return None


def _other(up: EdgeUpdate, v: int):
    if up.u == v:
        return up.v
    if up.v == v:
        return up.u
    return None


def _weight(up: EdgeUpdate) -> float:
    return 1.0 if up.weight is None else up.weight


class FindParent:
    """Sample a neighbour of ``v`` inside ``members``."""

    def __init__(self, v: int, h: PairwiseHash, members):
        self.v, self.h, self.members = v, h, members
        self.bank = SlotBank(h.lam, "xor")

    def feed(self, up: EdgeUpdate) -> None:
        y = _other(up, self.v)
        if y is not None and y in self.members:
            self.bank.add(self.h(y), up.sign, name=y)

    def result(self):
        if self.bank.is_empty():
            return EMPTY
        hit = self.bank.isolate()
        if hit is None or hit[1] not in self.members:
            return FAIL
        return hit[1]


class GuessDistance:
    """Sample a neighbour ``y`` with ``dhat[y] + w`` in ``rng``; report that sum."""

    def __init__(self, v: int, h: PairwiseHash, rng: Range, dhat: Mapping[int, float]):
        self.v, self.h, self.rng, self.dhat = v, h, rng, dhat
        self.bank = SlotBank(h.lam, "dist")

    def feed(self, up: EdgeUpdate) -> None:
        y = _other(up, self.v)
        if y is None:
            return
        val = self.dhat.get(y, INF) + _weight(up)
        if val in self.rng:
            self.bank.add(self.h(y), up.sign, name=y, dist=val)

    def result(self):
        if self.bank.is_empty():
            return INF, INF
        hit = self.bank.isolate()
        if hit is None:
            return FAIL
        dist, y = hit[1]
        if self.dhat.get(y, INF) == INF or dist not in self.rng:
            return FAIL
        return dist, y


class FindNewVisitor:
    """Sample a source known to some neighbour of ``v`` but not to ``v``."""

    def __init__(self, v: int, h: PairwiseHash, cb: CisCodebook, lists: Mapping[int, set]):
        self.v, self.h, self.cb, self.lists = v, h, cb, lists
        self.bank = SlotBank(h.lam, "cis")

    def feed(self, up: EdgeUpdate) -> None:
        u = _other(up, self.v)
        if u is None:
            return
        mine = self.lists.get(self.v, set())
        for s in self.lists.get(u, ()):
            if s not in mine:
                self.bank.add(self.h(s), up.sign, code=self.cb.code(s))

    def result(self):
        if self.bank.is_empty():
            return EMPTY
        hit = self.bank.isolate(self.cb)
        return FAIL if hit is None else hit[1]


class FindNewCandidate:
    """Sample a source whose estimate through a neighbour lands in ``rng`` and improves ``v``."""

    def __init__(self, v: int, h: PairwiseHash, cb: CisCodebook, rng: Range,
                 current: Mapping[int, Mapping[int, float]]):
        self.v, self.h, self.cb, self.rng, self.current = v, h, cb, rng, current
        self.bank = SlotBank(h.lam, "cis")

    def feed(self, up: EdgeUpdate) -> None:
        u = _other(up, self.v)
        if u is None:
            return
        mine = self.current.get(self.v, {})
        w = _weight(up)
        for s, d in self.current.get(u, {}).items():
            val = d + w
            if val in self.rng and val < mine.get(s, INF):
                self.bank.add(self.h(s), up.sign, code=self.cb.code(s))

    def result(self):
        if self.bank.is_empty():
            return EMPTY
        hit = self.bank.isolate(self.cb)
        return FAIL if hit is None else hit[1]


def _run(sampler, updates):
    if isinstance(updates, MultipassStream):
        for up in _stream_updates(updates):
            sampler.feed(up)
    else:
        for up in updates:
            sampler.feed(up)
    return sampler.result()


def _stream_updates(stream: MultipassStream):
    for ch in stream.scan():
        for x, y, s, w in zip(ch.u.tolist(), ch.v.tolist(), ch.sign.tolist(), ch.weight.tolist()):
            yield EdgeUpdate(x, y, s, w if stream.weighted else None)


def find_parent(updates, v: int, h: PairwiseHash, members):
    """EMPTY, the name of a neighbour in ``members``, or FAIL."""
    return _run(FindParent(v, h, members), updates)


def guess_distance(updates, v: int, h: PairwiseHash, rng: Range, dhat: Mapping[int, float]):
    """(inf, inf), (dist, parent), or FAIL."""
    return _run(GuessDistance(v, h, rng, dhat), updates)


def find_new_visitor(updates, v: int, h: PairwiseHash, cb: CisCodebook, lists: Mapping[int, set]):
    """EMPTY, (source, count), or FAIL."""
    return _run(FindNewVisitor(v, h, cb, lists), updates)


def find_new_candidate(updates, v: int, h: PairwiseHash, cb: CisCodebook, rng: Range,
                       current: Mapping[int, Mapping[int, float]]):
    """EMPTY, (source, count), or FAIL."""
    return _run(FindNewCandidate(v, h, cb, rng, current), updates)


# batched banks

_REDUCE = {"sum": np.add, "xor": np.bitwise_xor}


class LevelAccumulator:
    """Sparse exact-level accumulators for many slot banks.

    ``fields`` maps a field name to ``(dtype, "sum" | "xor")``. Items are
    stored at ``bank * levels + level``; :meth:`finalize` turns them into the
    per-level ladder by prefix reduction.
    """

    def __init__(self, levels: int, fields: dict[str, tuple[type, str]], flush_at: int = 1 << 22):
        self.levels = levels
        self.fields = fields
        self.keys = np.empty(0, dtype=np.int64)
        self.vals = {f: np.empty(0, dtype=dt) for f, (dt, _) in fields.items()}
        self._pending: list[tuple[np.ndarray, dict]] = []
        self._pending_size = 0
        self.flush_at = flush_at

    def add(self, bank: np.ndarray, level: np.ndarray, **values) -> None:
        if len(bank) == 0:
            return
        key = np.asarray(bank, dtype=np.int64) * self.levels + np.asarray(level, dtype=np.int64)
        vals = {}
        for f, (dt, _) in self.fields.items():
            vals[f] = np.broadcast_to(np.asarray(values[f], dtype=dt), key.shape)
        self._pending.append((key, vals))
        self._pending_size += len(key)
        if self._pending_size >= self.flush_at:
            self._compact()

    def _compact(self) -> None:
        if not self._pending:
            return
        keys = np.concatenate([self.keys] + [k for k, _ in self._pending])
        order = np.argsort(keys, kind="stable")
        ks = keys[order]
        starts = np.flatnonzero(np.r_[True, ks[1:] != ks[:-1]]) if len(ks) else np.empty(0, np.int64)
        for f, (_, op) in self.fields.items():
            v = np.concatenate([self.vals[f]] + [vals[f] for _, vals in self._pending])[order]
            self.vals[f] = _REDUCE[op].reduceat(v, starts) if len(v) else v
        self.keys = ks[starts] if len(ks) else ks
        self._pending = []
        self._pending_size = 0

    @property
    def nbytes(self) -> int:
        per = 8 * (1 + len(self.fields))
        return per * (len(self.keys) + self._pending_size)

    def finalize(self) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        """Bank ids (sorted) and per-field ladders of shape (banks, levels)."""
        self._compact()
        bank = self.keys // self.levels
        lvl = self.keys % self.levels
        ub, inv = np.unique(bank, return_inverse=True)
        out = {}
        for f, (dt, op) in self.fields.items():
            dense = np.zeros((len(ub), self.levels), dtype=dt)
            dense[inv, lvl] = self.vals[f]
            out[f] = _REDUCE[op].accumulate(dense, axis=1) if len(ub) else dense
        return ub, out


def first_level(mask: np.ndarray) -> np.ndarray:
    """Index of the first True per row, -1 when the row has none."""
    if mask.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    k = mask.argmax(axis=1)
    k[~mask.any(axis=1)] = -1
    return k


# recovery status codes for batched banks
ST_EMPTY, ST_OK, ST_FAIL = 0, 1, 2


def recover_xor(count: np.ndarray, name: np.ndarray):
    """Status and decoded name per bank (top level decides emptiness)."""
    empty = (count[:, -1] == 0) & (name[:, -1] == 0)
    k = first_level(count == 1)
    status = np.where(empty, ST_EMPTY, np.where(k >= 0, ST_OK, ST_FAIL))
    rows = np.arange(len(k))
    names = np.where(k >= 0, name[rows, np.maximum(k, 0)], 0)
    return status, names, k


def recover_dist(count: np.ndarray, dist: np.ndarray, name: np.ndarray):
    status, names, k = recover_xor(count, name)
    rows = np.arange(len(k))
    d = np.where(k >= 0, dist[rows, np.maximum(k, 0)], INF)
    return status, d, names


def recover_cis(count: np.ndarray, sx: np.ndarray, sy: np.ndarray, cb: CisCodebook):
    """Status, source index and multiplicity per bank."""
    empty = (count[:, -1] == 0) & (sx[:, -1] == 0) & (sy[:, -1] == 0)
    ids = cb.decode_many(sx, sy, count)
    k = first_level(ids > 0)
    rows = np.arange(len(k))
    kk = np.maximum(k, 0)
    src = np.where(k >= 0, ids[rows, kk], 0) if len(k) else np.empty(0, np.int64)
    cnt = np.where(k >= 0, count[rows, kk], 0) if len(k) else np.empty(0, np.int64)
    status = np.where(empty, ST_EMPTY, np.where(k >= 0, ST_OK, ST_FAIL))
    return status, src, cnt
