"""Strict-turnstile edge streams that can be replayed pass by pass.

A stream is a fixed sequence of signed edge updates over vertices ``1..n``.
Algorithms never index into it directly; they consume it through
:meth:`MultipassStream.scan`, which brackets one pass and yields the updates
in numpy chunks. The pass counter is what every construction reports.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .hashing import rng_for

HEADER = "DGS1"


@dataclass(frozen=True)
class EdgeUpdate:
    u: int
    v: int
    sign: int
    weight: float | None = None

    def __post_init__(self):
        if self.u == self.v:
            raise ValueError(f"self-loop on vertex {self.u}")
        if self.sign not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {self.sign}")
        if self.weight is not None and not self.weight >= 1:
            raise ValueError(f"weight must be >= 1, got {self.weight}")

    @property
    def key(self) -> tuple[int, int]:
        return (self.u, self.v) if self.u < self.v else (self.v, self.u)


@dataclass
class UpdateChunk:
    """A contiguous block of updates as parallel arrays.

    ``key`` and ``raw`` are only set on translated streams, where endpoints
    are node centers and ``key`` names the underlying simple-graph edge.
    """

    u: np.ndarray
    v: np.ndarray
    sign: np.ndarray
    weight: np.ndarray
    key: np.ndarray | None = None
    raw: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.u)


class SpaceLedger:
    """Per-module byte counters for sketch state held during a pass."""

    def __init__(self):
        self.current: dict[str, int] = {}
        self.module_peak: dict[str, int] = {}
        self.peak_bytes = 0
        self.passes = 0

    def charge(self, module: str, nbytes: int) -> None:
        # monotone within a pass
        if nbytes > self.current.get(module, 0):
            self.current[module] = int(nbytes)

    def end_pass(self) -> None:
        total = sum(self.current.values())
        self.peak_bytes = max(self.peak_bytes, total)
        for mod, b in self.current.items():
            self.module_peak[mod] = max(self.module_peak.get(mod, 0), b)
        self.current = {}
        self.passes += 1

    def summary(self) -> dict:
        return {"peak_bytes": self.peak_bytes, "passes": self.passes,
                "per_module_peak": dict(sorted(self.module_peak.items()))}


class MultipassStream:
    """Replayable update log.

    ``permute_seed`` turns the stream into a permuting wrapper: every pass
    sees the same multiset of updates in a fresh seeded order.
    """

    def __init__(self, n: int, u, v, sign, weight=None, *, weighted: bool | None = None,
                 permute_seed: int | None = None, max_length: int | None = None,
                 chunk_size: int = 1 << 16, source: str = "memory"):
        if n < 1:
            raise ValueError("n must be positive")
        self.n = int(n)
        self.u = np.ascontiguousarray(u, dtype=np.int64)
        self.v = np.ascontiguousarray(v, dtype=np.int64)
        self.sign = np.ascontiguousarray(sign, dtype=np.int64)
        self.weighted = weight is not None if weighted is None else weighted
        if weight is None:
            self.weight = np.ones(len(self.u), dtype=np.float64)
        else:
            self.weight = np.ascontiguousarray(weight, dtype=np.float64)
        cap = 10 * self.n * self.n if max_length is None else max_length
        if len(self.u) > cap:
            raise ValueError(f"stream length {len(self.u)} exceeds cap {cap}")
        self._check()
        self.permute_seed = permute_seed
        self.chunk_size = chunk_size
        self.source = source if permute_seed is None else "permuted"
        self.passes_taken = 0
        self.ledger = SpaceLedger()
        self._open = False

    def _check(self):
        m = len(self.u)
        if not (len(self.v) == len(self.sign) == len(self.weight) == m):
            raise ValueError("update arrays differ in length")
        if m == 0:
            return
        if self.u.min() < 1 or self.v.min() < 1 or max(self.u.max(), self.v.max()) > self.n:
            raise ValueError("endpoint outside 1..n")
        if np.any(self.u == self.v):
            raise ValueError("self-loop in stream")
        if not np.all(np.abs(self.sign) == 1):
            raise ValueError("signs must be +1 or -1")
        if self.weighted and not np.all(self.weight >= 1):
            raise ValueError("weights must be >= 1")

    @classmethod
    def from_updates(cls, n: int, updates: Iterable[EdgeUpdate], weighted: bool | None = None,
                     **kw) -> "MultipassStream":
        ups = list(updates)
        if weighted is None:
            weighted = any(x.weight is not None for x in ups)
        w = [x.weight if x.weight is not None else 1.0 for x in ups] if weighted else None
        return cls(n, [x.u for x in ups], [x.v for x in ups], [x.sign for x in ups], w,
                   weighted=weighted, **kw)

    def __len__(self) -> int:
        return len(self.u)

    def permuted(self, seed: int) -> "MultipassStream":
        """A permuting wrapper over the same update log."""
        return MultipassStream(self.n, self.u, self.v, self.sign,
                               self.weight if self.weighted else None, weighted=self.weighted,
                               permute_seed=seed, chunk_size=self.chunk_size,
                               max_length=max(len(self), 10 * self.n * self.n))

    def updates(self) -> list[EdgeUpdate]:
        """The stored update sequence (offline access, not a pass)."""
        out = []
        for i in range(len(self.u)):
            w = float(self.weight[i]) if self.weighted else None
            out.append(EdgeUpdate(int(self.u[i]), int(self.v[i]), int(self.sign[i]), w))
        return out

    # pass bracketing

    def begin_pass(self) -> None:
        if self._open:
            raise RuntimeError("pass already open")
        self._open = True

    def end_pass(self) -> None:
        if not self._open:
            raise RuntimeError("no pass open")
        self._open = False
        self.passes_taken += 1
        self.ledger.end_pass()

    def _order(self) -> np.ndarray | None:
        if self.permute_seed is None:
            return None
        return rng_for(self.permute_seed, "pass", self.passes_taken).permutation(len(self.u))

    def chunks(self) -> Iterator[UpdateChunk]:
        """Yield the updates of the currently open pass."""
        if not self._open:
            raise RuntimeError("chunks() outside a pass")
        order = self._order()
        m = len(self.u)
        for lo in range(0, m, self.chunk_size):
            if order is None:
                sl = slice(lo, lo + self.chunk_size)
                yield UpdateChunk(self.u[sl], self.v[sl], self.sign[sl], self.weight[sl])
            else:
                idx = order[lo:lo + self.chunk_size]
                yield UpdateChunk(self.u[idx], self.v[idx], self.sign[idx], self.weight[idx])

    def scan(self) -> Iterator[UpdateChunk]:
        """One full pass."""
        self.begin_pass()
        try:
            yield from self.chunks()
        finally:
            self.end_pass()


def final_multiplicities(stream: MultipassStream) -> dict[tuple[int, int], int]:
    """Replay once and sum signs per unordered edge (counts as a pass)."""
    mult: Counter = Counter()
    for ch in stream.scan():
        a = np.minimum(ch.u, ch.v)
        b = np.maximum(ch.u, ch.v)
        for x, y, s in zip(a.tolist(), b.tolist(), ch.sign.tolist()):
            mult[(x, y)] += s
    return {e: c for e, c in mult.items() if c != 0}


def final_edges(stream: MultipassStream) -> dict[tuple[int, int], float]:
    """Offline read of the final simple graph: edge -> weight. Not a pass."""
    mult: Counter = Counter()
    weight: dict[tuple[int, int], float] = {}
    a = np.minimum(stream.u, stream.v).tolist()
    b = np.maximum(stream.u, stream.v).tolist()
    for x, y, s, w in zip(a, b, stream.sign.tolist(), stream.weight.tolist()):
        mult[(x, y)] += s
        weight[(x, y)] = w
    return {e: weight[e] for e, c in sorted(mult.items()) if c == 1}


def validate_strict_turnstile(stream: MultipassStream) -> dict:
    """Replay once; report edges whose final multiplicity is outside {0, 1}."""
    mult: Counter = Counter()
    low: dict[tuple[int, int], int] = {}
    weights: dict[tuple[int, int], float] = {}
    violations = []
    for ch in stream.scan():
        a = np.minimum(ch.u, ch.v).tolist()
        b = np.maximum(ch.u, ch.v).tolist()
        for x, y, s, w in zip(a, b, ch.sign.tolist(), ch.weight.tolist()):
            e = (x, y)
            mult[e] += s
            if mult[e] < low.get(e, 0):
                low[e] = mult[e]
            if e in weights and weights[e] != w:
                violations.append({"edge": list(e), "kind": "weight-mismatch", "value": w})
            weights.setdefault(e, w)
    floor = -len(stream)
    for e in sorted(mult):
        if mult[e] not in (0, 1):
            violations.append({"edge": list(e), "kind": "final", "value": mult[e]})
        if low.get(e, 0) < floor:
            violations.append({"edge": list(e), "kind": "intermediate", "value": low[e]})
    return {"ok": not violations, "violations": violations}


def generate_stream(n: int, target_edges: int, churn: float = 0.0, weighted: bool = False,
                    max_weight: float = 1.0, seed: int = 0, log_weights: bool = False) -> MultipassStream:
    """Random strict-turnstile stream whose final graph has ``target_edges`` edges.

    Besides one insert per final edge it emits ``round(churn * target_edges)``
    insert/delete pairs on random vertex pairs, shuffled together. Weights are
    integers drawn uniformly from ``1..floor(max_weight)``, or with a
    log-uniform law when ``log_weights`` is set (wide aspect ratios).
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if churn < 0:
        raise ValueError("churn must be non-negative")
    if max_weight < 1:
        raise ValueError("max_weight must be at least 1")
    total = n * (n - 1) // 2
    if target_edges > total:
        raise ValueError(f"target_edges {target_edges} exceeds n(n-1)/2 = {total}")
    rng = rng_for(seed, "generate")
    if target_edges > total // 2:
        idx = rng.choice(total, size=target_edges, replace=False)
        edges = [_pair_from_index(int(i), n) for i in sorted(idx)]
    else:
        chosen: set[tuple[int, int]] = set()
        edges = []
        while len(edges) < target_edges:
            x, y = (int(t) for t in rng.integers(1, n + 1, size=2))
            if x == y:
                continue
            e = (min(x, y), max(x, y))
            if e not in chosen:
                chosen.add(e)
                edges.append(e)
    wmax = int(np.floor(max_weight))

    def draw() -> float:
        if log_weights:
            return float(max(1, min(wmax, round(math.exp(rng.uniform(0, math.log(wmax + 1)))))))
        return float(rng.integers(1, wmax + 1))

    weight = {e: draw() if weighted else 1.0 for e in edges}
    ups: list[tuple[int, int, int, float]] = []
    for e in edges:
        x, y = e if rng.random() < 0.5 else (e[1], e[0])
        ups.append((x, y, 1, weight[e]))
    for _ in range(int(round(churn * target_edges))):
        x, y = (int(t) for t in rng.integers(1, n + 1, size=2))
        while x == y:
            x, y = (int(t) for t in rng.integers(1, n + 1, size=2))
        e = (min(x, y), max(x, y))
        w = weight.get(e, draw() if weighted else 1.0)
        ups.append((x, y, 1, w))
        ups.append((y, x, -1, w))
    perm = rng.permutation(len(ups))
    ups = [ups[i] for i in perm]
    arr = np.array(ups, dtype=np.float64).reshape(-1, 4)
    return MultipassStream(n, arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64),
                           arr[:, 2].astype(np.int64), arr[:, 3] if weighted else None,
                           weighted=weighted)


def _pair_from_index(i: int, n: int) -> tuple[int, int]:
    # row-major enumeration of pairs (x, y), 1 <= x < y <= n
    x = 1
    row = n - 1
    while i >= row:
        i -= row
        x += 1
        row -= 1
    return x, x + 1 + i


def _fmt_weight(w: float) -> str:
    return str(int(w)) if float(w).is_integer() else repr(float(w))


def save_stream(stream: MultipassStream, path) -> None:
    lines = [f"{HEADER} {stream.n} {'weighted' if stream.weighted else 'unweighted'}"]
    for x, y, s, w in zip(stream.u.tolist(), stream.v.tolist(), stream.sign.tolist(),
                          stream.weight.tolist()):
        op = "+" if s > 0 else "-"
        lines.append(f"{op} {x} {y} {_fmt_weight(w)}" if stream.weighted else f"{op} {x} {y}")
    Path(path).write_text("\n".join(lines) + "\n")


class StreamParseError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


def load_stream(path, **kw) -> MultipassStream:
    n = None
    weighted = False
    us, vs, ss, ws = [], [], [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            if n is None:
                if len(tok) != 3 or tok[0] != HEADER or tok[2] not in ("weighted", "unweighted"):
                    raise StreamParseError(lineno, f"bad header {line!r}")
                try:
                    n = int(tok[1])
                except ValueError:
                    raise StreamParseError(lineno, f"bad vertex count {tok[1]!r}") from None
                weighted = tok[2] == "weighted"
                continue
            want = 4 if weighted else 3
            if len(tok) != want or tok[0] not in "+-" or len(tok[0]) != 1:
                raise StreamParseError(lineno, f"malformed update {line!r}")
            try:
                x, y = int(tok[1]), int(tok[2])
                w = float(tok[3]) if weighted else 1.0
            except ValueError:
                raise StreamParseError(lineno, f"malformed update {line!r}") from None
            if not (1 <= x <= n and 1 <= y <= n) or x == y:
                raise StreamParseError(lineno, f"bad endpoints {x} {y}")
            if weighted and not w >= 1:
                raise StreamParseError(lineno, f"weight {tok[3]} below 1")
            us.append(x)
            vs.append(y)
            ss.append(1 if tok[0] == "+" else -1)
            ws.append(w)
    if n is None:
        raise StreamParseError(0, "missing header")
    return MultipassStream(n, us, vs, ss, ws if weighted else None, weighted=weighted,
                           source=f"file:{path}", **kw)


class ConstructionError(RuntimeError):
    """A construction failed twice in a row on the same pass."""


# Pass scheduling. A construction is written as a generator that yields the
# work it needs done in the next pass (one job or a list of jobs) and reads
# the outcome from those job objects when it is resumed. ``run_passes``
# drives any number of such generators over shared passes, which is how
# independent constructions run "in parallel" on one stream.

def _jobs(x) -> list:
    return list(x) if isinstance(x, (list, tuple)) else [x]


def run_passes(stream: MultipassStream, *gens):
    results = [None] * len(gens)
    current = {}
    for i, g in enumerate(gens):
        try:
            current[i] = _jobs(g.send(None))
        except StopIteration as stop:
            results[i] = stop.value
    while current:
        stream.begin_pass()
        try:
            for ch in stream.chunks():
                for jobs in current.values():
                    for job in jobs:
                        job.consume(ch)
            for jobs in current.values():
                for job in jobs:
                    stream.ledger.charge(getattr(job, "module", "other"), job.nbytes)
        finally:
            stream.end_pass()
        for i in list(current):
            try:
                current[i] = _jobs(gens[i].send(None))
            except StopIteration as stop:
                results[i] = stop.value
                del current[i]
    return results


def run_one(stream: MultipassStream, gen):
    return run_passes(stream, gen)[0]


class TranslatedJob:
    """Feeds a job with chunks rewritten by ``translate`` (returns None to skip)."""

    def __init__(self, job, translate):
        self.job = job
        self.translate = translate
        self.module = getattr(job, "module", "other")

    def consume(self, ch: UpdateChunk) -> None:
        t = self.translate(ch)
        if t is not None and len(t):
            self.job.consume(t)

    @property
    def nbytes(self) -> int:
        return self.job.nbytes


def translated(gen, translate):
    """Wrap a construction so every job it yields sees translated chunks."""
    try:
        req = gen.send(None)
        while True:
            wrapped = [TranslatedJob(j, translate) for j in _jobs(req)]
            yield wrapped
            req = gen.send(None)
    except StopIteration as stop:
        return stop.value
