"""Pairwise independent hashing into {1, ..., 2^lam}.

``h(x) = ((a*x + b) mod p) mod 2^lam + 1`` with ``p`` the smallest prime
above the squared domain size. A single :class:`PairwiseHash` is convenient
in scalar code; :class:`HashFamily` holds many functions sharing ``p`` and
``lam`` and evaluates them on numpy arrays.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


def rng_for(seed: int, *tags) -> np.random.Generator:
    """A generator derived from ``seed`` and a path of int/str tags."""
    words = [int(seed) & 0xFFFFFFFF, (int(seed) >> 32) & 0xFFFFFFFF]
    for t in tags:
        if isinstance(t, str):
            words.append(zlib.crc32(t.encode()))
        else:
            t = int(t)
            words.extend([t & 0xFFFFFFFF, (t >> 32) & 0xFFFFFFFF])
    return np.random.default_rng(np.random.SeedSequence(words))


@lru_cache(maxsize=None)
def smallest_prime_above(x: int) -> int:
    from sympy import nextprime
    return int(nextprime(x))


def ceil_log2(x: int) -> int:
    """Smallest k with 2^k >= x, for x >= 1."""
    if x < 1:
        raise ValueError("ceil_log2 needs x >= 1")
    return (x - 1).bit_length()


def levels_of(h: np.ndarray) -> np.ndarray:
    """Vectorized ceil_log2 for integer arrays with entries >= 1."""
    h = np.asarray(h, dtype=np.int64)
    out = np.zeros(h.shape, dtype=np.int64)
    big = h > 1
    # frexp is exact for integers below 2^53
    _, e = np.frexp((h[big] - 1).astype(np.float64))
    out[big] = e
    return out


@dataclass(frozen=True)
class PairwiseHash:
    p: int
    a: int
    b: int
    lam: int
    domain: int

    def __call__(self, x: int) -> int:
        return self.eval(x)

    def eval(self, x: int) -> int:
        if not 1 <= x <= self.domain:
            raise ValueError(f"hash input {x} outside 1..{self.domain}")
        return ((self.a * x + self.b) % self.p) % (1 << self.lam) + 1


def _params(domain: int, out_bits: int | None) -> tuple[int, int]:
    if domain < 1:
        raise ValueError("domain must be positive")
    lam = ceil_log2(max(domain, 2)) if out_bits is None else int(out_bits)
    return smallest_prime_above(max(domain, 2) ** 2), lam


def sample_hash(n: int, seed: int, *, out_bits: int | None = None) -> PairwiseHash:
    """Deterministic draw from the family on {1..n}; lam defaults to ceil(log2 n)."""
    if n < 2:
        raise ValueError("n must be at least 2")
    p, lam = _params(n, out_bits)
    rng = rng_for(seed, "pairwise")
    a = int(rng.integers(1, p))
    b = int(rng.integers(0, p))
    return PairwiseHash(p, a, b, lam, n)


class HashFamily:
    """``count`` independent functions with shared ``p`` and ``lam``."""

    def __init__(self, domain: int, count: int, rng: np.random.Generator,
                 out_bits: int | None = None):
        self.p, self.lam = _params(domain, out_bits)
        self.domain = domain
        self.count = count
        self.a = rng.integers(1, self.p, size=count, dtype=np.int64)
        self.b = rng.integers(0, self.p, size=count, dtype=np.int64)
        # a*x stays below 2^63 when p * domain does
        self._exact_int64 = self.p * (domain + 1) < (1 << 62)

    def member(self, i: int) -> PairwiseHash:
        return PairwiseHash(self.p, int(self.a[i]), int(self.b[i]), self.lam, self.domain)

    def values(self, x: np.ndarray) -> np.ndarray:
        """Shape (count, len(x)) array of hash values in 1..2^lam."""
        x = np.asarray(x, dtype=np.int64)
        if self._exact_int64:
            v = (self.a[:, None] * x[None, :] + self.b[:, None]) % self.p
        else:
            a = self.a.astype(object)[:, None]
            b = self.b.astype(object)[:, None]
            v = ((a * x.astype(object)[None, :] + b) % self.p).astype(np.int64)
        return (v & ((1 << self.lam) - 1)) + 1

    def levels(self, x: np.ndarray) -> np.ndarray:
        """Lowest slot level each input lands in, shape (count, len(x))."""
        return levels_of(self.values(x))

    def level_table(self) -> np.ndarray:
        """Levels for every input 0..domain (column 0 unused), shape (count, domain+1)."""
        t = np.zeros((self.count, self.domain + 1), dtype=np.int64)
        t[:, 1:] = self.levels(np.arange(1, self.domain + 1))
        return t
