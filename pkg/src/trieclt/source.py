"""Counter-based randomness for i.i.d. string sources.

Every random letter is a pure function of (seed, string index, position),
computed with a splitmix64-style avalanche hash.  Streams therefore never
share state: trials parallelize freely and results are bit-identical no
matter the evaluation order or worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ProbModel

_GOLDEN = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1

# domain tags keep letter streams and meta draws (Poisson N, etc.) disjoint
TAG_LETTERS = 0x1
TAG_META = 0x2


def _mix(z: int) -> int:
    """splitmix64 finalizer on a Python int."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _mix_array(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= np.uint64(0xBF58476D1CE4E5B9)
    z ^= z >> np.uint64(27)
    z *= np.uint64(0x94D049BB133111EB)
    z ^= z >> np.uint64(31)
    return z


def chain_key(*parts: int) -> int:
    """Fold integers into one 64-bit key, order-sensitively."""
    h = _GOLDEN
    for v in parts:
        h = _mix((h ^ (v & _MASK)) + _GOLDEN)
    return h


def stream_keys(key: int, ids: np.ndarray) -> np.ndarray:
    """Per-string sub-keys for string indices `ids` under a trial key."""
    return _mix_array((np.uint64(key) ^ (ids.astype(np.uint64) + np.uint64(1)) *
                       np.uint64(_GOLDEN)) + np.uint64(_GOLDEN))


def uniforms_at(keys: np.ndarray, pos: int) -> np.ndarray:
    """U(0,1) draws at stream position `pos` for each key (vectorized)."""
    z = _mix_array(keys + np.uint64(((pos + 1) * _GOLDEN) & _MASK))
    return (z >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


def _uniform_scalar(key: int, pos: int) -> float:
    z = _mix((key + ((pos + 1) * _GOLDEN)) & _MASK)
    return (z >> 11) * (2.0 ** -53)


class _UStream:
    """Sequential U(0,1) stream over a fixed key (counter-based inside)."""

    __slots__ = ("key", "pos")

    def __init__(self, key: int):
        self.key = key
        self.pos = 0

    def next(self) -> float:
        u = _uniform_scalar(self.key, self.pos)
        self.pos += 1
        return u


def poisson_draw(lam: float, key: int) -> int:
    """Po(lam) deterministic in `key`; exact inversion for small lam,
    Hormann's PTRS transformed rejection otherwise."""
    if lam <= 0:
        return 0
    us = _UStream(key)
    if lam < 10.0:
        # inversion by multiplication of uniforms
        limit = math.exp(-lam)
        n = 0
        prod = us.next()
        while prod > limit:
            prod *= us.next()
            n += 1
        return n
    b = 0.931 + 2.53 * math.sqrt(lam)
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    v_r = 0.9277 - 3.6224 / (b - 2.0)
    log_lam = math.log(lam)
    while True:
        u = us.next() - 0.5
        v = us.next()
        us_ = 0.5 - abs(u)
        k = math.floor((2.0 * a / us_ + b) * u + lam + 0.43)
        if us_ >= 0.07 and v <= v_r:
            return int(k)
        if k < 0 or (us_ < 0.013 and v > us_):
            continue
        if (math.log(v) + math.log(inv_alpha) - math.log(a / (us_ * us_) + b)
                <= k * log_lam - lam - math.lgamma(k + 1.0)):
            return int(k)


class LetterStream:
    """Lazy infinite letter stream: stream[i] is the i-th letter."""

    __slots__ = ("_key", "_cum")

    def __init__(self, key: int, cum: np.ndarray):
        self._key = key
        self._cum = cum

    def letter(self, i: int) -> int:
        u = _uniform_scalar(self._key, i)
        return int(np.searchsorted(self._cum, u, side="right"))


@dataclass(frozen=True)
class StringSource:
    """An i.i.d. source of infinite strings under `model`, seeded.

    Stream k is fully determined by (seed, k); distinct k give independent
    streams.  `letters_at` draws one letter per listed stream, vectorized.
    """

    model: ProbModel
    seed: int

    def _base_key(self) -> int:
        return chain_key(self.seed, TAG_LETTERS)

    def stream(self, k: int) -> LetterStream:
        keys = stream_keys(self._base_key(), np.array([k], dtype=np.uint64))
        return LetterStream(int(keys[0]), self.model._cum)

    def keys_for(self, ids: np.ndarray) -> np.ndarray:
        return stream_keys(self._base_key(), ids)

    def letters_at(self, keys: np.ndarray, pos: int) -> np.ndarray:
        u = uniforms_at(keys, pos)
        return np.searchsorted(self.model._cum, u, side="right")

    def meta_key(self, *parts: int) -> int:
        return chain_key(self.seed, TAG_META, *parts)
