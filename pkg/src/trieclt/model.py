"""Letter-probability models and the constants derived from them.

A model is a probability vector over a finite alphabet of r >= 2 letters,
identified by their indices 0..r-1.  Everything downstream (sampling,
analytics) is a function of this vector: the entropy H, the Dirichlet-type
sums rho(s) = sum p_a^s, and the span d = gcd{-ln p_a} that decides whether
asymptotics oscillate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from math import gcd

import numpy as np

from .errors import SpanUndetermined

_SUM_TOL = 1e-12
# floats are accepted as exact rationals only when exactly representable
# with a small power-of-two denominator (0.5, 0.25, ...); see span().
_DYADIC_DEN_CAP = 1 << 20
_FACTOR_CAP = 10**12


@dataclass(frozen=True)
class ProbModel:
    """Alphabet probabilities plus optional exact/rational information.

    probs          per-letter probabilities, each in (0,1), summing to 1
    rationals      optional exact representation (same order as probs)
    declared_span  optional override for the span gcd{-ln p_a}
    label          optional display name
    """

    probs: tuple[float, ...]
    rationals: tuple[Fraction, ...] | None = None
    declared_span: float | None = None
    label: str | None = None
    _cum: np.ndarray = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        if len(probs) < 2:
            raise ValueError("need at least two letters")
        if any(p <= 0.0 or p >= 1.0 for p in probs):
            raise ValueError("every probability must lie strictly in (0,1)")
        if self.rationals is not None:
            rats = tuple(Fraction(q) for q in self.rationals)
            if len(rats) != len(probs):
                raise ValueError("rationals and probs differ in length")
            if sum(rats) != 1:
                raise ValueError("exact probabilities must sum to 1")
            for p, q in zip(probs, rats):
                if abs(p - float(q)) > 1e-9:
                    raise ValueError(f"prob {p} does not match rational {q}")
            object.__setattr__(self, "rationals", rats)
        elif abs(sum(probs) - 1.0) > _SUM_TOL:
            raise ValueError(f"probabilities sum to {sum(probs)!r}, not 1")
        if self.declared_span is not None and self.declared_span < 0:
            raise ValueError("declared_span must be >= 0")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "_cum", np.cumsum(np.array(probs))[:-1])

    @property
    def r(self) -> int:
        return len(self.probs)

    @property
    def pmin(self) -> float:
        return min(self.probs)

    @property
    def pmax(self) -> float:
        return max(self.probs)

    def prefix_prob(self, path) -> float:
        """P(path): probability that a random string starts with `path`."""
        out = 1.0
        for a in path:
            out *= self.probs[a]
        return out

    def entropy(self) -> float:
        return entropy(self)

    def rho(self, s):
        return rho(self, s)

    def span(self) -> float:
        return span(self)

    @property
    def is_symmetric(self) -> bool:
        return max(self.probs) - min(self.probs) < 1e-15

    def to_dict(self) -> dict:
        d = {"probs": list(self.probs)}
        if self.rationals is not None:
            d["probs"] = [{"num": q.numerator, "den": q.denominator} for q in self.rationals]
        if self.declared_span is not None:
            d["declared_span"] = self.declared_span
        if self.label is not None:
            d["label"] = self.label
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ProbModel":
        raw = d["probs"]
        if raw and isinstance(raw[0], dict):
            rats = tuple(Fraction(int(e["num"]), int(e["den"])) for e in raw)
            probs = tuple(float(q) for q in rats)
        else:
            rats = None
            probs = tuple(float(p) for p in raw)
        return cls(probs=probs, rationals=rats,
                   declared_span=d.get("declared_span"), label=d.get("label"))

    @classmethod
    def from_json(cls, path) -> "ProbModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def symmetric(r: int) -> ProbModel:
    """The uniform model on r letters."""
    return ProbModel(probs=(1.0 / r,) * r, rationals=(Fraction(1, r),) * r,
                     label=f"sym{r}")


def entropy(model: ProbModel) -> float:
    """H = -sum p_a ln p_a."""
    return -sum(p * math.log(p) for p in model.probs)


def rho(model: ProbModel, s):
    """rho(s) = sum_a p_a^s for real or complex s; rho(1) = 1."""
    if isinstance(s, complex):
        return sum(complex(p) ** s for p in model.probs)
    return sum(p ** s for p in model.probs)


def _factorize(n: int) -> dict[int, int]:
    """Trial-division factorization; adequate for rational model inputs."""
    if n > _FACTOR_CAP:
        raise SpanUndetermined(f"cannot factor {n} (beyond {_FACTOR_CAP})")
    out: dict[int, int] = {}
    d = 2
    while d * d <= n:
        while n % d == 0:
            out[d] = out.get(d, 0) + 1
            n //= d
        d += 1 if d == 2 else 2
    if n > 1:
        out[n] = out.get(n, 0) + 1
    return out


def _exponent_vectors(rats: tuple[Fraction, ...]) -> list[list[int]]:
    """-ln p_a as integer vectors over ln(prime) coordinates."""
    primes: list[int] = []
    vecs: list[dict[int, int]] = []
    for q in rats:
        v: dict[int, int] = {}
        for prime, e in _factorize(q.denominator).items():
            v[prime] = v.get(prime, 0) + e
        for prime, e in _factorize(q.numerator).items():
            v[prime] = v.get(prime, 0) - e
        vecs.append(v)
        for prime in v:
            if prime not in primes:
                primes.append(prime)
    primes.sort()
    return [[v.get(p, 0) for p in primes] for v in vecs], primes


def _span_from_rationals(rats: tuple[Fraction, ...]) -> float:
    vecs, primes = _exponent_vectors(rats)
    # all -ln p_a are positive, so every vector is nonzero
    base = vecs[0]
    content = 0
    for c in base:
        content = gcd(content, abs(c))
    unit = [c // content for c in base]
    multiples: list[int] = []
    for v in vecs:
        # v must be an integer multiple of unit; cross-check proportionality
        m = None
        for c, u in zip(v, unit):
            if u != 0:
                if c % u != 0:
                    return 0.0
                mm = c // u
                if m is None:
                    m = mm
                elif mm != m:
                    return 0.0
            elif c != 0:
                return 0.0
        if m is None or m <= 0:
            return 0.0
        # verify remaining coordinates
        if any(c != m * u for c, u in zip(v, unit)):
            return 0.0
        multiples.append(m)
    g = 0
    for m in multiples:
        g = gcd(g, m)
    return g * sum(u * math.log(p) for u, p in zip(unit, primes))


def span(model: ProbModel) -> float:
    """d = gcd{-ln p_a}: the largest d > 0 with every -ln p_a in d*Z, else 0.

    Exact when rationals are available or the floats are exactly
    representable dyadic rationals; a declared_span always wins.  Raises
    SpanUndetermined for general decimals: d is discontinuous in the
    probabilities, so numerics cannot decide it.
    """
    if model.declared_span is not None:
        return float(model.declared_span)
    rats = model.rationals
    if rats is None:
        rats = tuple(Fraction(p) for p in model.probs)
        if any(q.denominator > _DYADIC_DEN_CAP for q in rats):
            raise SpanUndetermined(
                "decimal probabilities without exact rationals or a declared span")
        if sum(rats) != 1:
            raise SpanUndetermined(
                "dyadic probabilities do not sum to 1 exactly; supply rationals")
    return _span_from_rationals(rats)
