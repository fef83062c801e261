"""Sums over all finite strings alpha of terms depending only on P(alpha).

At depth m the prefix probabilities are products prod_a p_a^{m_a} with
multinomial multiplicities, so a sum over the r^m strings collapses to the
compositions of m into r parts.  Layers are summed until a geometric tail
bound drops below tolerance; symmetric models collapse each layer to a
single value.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

from .errors import TruncationNotConverged
from .model import ProbModel

_LAYER_CAP = 20000
_WORK_CAP = 4_000_000


def layer(model: ProbModel, m: int):
    """(values, weights): distinct P(alpha) at depth m and their counts."""
    r = model.r
    if m == 0:
        return np.array([1.0]), np.array([1.0])
    if model.is_symmetric:
        return (np.array([model.probs[0] ** m]), np.array([float(r) ** m]))
    if r == 2:
        j = np.arange(m + 1)
        logw = gammaln(m + 1) - gammaln(j + 1) - gammaln(m - j + 1)
        logv = j * math.log(model.probs[0]) + (m - j) * math.log(model.probs[1])
        return np.exp(logv), np.exp(logw)
    if (m + 1) ** (r - 1) > _WORK_CAP:
        raise TruncationNotConverged(
            f"composition layer too large at depth {m} for r={r}")
    grids = np.meshgrid(*[np.arange(m + 1)] * (r - 1), indexing="ij")
    head = np.stack([g.ravel() for g in grids])
    rest = m - head.sum(axis=0)
    ok = rest >= 0
    head = head[:, ok]
    rest = rest[ok]
    counts = np.vstack([head, rest])
    logw = gammaln(m + 1) - gammaln(counts + 1.0).sum(axis=0)
    logp = np.log(np.array(model.probs))
    logv = (counts * logp[:, None]).sum(axis=0)
    return np.exp(logv), np.exp(logw)


def layers_to_subunit(model: ProbModel, lam: float) -> int:
    """Depth m past which lam * pmax^m < 1: termination of lam-scaled sums
    must not be judged before the arguments have entered the x < 1 regime."""
    if lam <= 1.0:
        return 4
    return int(math.ceil(math.log(lam) / -math.log(model.pmax))) + 4


def sum_over_prefixes(model: ProbModel, term_fn, tol: float = 1e-10,
                      star: bool = False, include_empty: bool = True,
                      min_layers: int = 4):
    """sum over alpha in A* of term_fn(P(alpha)), truncated with a tail bound.

    term_fn maps an ndarray of probabilities to (possibly complex) values and
    must obey the quadratic decay template term(P) = O(P^2) as P -> 0; the
    tail after depth m is bounded by C rho(2)^m/(1-rho(2)) with C calibrated
    from the computed layers.  With star=True the empty string is counted
    once and every other string twice.  Returns (value, tail_bound).
    """
    rho2 = float(model.rho(2))
    total = 0.0 + 0.0j
    prev_abs = None
    decayed = 0
    m = 0
    tail = math.inf
    while True:
        if m > _LAYER_CAP:
            raise TruncationNotConverged(
                f"prefix sum not converged after {m} layers (tail ~ {tail:.3g})")
        vals, wts = layer(model, m)
        terms = np.asarray(term_fn(vals), dtype=complex)
        total += np.sum(wts * terms)
        layer_abs = float(np.sum(wts * np.abs(terms)))
        # C such that |term| <= C P^2 on this layer
        mask = vals > 1e-120
        c_here = float(np.max(np.abs(terms[mask]) / vals[mask] ** 2)) if mask.any() else 0.0
        tail = c_here * rho2 ** (m + 1) / (1.0 - rho2)
        if prev_abs is not None and layer_abs <= prev_abs:
            decayed += 1
        else:
            decayed = 0
        prev_abs = layer_abs
        m += 1
        if m >= min_layers and decayed >= 2 and tail < tol:
            break
    scale = 2.0 if star else 1.0
    value = scale * total
    if star or not include_empty:
        root = complex(np.asarray(term_fn(np.array([1.0])), dtype=complex)[0])
        value -= root
    return value, scale * tail


def sum_real(model: ProbModel, term_fn, **kw):
    """Real-valued convenience wrapper around sum_over_prefixes."""
    v, err = sum_over_prefixes(model, term_fn, **kw)
    return v.real, err


def harmonic_sum(model: ProbModel, f, lam: float, tol: float = 1e-9):
    """F(lam) = sum over alpha of f(lam * P(alpha)), truncated/error-bounded.

    f must satisfy f(x) = O(x^2) near 0; the probe guard raises
    TruncationNotConverged when the template visibly fails.
    """
    if lam <= 0:
        raise ValueError("lam must be > 0")
    # decay-template probe at small arguments
    probes = lam * np.array([1e-6, 1e-7, 1e-8])
    pv = np.abs(np.asarray(f(probes), dtype=float)) / probes ** 2
    if pv[2] > 4.0 * pv[0] + 1e-12:
        raise TruncationNotConverged("f(x)/x^2 grows as x -> 0: decay template fails")
    value, err = sum_over_prefixes(model, lambda P: f(lam * P), tol=tol,
                                   min_layers=layers_to_subunit(model, lam))
    return value.real, err
