"""Constants for k-protected nodes in random tries.

A node is k-protected when its rank (distance to the nearest descendant
leaf) is at least k.  The asymptotic proportion of k-protected nodes is
MfE(-1)/(1+H), where MfE is the Mellin transform of the mean kernel of the
protection indicator toll.  MfE(-1) has

  * a general inclusion-exclusion form over subsets of depth-(k-1) prefixes
    (2^(r^(k-1)) terms, only feasible for r^(k-1) <= 20),
  * a symmetric-case reduction to an alternating series over j <= r^(k-1),
    whose terms grow like (R/j)^j: the float evaluation cancels
    catastrophically for large R, so it is summed in adaptive-precision
    arithmetic, and
  * a smooth product integrand for direct quadrature at any size.
"""

from __future__ import annotations

import math
import warnings
from itertools import product as _iproduct

import mpmath
import numpy as np
from scipy import integrate
from scipy.integrate import IntegrationWarning
from scipy.special import gamma as _sp_gamma
from scipy.special import loggamma

from .errors import CombinatorialBlowup, QuadratureNotConverged, StripViolation
from .model import ProbModel, entropy, rho
from .prefixes import layer

_SUBSET_CAP = 20          # general path: 2^(r^(k-1)) subset terms
_MP_CAP = 4096            # symmetric series cap before switching to quadrature


def _gamma_c(s):
    if isinstance(s, complex):
        return np.exp(loggamma(s))
    return _sp_gamma(s)


def asymptotic(r: int, k: int) -> float:
    """Leading-order value of the symmetric constant: 1/(2 r^(k-1))."""
    if r < 2 or k < 2:
        raise ValueError("need r, k >= 2")
    return 1.0 / (2.0 * r ** (k - 1))


# -- mean kernel (the smooth product form) --------------------------------------------


def mean_kernel(model: ProbModel, k: int, lam):
    """E of the protection indicator at the root under the Poisson model."""
    if k == 1:
        return -np.expm1(-lam) - lam * np.exp(-lam)
    vals, wts = layer(model, k - 1)
    lam = np.asarray(lam, dtype=float)
    x = vals[:, None] * lam[None, ...].reshape(len(vals), -1)
    logs = np.log1p(-x * np.exp(-x))
    out = np.exp((wts[:, None] * logs).sum(axis=0)) - np.exp(-lam.ravel())
    out = out.reshape(lam.shape)
    return out if out.shape else float(out)


def dmean_kernel(model: ProbModel, k: int, lam: float) -> float:
    """d/dlam of mean_kernel, analytically through the product."""
    if k == 1:
        return lam * math.exp(-lam)
    vals, wts = layer(model, k - 1)
    x = vals * lam
    ex = np.exp(-x)
    prod = math.exp(float(np.sum(wts * np.log1p(-x * ex))))
    dlog = -vals * ex * (1.0 - x) / (1.0 - x * ex)
    return prod * float(np.sum(wts * dlog)) + math.exp(-lam)


# -- exact constants -------------------------------------------------------------------


def exact_constant(model: ProbModel, k: int) -> float:
    """MfE(-1) by inclusion-exclusion over subsets of depth-(k-1) prefixes.

    Raises CombinatorialBlowup beyond r^(k-1) = 20 items; symmetric models
    should use symmetric_constant, everything else the quadrature path.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if k == 1:
        return 1.0
    r = model.r
    n_items = r ** (k - 1)
    if n_items > _SUBSET_CAP:
        raise CombinatorialBlowup(
            f"{n_items} prefixes need 2^{n_items} subset terms; use the "
            "symmetric shortcut or the quadrature of the product form")
    ps = [model.prefix_prob(w) for w in _iproduct(range(r), repeat=k - 1)]
    prods = np.array([1.0])
    sums = np.array([0.0])
    pcs = np.array([0], dtype=np.int64)
    for p in ps:
        prods = np.concatenate([prods, prods * p])
        sums = np.concatenate([sums, sums + p])
        pcs = np.concatenate([pcs, pcs + 1])
    mask = pcs >= 2
    signs = np.where(pcs[mask] % 2 == 0, 1.0, -1.0)
    fact = np.array([math.factorial(c - 2) for c in pcs[mask]])
    tail = float(np.sum(signs * prods[mask] / sums[mask] ** (pcs[mask] - 1) * fact))
    return 1.0 - (k - 1) * entropy(model) + tail


def symmetric_constant(r: int, k: int) -> float:
    """MfE(-1) in the symmetric case; reduces k to 2 over R = r^(k-1) letters."""
    if r < 2 or k < 1:
        raise ValueError("need r >= 2, k >= 1")
    if k == 1:
        return 1.0
    R = r ** (k - 1)
    if R > _MP_CAP:
        v, _ = constant_by_quadrature_symmetric(R)
        return v
    # terms reach ~ (R/j)^j, so carry enough digits to survive the cancellation
    digits = max(50, int(R / (math.e * math.log(10.0))) + 40)
    with mpmath.workdps(digits):
        total = mpmath.mpf(0)
        falling = mpmath.mpf(1)  # (R-1)!/(R-j)! built incrementally
        for j in range(2, R + 1):
            falling *= R - j + 1
            term = falling / ((j - 1) * mpmath.mpf(j) ** j)
            total += term if j % 2 == 0 else -term
        out = 1 - mpmath.log(R) + total
        return float(out)


def constant_with_method(model: ProbModel, k: int):
    """(value, method, err): the dispatching entry point for MfE(-1)."""
    if k == 1:
        return 1.0, "closed-form", 0.0
    if model.is_symmetric:
        R = model.r ** (k - 1)
        if R > _MP_CAP:
            v, err = constant_by_quadrature_symmetric(R)
            return v, "quadrature", err
        return symmetric_constant(model.r, k), "series-exact", 1e-20
    if model.r ** (k - 1) <= _SUBSET_CAP:
        return exact_constant(model, k), "closed-form", 1e-12
    v, err = constant_by_quadrature(model, k)
    return v, "quadrature", err


def constant_by_quadrature(model: ProbModel, k: int, tol: float = 1e-10):
    """MfE(-1) = integral of mean_kernel(lam)/lam^2 via adaptive quadrature."""
    def f(u):
        if abs(u) > 600.0:
            # kernel is O(x^2) at 0 and bounded at infinity: both tails vanish
            return 0.0
        x = math.exp(u)
        return float(mean_kernel(model, k, np.array([x]))[0]) * math.exp(-u)

    total = 0.0
    err = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        for lo, hi in ((-np.inf, 0.0), (0.0, np.inf)):
            v, e = integrate.quad(f, lo, hi, epsabs=tol / 2.0, limit=300)
            total += v
            err += e
    if err > 1000.0 * tol:
        raise QuadratureNotConverged(f"achieved {err:.2e}", achieved=err)
    return total, err


def constant_by_quadrature_symmetric(R: int, tol: float = 1e-10):
    """Quadrature of the symmetric product form (1 - (x/R)e^(-x/R))^R - e^(-x)."""
    def f(u):
        if abs(u) > 600.0:
            return 0.0
        x = math.exp(u)
        y = (x / R) * math.exp(-x / R)
        return (math.exp(R * math.log1p(-y)) - math.exp(-x)) * math.exp(-u)

    total = 0.0
    err = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        for lo, hi in ((-np.inf, 0.0), (0.0, np.inf)):
            v, e = integrate.quad(f, lo, hi, epsabs=tol / 2.0, limit=300)
            total += v
            err += e
    if err > 1000.0 * tol:
        raise QuadratureNotConverged(f"achieved {err:.2e}", achieved=err)
    return total, err


# -- Mellin transform at general s ---------------------------------------------------


def mellin(model: ProbModel, k: int, s):
    """MfE(s) for the protection toll.

    Exact at s = -1; elsewhere the inclusion-exclusion form when feasible,
    otherwise quadrature of the product kernel in the strip (-2, 0).
    """
    sc = complex(s)
    if sc == -1.0 + 0j or (abs(sc + 1.0) < 1e-12 and not isinstance(s, complex)):
        v, _, _ = constant_with_method(model, k)
        return v if isinstance(s, complex) is False else complex(v)
    v, _, _ = mellin_with_method(model, k, s)
    return v


def mellin_with_method(model: ProbModel, k: int, s, tol: float = 1e-9):
    sc = complex(s)
    if abs(sc + 1.0) < 1e-9:
        v, how, err = constant_with_method(model, k)
        return (complex(v) if isinstance(s, complex) else v), how, err
    if k == 1:
        if abs(sc) < 1e-12:
            raise StripViolation("pole at s = 0")
        out = -_gamma_c(sc + 2.0) / sc
        return (out if isinstance(s, complex) else out.real), "closed-form", 1e-14
    r = model.r
    if r ** (k - 1) <= _SUBSET_CAP:
        out = _mellin_subsets(model, k, sc)
        return (out if isinstance(s, complex) else out.real), "closed-form", 1e-11
    if not -2.0 < sc.real < 0.0:
        raise StripViolation(f"Re s = {sc.real} outside (-2, 0)")

    def fr(u):
        if abs(u) > 600.0 / max(1.0, abs(sc.real)):
            return 0.0
        x = math.exp(u)
        val = float(mean_kernel(model, k, np.array([x]))[0])
        return val * (np.exp(sc * u)).real

    def fi(u):
        if abs(u) > 600.0 / max(1.0, abs(sc.real)):
            return 0.0
        x = math.exp(u)
        val = float(mean_kernel(model, k, np.array([x]))[0])
        return val * (np.exp(sc * u)).imag

    total = 0j
    err = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        for lo, hi in ((-np.inf, 0.0), (0.0, np.inf)):
            vr, er = integrate.quad(fr, lo, hi, epsabs=tol / 4.0, limit=300)
            vi, ei = integrate.quad(fi, lo, hi, epsabs=tol / 4.0, limit=300)
            total += vr + 1j * vi
            err += er + ei
    return (total if isinstance(s, complex) else total.real), "quadrature", err


def _mellin_subsets(model: ProbModel, k: int, sc: complex) -> complex:
    """Inclusion-exclusion MfE(s) with the s = -1 singular pair combined."""
    r = model.r
    ps = [model.prefix_prob(w) for w in _iproduct(range(r), repeat=k - 1)]
    prods = np.array([1.0])
    sums = np.array([0.0])
    pcs = np.array([0], dtype=np.int64)
    for p in ps:
        prods = np.concatenate([prods, prods * p])
        sums = np.concatenate([sums, sums + p])
        pcs = np.concatenate([pcs, pcs + 1])
    mask = pcs >= 2
    signs = np.where(pcs[mask] % 2 == 0, 1.0, -1.0)
    g = np.sum(signs * prods[mask] * sums[mask] ** (-pcs[mask] - sc)
               * _gamma_c(pcs[mask] + sc))
    # the |S| = 1 terms and -Gamma(s) combine into a form regular at s = -1
    u = sc + 1.0
    rr = rho(model, -sc)
    h = sc * rr ** (k - 1)
    if abs(u) > 1e-4:
        ratio = (h + 1.0) / u
    else:
        H = entropy(model)
        rho2 = sum(p * math.log(p) ** 2 for p in model.probs)
        d1 = 1.0 - (k - 1) * H
        d2 = 2.0 * (k - 1) * H - (k - 1) * (k - 2) * H ** 2 - (k - 1) * rho2
        ratio = d1 + u * d2 / 2.0
    head = -_gamma_c(sc + 2.0) / sc * ratio
    return head + g


# -- the table -------------------------------------------------------------------------


def table(r: int, kmax: int):
    """Rows (k, MfE(-1), MfE(-1)/(1+ln r)) for the symmetric r-ary trie."""
    if r < 2 or kmax < 1:
        raise ValueError("need r >= 2, kmax >= 1")
    denom = 1.0 + math.log(r)
    rows = []
    for k in range(1, kmax + 1):
        c = symmetric_constant(r, k)
        rows.append((k, c, c / denom))
    return rows
