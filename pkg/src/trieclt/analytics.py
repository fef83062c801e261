"""Exact and numeric asymptotics for additive functionals of random tries.

For a toll phi with chi = phi(dot), the Poisson-model first and second
moments are governed by three kernels of the shifted toll phi - chi*phi0
(phi0 = leaf indicator):

    mean kernel   m(lam) = E phi'(T_lam)
    cov kernel    c(lam) = Cov(phi'(T_lam), N_lam) = lam * m'(lam)
    var kernel    v(lam) = star-sum over prefixes of fringe covariances

Their Mellin transforms at s = -1 (or, for periodic letter distributions,
along the line -1 + 2*pi*i*Z/d) give the asymptotic mean, variance, and
covariance-with-N per string, scaled by the entropy H.  This module holds
the closed forms for every built-in toll, quadrature and series fallbacks,
the periodic psi evaluators, and the derived quantities: fringe-tree
distribution limits, conditional fluctuation variances, size/fringe
covariances, bucket constants, and generic harmonic sums.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.integrate import IntegrationWarning
from scipy.special import gamma as _sp_gamma
from scipy.special import gammainc, gammaln, loggamma

from . import protected_nodes as _prot
from .errors import (EkUnavailable, NoMethodAvailable, QuadratureNotConverged,
                     StripViolation, TruncationNotConverged)
from .model import ProbModel, entropy, rho, span
from .prefixes import harmonic_sum, layer, layers_to_subunit, sum_over_prefixes
from .tolls import Toll, eval_additive
from .trie import Trie

_EULER = 0.5772156649015328606


@dataclass
class AnalyticReport:
    """One computed quantity with provenance and an error estimate."""

    quantity: str
    args: dict
    value: object
    method: str
    err_estimate: float = 0.0

    def to_dict(self) -> dict:
        v = self.value
        if isinstance(v, complex):
            v = {"re": v.real, "im": v.imag}
        return {"quantity": self.quantity, "args": self.args, "value": v,
                "method": self.method, "err_estimate": self.err_estimate}


def gamma_c(s):
    """Gamma for real or complex arguments via the log-gamma branch."""
    if np.isrealobj(s) and not isinstance(s, complex):
        return _sp_gamma(s)
    return np.exp(loggamma(s))


def _cexpm1(z):
    """exp(z) - 1 accurate near 0 for complex arrays (np.expm1 is real-only)."""
    z = np.asarray(z)
    if not np.iscomplexobj(z):
        return np.expm1(z)
    small = np.abs(z) < 1e-4
    direct = np.exp(z) - 1.0
    series = z * (1.0 + z / 2.0 * (1.0 + z / 3.0 * (1.0 + z / 4.0)))
    return np.where(small, series, direct)


def _rho2(model: ProbModel) -> float:
    return sum(p * math.log(p) ** 2 for p in model.probs)


def gamma_rho_limit(model: ProbModel, s):
    """(rho(-s) - 1) * Gamma(s+1) with its removable singularity at s = -1."""
    u = complex(s) + 1.0
    if abs(u) < 1e-6:
        H = entropy(model)
        val = H + u * (_rho2(model) / 2.0 - _EULER * H)
        return val if isinstance(s, complex) else val.real
    out = (rho(model, -complex(s)) - 1.0) * gamma_c(complex(s) + 1.0)
    return out if isinstance(s, complex) else out.real


# -- kernel descriptors per toll ---------------------------------------------------


class _Kernels:
    """Closed-form kernels of the shifted (chi = 0) toll, where known."""

    strip = (-2.0, 0.0)
    has_var = False
    needs_model_mean = False

    def mean(self, model, lam):
        raise NoMethodAvailable("no closed mean kernel")

    def dmean(self, model, lam):
        raise NoMethodAvailable("no closed mean-kernel derivative")

    def mellin_mean(self, model, s):
        raise NoMethodAvailable("no closed Mellin transform")

    def mellin_var(self, model, s, tol=1e-10):
        raise NoMethodAvailable("no closed variance Mellin transform")

    def var(self, model, lam, tol=1e-10):
        raise NoMethodAvailable("no closed variance kernel")

    def a_n(self, model, ns):
        raise NoMethodAvailable("no exact fixed-n toll means")


class _Zero(_Kernels):
    strip = (-math.inf, math.inf)

    def mean(self, model, lam):
        return 0.0

    def dmean(self, model, lam):
        return 0.0

    def mellin_mean(self, model, s):
        return 0.0 if not isinstance(s, complex) else 0j

    has_var = True

    def mellin_var(self, model, s, tol=1e-10):
        return (0.0, 0.0)

    def var(self, model, lam, tol=1e-10):
        return (0.0, 0.0)

    def a_n(self, model, ns):
        return np.zeros_like(np.asarray(ns, dtype=float))


class _Size(_Kernels):
    has_var = True

    def mean(self, model, lam):
        return -np.expm1(-lam) - lam * np.exp(-lam)

    def dmean(self, model, lam):
        return lam * np.exp(-lam)

    def mellin_mean(self, model, s):
        if abs(complex(s)) < 1e-300 or (isinstance(s, (int, float)) and s == 0):
            raise StripViolation("pole at s = 0")
        return -gamma_c(s + 2.0) / s

    def _var_term(self, s, P):
        # ((1+P)^(s+2) - (1+P)^2 - sP) / (1+P)^(s+2), written via expm1 so the
        # O(P) pieces cancel analytically, not in floating point (the naive
        # form loses eps*2^depth through the layer multiplicities)
        sc = complex(s)
        L = np.log1p(P)
        g = gamma_c(sc + 2.0) / sc
        h = -_cexpm1(-sc * L) - sc * P * np.exp(-(sc + 2.0) * L)
        return g * h

    def mellin_var(self, model, s, tol=1e-10):
        if abs(complex(s)) < 1e-12:
            raise StripViolation("pole at s = 0")
        v, err = sum_over_prefixes(model, lambda P: self._var_term(s, P),
                                   tol=tol, star=True)
        return (v if isinstance(s, complex) else v.real), err

    def var(self, model, lam, tol=1e-10):
        pref = (1.0 + lam) * math.exp(-lam)
        if pref == 0.0:
            return 0.0, 0.0
        v, err = sum_over_prefixes(model, lambda P: self.mean(model, P * lam),
                                   tol=tol / max(pref, 1e-300), star=True,
                                   min_layers=layers_to_subunit(model, lam))
        return pref * v.real, pref * err

    def a_n(self, model, ns):
        return (np.asarray(ns) >= 2).astype(float)


class _FringeK(_Kernels):
    has_var = True

    def __init__(self, k):
        self.k = k
        self.strip = (-float(k), 0.0)

    def mean(self, model, lam):
        k = self.k
        with np.errstate(divide="ignore"):
            return np.exp(k * np.log(lam) - lam - gammaln(k + 1))

    def dmean(self, model, lam):
        k = self.k
        return (k - lam) * np.exp((k - 1) * np.log(lam) - lam - gammaln(k + 1))

    def mellin_mean(self, model, s):
        return gamma_c(s + self.k) / math.factorial(self.k)

    def _star_pk(self, model):
        rk = float(rho(model, self.k))
        return (1.0 + rk) / (1.0 - rk)

    def mellin_var(self, model, s, tol=1e-10):
        k = self.k
        t1 = gamma_c(complex(s) + k) / math.factorial(k) * self._star_pk(model)
        g2 = gamma_c(complex(s) + 2 * k) / math.factorial(k) ** 2
        v, err = sum_over_prefixes(
            model, lambda P: P ** k / (1.0 + P) ** (complex(s) + 2 * k),
            tol=tol, star=True)
        out = t1 - g2 * v
        return (out if isinstance(s, complex) else out.real), abs(g2) * err

    def var(self, model, lam, tol=1e-10):
        k = self.k
        me = self.mean(model, lam)
        if me == 0.0:
            return 0.0, 0.0
        v, err = sum_over_prefixes(
            model, lambda P: P ** k - self.mean(model, P * lam),
            tol=tol / max(me, 1e-300), star=True,
            min_layers=layers_to_subunit(model, lam))
        return me * v.real, me * err

    def a_n(self, model, ns):
        return (np.asarray(ns) == self.k).astype(float)


class _FringeGeK(_Kernels):
    def __init__(self, k):
        self.k = k
        self.strip = (-float(k), 0.0)

    def mean(self, model, lam):
        return gammainc(self.k, lam)

    def dmean(self, model, lam):
        k = self.k
        return np.exp((k - 1) * np.log(lam) - lam - gammaln(k))

    def mellin_mean(self, model, s):
        if abs(complex(s)) < 1e-300 or (isinstance(s, (int, float)) and s == 0):
            raise StripViolation("pole at s = 0")
        return -gamma_c(s + self.k) / (math.factorial(self.k - 1) * s)

    def a_n(self, model, ns):
        return (np.asarray(ns) >= self.k).astype(float)


class _Match(_Kernels):
    has_var = True
    needs_model_mean = True

    def __init__(self, target):
        self.target = target
        self.k = target.external_count
        self.strip = (-float(self.k), 0.0)
        self._pT = None

    def p_target(self, model):
        if self._pT is None:
            self._pT = match_probability(model, self.target)
        return self._pT

    def mean(self, model, lam):
        k = self.k
        return self.p_target(model) * np.exp(k * np.log(lam) - lam - gammaln(k + 1))

    def dmean(self, model, lam):
        k = self.k
        return self.p_target(model) * (k - lam) * np.exp(
            (k - 1) * np.log(lam) - lam - gammaln(k + 1))

    def mellin_mean(self, model, s):
        return self.p_target(model) * gamma_c(s + self.k) / math.factorial(self.k)

    def mellin_var(self, model, s, tol=1e-10):
        k = self.k
        pT = self.p_target(model)
        t1 = pT * gamma_c(complex(s) + k) / math.factorial(k)
        g2 = pT ** 2 * gamma_c(complex(s) + 2 * k) / math.factorial(k) ** 2
        v, err = sum_over_prefixes(
            model, lambda P: P ** k / (1.0 + P) ** (complex(s) + 2 * k),
            tol=tol, star=True)
        out = t1 - g2 * v
        return (out if isinstance(s, complex) else out.real), abs(g2) * err

    def var(self, model, lam, tol=1e-10):
        me = float(self.mean(model, lam))
        if me == 0.0:
            return 0.0, 0.0
        s, err = sum_over_prefixes(
            model, lambda P: self.mean(model, P * lam),
            tol=tol / max(me, 1e-300), star=True,
            min_layers=layers_to_subunit(model, lam))
        return me * (1.0 - s.real), me * err

    def a_n(self, model, ns):
        return np.where(np.asarray(ns) == self.k, self.p_target(model), 0.0)


class _Protected(_Kernels):
    needs_model_mean = True

    def __init__(self, k):
        self.k = k

    def mean(self, model, lam):
        return _prot.mean_kernel(model, self.k, lam)

    def dmean(self, model, lam):
        return _prot.dmean_kernel(model, self.k, lam)

    def mellin_mean(self, model, s):
        return _prot.mellin(model, self.k, s)


class _Bucket(_Kernels):
    needs_model_mean = True
    strip = (-2.0, math.inf)

    def __init__(self, b, k):
        self.b = b
        self.k = k

    def mean(self, model, lam):
        b, k = self.b, self.k
        lam = np.asarray(lam, dtype=float)
        out = np.zeros_like(lam)
        for p in model.probs:
            tail = 1.0 - _poisson_cdf(b - k, (1.0 - p) * lam)
            out = out + tail * np.exp(k * np.log(p * lam) - p * lam - gammaln(k + 1))
        return out if out.shape else float(out)

    def dmean(self, model, lam):
        h = 1e-4 * max(1.0, abs(lam))
        return _five_point_diff(lambda x: self.mean(model, x), lam, h)

    def mellin_mean(self, model, s):
        b, k = self.b, self.k
        s = complex(s)
        if k >= 2:
            head = (rho(model, -s) - rho(model, k)) * gamma_c(s + k) / math.factorial(k)
        else:
            head = gamma_rho_limit(model, s) if abs(s + 1) < 1e-6 else \
                (rho(model, -s) - 1.0) * gamma_c(s + 1.0)
        tail = 0j
        for i in range(1, b - k + 1):
            coef = sum(p ** k * (1.0 - p) ** i for p in model.probs)
            tail += coef * gamma_c(s + k + i) / (math.factorial(k) * math.factorial(i))
        return head - tail

    def a_n(self, model, ns):
        ns = np.asarray(ns)
        b, k = self.b, self.k
        out = np.zeros(ns.shape, dtype=float)
        big = ns > b
        for p in model.probs:
            with np.errstate(divide="ignore", invalid="ignore"):
                logpmf = (gammaln(ns + 1.0) - gammaln(k + 1.0) - gammaln(ns - k + 1.0)
                          + k * math.log(p) + (ns - k) * math.log1p(-p))
            pmf = np.where(ns >= k, np.exp(logpmf), 0.0)
            out += np.where(big, pmf, 0.0)
        return out


class _E0(_Kernels):
    """Kernels shared by the e0 family (they differ only through chi)."""

    has_var = True
    needs_model_mean = True
    strip = (-2.0, 0.0)

    def mean(self, model, lam):
        lam = np.asarray(lam, dtype=float)
        out = -lam * np.exp(-lam)
        for p in model.probs:
            out = out + p * lam * np.exp(-p * lam)
        return out if out.shape else float(out)

    def dmean(self, model, lam):
        out = -(1.0 - lam) * np.exp(-lam)
        for p in model.probs:
            out = out + p * (1.0 - p * lam) * np.exp(-p * lam)
        return out

    def mellin_mean(self, model, s):
        return gamma_rho_limit(model, s)

    def mellin_var(self, model, s, tol=1e-10):
        # shifted-toll variance Mellin: (3+2s)*g(s) + (rho(-s)-1)(2^{-s-2}-4)Gamma(s+2)
        sc = complex(s)
        g = gamma_rho_limit(model, sc)
        rest = (rho(model, -sc) - 1.0) * (2.0 ** (-sc - 2.0) - 4.0) * gamma_c(sc + 2.0)
        out = (3.0 + 2.0 * sc) * g + rest
        return (out if isinstance(s, complex) else out.real), 1e-14

    def var(self, model, lam, tol=1e-10):
        # shifted toll = e0 - leaf; from the closed Poisson computation
        out = -(lam - 2.0 * lam ** 2) * math.exp(-lam) - lam ** 2 * math.exp(-2.0 * lam)
        for p in model.probs:
            out += (p * lam - 2.0 * (p * lam) ** 2) * math.exp(-p * lam)
            out += (p * lam) ** 2 * math.exp(-2.0 * p * lam)
        return out, 1e-14

    def a_n(self, model, ns):
        ns = np.asarray(ns, dtype=float)
        out = np.zeros_like(ns)
        for p in model.probs:
            out += ns * p * np.exp((ns - 1.0) * math.log1p(-p))
        return out


def _poisson_cdf(m: int, lam):
    """P(Po(lam) <= m) for integer m >= 0 (0 when m < 0)."""
    if m < 0:
        return np.zeros_like(np.asarray(lam, dtype=float))
    return 1.0 - gammainc(m + 1, lam)


def _five_point_diff(f, x, h):
    return (f(x - 2 * h) - 8 * f(x - h) + 8 * f(x + h) - f(x + 2 * h)) / (12 * h)


def match_probability(model: ProbModel, target: Trie) -> float:
    """P(the trie of |T'|_e i.i.d. strings equals T'), exactly."""
    if target.is_empty:
        raise ValueError("target must be nonempty")

    def rec(t: Trie) -> float:
        k = t.nu(())
        if k == 1:
            return 1.0
        out = float(math.factorial(k))
        for c in t.children(()):
            kc = t.nu(c)
            out *= model.probs[c[0]] ** kc / math.factorial(kc)
            out *= rec(t.fringe(c))
        return out

    return rec(target)


def _kernels(toll: Toll) -> _Kernels:
    kind = toll.kind
    if kind == "leaf" or (kind == "fringe_k" and toll.k == 1):
        return _Zero()
    if kind == "fringe_match" and len(toll.target) == 1:
        return _Zero()
    if kind == "size" or (kind == "fringe_ge_k" and toll.k == 1):
        return _Size()
    if kind == "fringe_k":
        return _FringeK(toll.k)
    if kind == "fringe_ge_k":
        return _FringeGeK(toll.k)
    if kind == "fringe_match":
        return _Match(toll.target)
    if kind == "kprot":
        return _Protected(toll.k)
    if kind == "bucket":
        return _Bucket(toll.b, toll.k)
    if kind in ("e0", "e0_1", "e0_2"):
        return _E0()
    raise NoMethodAvailable(f"no analytic kernels for toll kind {kind!r}")


# -- kernels: public evaluation -----------------------------------------------------


def mean_kernel(toll: Toll, model: ProbModel, lam: float,
                a_n=None, n_cap: int = 2_000_000) -> float:
    """m(lam) = E phi(T_lam) - chi*lam*e^(-lam); closed form or (l000) series."""
    try:
        return float(_kernels(toll).mean(model, lam))
    except NoMethodAvailable:
        pass
    if a_n is None:
        raise NoMethodAvailable(
            f"toll {toll} has no closed mean kernel; supply a_n")
    return _series_mean(a_n, lam, n_cap)


def _series_mean(a_n, lam: float, n_cap: int) -> float:
    n_max = int(lam + 12.0 * math.sqrt(lam + 1.0)) + 25
    if n_max > n_cap:
        raise TruncationNotConverged(f"series needs {n_max} terms > cap {n_cap}")
    ns = np.arange(2, n_max + 1)
    an = np.asarray(a_n(ns), dtype=float)
    logw = ns * math.log(lam) - lam - gammaln(ns + 1.0)
    return float(np.sum(an * np.exp(logw)))


def dmean_kernel(toll: Toll, model: ProbModel, lam: float) -> float:
    """m'(lam); analytic when closed, else five-point central difference."""
    ker = _kernels(toll)
    try:
        return float(ker.dmean(model, lam))
    except NoMethodAvailable:
        h = 1e-4 * max(1.0, abs(lam))
        return float(_five_point_diff(lambda x: ker.mean(model, x), lam, h))


def cov_kernel(toll: Toll, model: ProbModel, lam: float) -> float:
    """c(lam) = lam * m'(lam) (the covariance kernel with N_lam)."""
    return lam * dmean_kernel(toll, model, lam)


def var_kernel(toll: Toll, model: ProbModel, lam: float, tol: float = 1e-10):
    """v(lam) for the full toll: shifted kernel + 2*chi*c(lam).  (value, err)."""
    ker = _kernels(toll)
    v, err = ker.var(model, lam, tol=tol)
    if toll.chi:
        v += 2.0 * toll.chi * cov_kernel(toll, model, lam)
    return v, err


def exact_a_n(toll: Toll, model: ProbModel, ns) -> np.ndarray:
    """E phi(T_n) for n >= 2 (exact closed values where known)."""
    return np.asarray(_kernels(toll).a_n(model, np.asarray(ns)), dtype=float)


# -- Mellin transforms ---------------------------------------------------------------


def mellin_by_quadrature(fn, s, strip=(-2.0, 0.0), tol: float = 1e-9):
    """integral_0^inf fn(x) x^{s-1} dx, split at 1 with x = e^u on both sides.

    Returns (value, achieved_error); raises StripViolation / QuadratureNotConverged.
    """
    sc = complex(s)
    if not strip[0] < sc.real < strip[1]:
        raise StripViolation(f"Re s = {sc.real} outside strip {strip}")
    u_cap = 600.0 / max(1.0, abs(sc.real))

    def integrand(u):
        if abs(u) > u_cap:
            return 0j
        return fn(math.exp(u)) * np.exp(sc * u)

    total = 0j
    err = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        for lo, hi in ((-np.inf, 0.0), (0.0, np.inf)):
            vr, er = integrate.quad(lambda u: integrand(u).real, lo, hi,
                                    epsabs=tol / 4.0, limit=200)
            vi, ei = integrate.quad(lambda u: integrand(u).imag, lo, hi,
                                    epsabs=tol / 4.0, limit=200)
            total += vr + 1j * vi
            err += er + ei
    if err > 1000.0 * tol:
        raise QuadratureNotConverged(f"achieved {err:.2e} > requested {tol:.2e}",
                                     achieved=err)
    return (total if isinstance(s, complex) else total.real), err


def mellin_mean(toll: Toll, model: ProbModel, s, method: str = "auto",
                tol: float = 1e-9, a_n=None, n_terms: int = 200_000):
    """Mellin transform of the mean kernel.  Returns (value, method, err)."""
    ker = _kernels(toll) if toll.kind not in ("log_subtrees", "log_size", "custom") \
        else None
    if method in ("auto", "closed") and ker is not None:
        try:
            if toll.kind == "kprot":
                val, how, err = _prot.mellin_with_method(model, toll.k, s, tol=tol)
                return val, how, err
            return ker.mellin_mean(model, s), "closed-form", 1e-14
        except NoMethodAvailable:
            if method == "closed":
                raise
    if method in ("auto", "quadrature") and ker is not None:
        val, err = mellin_by_quadrature(lambda x: ker.mean(model, x), s,
                                        strip=ker.strip, tol=tol)
        return val, "quadrature", err
    if method in ("auto", "series"):
        fn = a_n if a_n is not None else (
            (lambda ns: exact_a_n(toll, model, ns)) if ker is not None else None)
        if fn is None:
            raise NoMethodAvailable(f"no Mellin route for toll {toll}")
        val, err = mellin_mean_series(fn, s, n_terms=n_terms)
        return val, "series", err
    raise NoMethodAvailable(f"no Mellin route for toll {toll} via {method!r}")


def mellin_mean_series(a_n, s, n_terms: int = 200_000, sup_a: float = 1.0):
    """sum_{n>=2} Gamma(n+s)/n! * a_n, truncated at n_terms.

    The tail of the truncation is O(sup|a_n| * n_terms^{Re s}/|Re s|), which is
    returned as the error estimate; valid for -2 < Re s < 0.
    """
    sc = complex(s)
    if not -2.0 < sc.real < 0.0:
        raise StripViolation(f"series formula needs -2 < Re s < 0, got {sc.real}")
    ns = np.arange(2, n_terms + 1)
    an = np.asarray(a_n(ns), dtype=float)
    if sc == -1.0:
        w = 1.0 / ((ns - 1.0) * ns)
        val = complex(np.sum(an * w))
    else:
        logw = loggamma(ns + sc) - gammaln(ns + 1.0)
        val = complex(np.sum(an * np.exp(logw)))
    err = sup_a * n_terms ** sc.real / abs(sc.real)
    return (val if isinstance(s, complex) else val.real), err


def mellin_cov(toll: Toll, model: ProbModel, s, **kw):
    """Mellin transform of the covariance kernel: -s * MfE(s)."""
    val, how, err = mellin_mean(toll, model, s, **kw)
    sc = complex(s)
    out = -sc * complex(val)
    return (out if isinstance(s, complex) else out.real), how, abs(sc) * err


def mellin_var(toll: Toll, model: ProbModel, s, tol: float = 1e-10):
    """Mellin transform of the full variance kernel.  Returns (value, err)."""
    ker = _kernels(toll)
    v, err = ker.mellin_var(model, s, tol=tol)
    if toll.chi:
        mm = ker.mellin_mean(model, s)
        v = v - 2.0 * toll.chi * complex(s) * complex(mm)
        if not isinstance(s, complex):
            v = v.real
    return v, err


# -- psi functions ------------------------------------------------------------------


_WHICH = ("mean", "var", "cov")


def _mellin_which(toll, model, which, s, tol=1e-10):
    if which == "mean":
        v, _, err = mellin_mean(toll, model, s, tol=tol)
        return v, err
    if which == "cov":
        v, _, err = mellin_cov(toll, model, s, tol=tol)
        return v, err
    if which == "var":
        return mellin_var(toll, model, s, tol=tol)
    raise ValueError(f"which must be one of {_WHICH}")


def _kernel_which(toll, model, which, lam, tol=1e-10):
    if which == "mean":
        return mean_kernel(toll, model, lam), 0.0
    if which == "cov":
        return cov_kernel(toll, model, lam), 0.0
    if which == "var":
        return var_kernel(toll, model, lam, tol=tol)
    raise ValueError(f"which must be one of {_WHICH}")


def psi_fourier_coef(toll: Toll, model: ProbModel, which: str, m: int):
    """psi-hat(m) = MfX(-1 - 2*pi*i*m/d) for a periodic model."""
    d = span(model)
    if d == 0.0:
        raise ValueError("Fourier coefficients need a periodic model (span > 0)")
    s = complex(-1.0, -2.0 * math.pi * m / d)
    v, err = _mellin_which(toll, model, which, s)
    return complex(v), err


def psi_value(toll: Toll, model: ProbModel, which: str, t: float,
              method: str = "auto", tol: float = 1e-10, m_cap: int = 64):
    """psi_X(t): constant MfX(-1) when the span is 0, else the d-periodic
    oscillation evaluated by its Fourier series (default) or by the
    exponential-grid sum over the mean/var/cov kernel.

    Returns (value, method, err).
    """
    d = span(model)
    if d == 0.0:
        v, err = _mellin_which(toll, model, which, -1.0)
        return float(np.real(v)), "constant", err
    if method in ("auto", "fourier"):
        c0, err0 = _mellin_which(toll, model, which, complex(-1.0, 0.0))
        total = complex(c0)
        err = err0
        scale = 1e-15 * (1.0 + abs(c0))
        small = 0
        for m in range(1, m_cap + 1):
            cm, em = psi_fourier_coef(toll, model, which, m)
            phase = np.exp(2j * math.pi * m * t / d)
            total += cm * phase + np.conj(cm) * np.conj(phase)
            err += 2 * em
            if abs(cm) < scale:
                small += 1
                if small >= 2:
                    break
            else:
                small = 0
        return float(total.real), "fourier", err + abs(total.imag)
    if method == "sum":
        return _psi_by_sum(toll, model, which, t, d, tol=tol)
    raise ValueError(f"unknown psi method {method!r}")


def _psi_by_sum(toll, model, which, t, d, tol=1e-12, term_tol=1e-14):
    total = 0.0
    err = 0.0
    k0 = math.ceil(t / d)
    for direction in (1, -1):
        k = k0 if direction == 1 else k0 - 1
        small = 0
        steps = 0
        while small < 3:
            x = math.exp(t - k * d)
            if x < 1e-300 or x > 1e300:
                break
            # the term is d*v/x: the kernel's absolute error budget must
            # shrink with x or it dominates the small-x side of the sum
            v, e = _kernel_which(toll, model, which, x,
                                 tol=max(1e-18, term_tol * x))
            term = d * math.exp(k * d - t) * v
            total += term
            err += d * math.exp(k * d - t) * e
            small = small + 1 if abs(term) < term_tol else 0
            k += direction
            steps += 1
            if steps > 5000:
                raise TruncationNotConverged("psi kernel sum did not decay")
    return total, "sum", err + 10 * term_tol


# -- asymptotic moments ---------------------------------------------------------------


def asym_mean(toll: Toll, model: ProbModel, x: float, mode: str = "poisson") -> float:
    """E Phi over a trie with ~x strings: x * (chi + psi_E(ln x)/H)."""
    if mode not in ("poisson", "fixed"):
        raise ValueError("mode must be poisson or fixed")
    H = entropy(model)
    pe, _, _ = psi_value(toll, model, "mean", math.log(x))
    return x * (toll.chi + pe / H)


def asym_var(toll: Toll, model: ProbModel, x: float, mode: str = "poisson") -> float:
    """Asymptotic variance per string: Poisson chi^2 + psi_V/H; fixed-n
    psi_V/H - psi_C^2/H^2 - 2*chi*psi_C/H."""
    H = entropy(model)
    t = math.log(x)
    pv, _, _ = psi_value(toll, model, "var", t)
    if mode == "poisson":
        return toll.chi ** 2 + pv / H
    if mode != "fixed":
        raise ValueError("mode must be poisson or fixed")
    pc, _, _ = psi_value(toll, model, "cov", t)
    return pv / H - pc ** 2 / H ** 2 - 2.0 * toll.chi * pc / H


def exact_poisson_mean(toll: Toll, model: ProbModel, lam: float,
                       tol: float = 1e-9):
    """E Phi(T_lam) = chi*lam + sum over prefixes of m(lam * P(alpha)).

    Exact up to the reported truncation error.
    """
    ker = _kernels(toll)
    v, err = sum_over_prefixes(model, lambda P: ker.mean(model, lam * P), tol=tol,
                               min_layers=layers_to_subunit(model, lam))
    return toll.chi * lam + v.real, err


def eval_F_sum(f, model: ProbModel, lam: float, tol: float = 1e-9):
    """Generic harmonic sum F(lam) = sum over alpha of f(lam * P(alpha))."""
    return harmonic_sum(model, f, lam, tol=tol)


# -- E_k = E|T_k|_i -------------------------------------------------------------------


_EK_EXACT_LIMIT = 30
_ek_cache: dict = {}


def expected_internal_nodes(model: ProbModel, k: int, mc=None) -> float:
    """E of the internal-node count of the trie on k strings.

    Exact multinomial-split recursion for k <= 30; beyond that a Monte Carlo
    oracle (trials, seed) must be supplied.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if k <= 1:
        return 0.0
    if k > _EK_EXACT_LIMIT:
        if mc is None:
            raise EkUnavailable(
                f"k={k} beyond exact recursion limit {_EK_EXACT_LIMIT}; "
                "pass mc=(trials, seed)")
        from .montecarlo import mc_internal_nodes
        return mc_internal_nodes(model, k, *mc)
    key = (model.probs, k)
    if key in _ek_cache:
        return _ek_cache[key]
    E = [0.0] * (k + 1)
    for j in range(2, k + 1):
        acc = 1.0
        for p in model.probs:
            for i in range(2, j):
                acc += math.comb(j, i) * p ** i * (1.0 - p) ** (j - i) * E[i]
        E[j] = acc / (1.0 - float(rho(model, j)))
        _ek_cache[(model.probs, j)] = E[j]
    return E[k]


# -- size/fringe covariance and fringe distribution ------------------------------------


def size_fringe_cov_mellin(model: ProbModel, k: int, s, Ek=None,
                           tol: float = 1e-10):
    """Mellin transform of the covariance kernel between the k-leaf fringe
    count and the internal-node count.  Returns (value, err)."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if Ek is None:
        Ek = expected_internal_nodes(model, k)
    sc = complex(s)
    e = sc + k + 1.0

    def t1(P):
        # (1 - (1+P)^(-e)) - e*P*(1+P)^(-e), with the O(P) cancellation done
        # analytically (cf. the same rewrite in the size variance kernel)
        L = np.log1p(P)
        return -_cexpm1(-e * L) - e * P * np.exp(-e * L)

    def t2(P):
        return (e + P) * P ** k / (1.0 + P) ** e

    s1, e1 = sum_over_prefixes(model, t1, tol=tol)
    s2, e2 = sum_over_prefixes(model, t2, tol=tol, include_empty=False)
    pre = gamma_c(sc + k) / math.factorial(k)
    out = pre * (Ek - s1 + s2)
    return (out if isinstance(s, complex) else out.real), abs(pre) * (e1 + e2)


def size_fringe_cov(model: ProbModel, k: int, t: float | None = None,
                    Ek=None) -> float:
    """Asymptotic covariance per string between the k-leaf fringe count and
    the size, for the fixed-n model."""
    H = entropy(model)
    d = span(model)
    if d == 0.0:
        mv, _ = size_fringe_cov_mellin(model, k, -1.0, Ek=Ek)
        return mv / H - (1.0 / (k * (k - 1.0))) / H ** 2
    if t is None:
        raise ValueError("periodic model: supply t = ln n")
    pv = _psi_from_mellin(lambda s: size_fringe_cov_mellin(model, k, s, Ek=Ek)[0],
                          d, t)
    pck = psi_value(Toll("fringe_k", k=k, label=f"fringe-k={k}"), model, "cov", t)[0]
    pcs = psi_value(Toll("size", label="size"), model, "cov", t)[0]
    return pv / H - pck * pcs / H ** 2


def _psi_from_mellin(mfn, d, t, m_cap=64):
    total = complex(mfn(complex(-1.0, 0.0)))
    scale = 1e-15 * (1.0 + abs(total))
    small = 0
    for m in range(1, m_cap + 1):
        cm = complex(mfn(complex(-1.0, -2.0 * math.pi * m / d)))
        phase = np.exp(2j * math.pi * m * t / d)
        total += cm * phase + np.conj(cm) * np.conj(phase)
        if abs(cm) < scale:
            small += 1
            if small >= 2:
                break
        else:
            small = 0
    return total.real


def _psi1_values(model, t):
    """The k = 1 conventions: psi_E1 = psi_C1 = psi_V1 = H, psi_V1s = psi_C_size."""
    H = entropy(model)
    pcs = psi_value(Toll("size", label="size"), model, "cov", t)[0] \
        if span(model) > 0 else 1.0
    return H, H, H, pcs


def fringe_dist(model: ProbModel, k: int | None = None, target: Trie | None = None,
                n: float | None = None) -> float:
    """Limit of the fraction of fringe trees with k leaves (or equal to a
    fixed trie).  Aperiodic models give constants; periodic models need n."""
    if (k is None) == (target is None):
        raise ValueError("give exactly one of k or target")
    pT = 1.0
    if target is not None:
        k = target.external_count
        if k >= 2:
            pT = match_probability(model, target)
    H = entropy(model)
    d = span(model)
    if d == 0.0:
        if k == 1:
            return H / (1.0 + H)
        return pT / ((1.0 + H) * k * (k - 1.0))
    if n is None:
        raise ValueError("periodic model: supply n")
    t = math.log(n)
    pes = psi_value(Toll("size", label="size"), model, "mean", t)[0]
    if k == 1:
        return H / (pes + H)
    pek = psi_value(Toll("fringe_k", k=k, label=f"fringe-k={k}"), model, "mean", t)[0]
    return pT * pek / (pes + H)


def fluct_var_from_psi(H, psiE_k, psiV_k, psiC_k, psiE_sig, psiV_sig, psiC_sig,
                       psiV_cross) -> float:
    """Quadratic form for the variance of n^(1/2)(Phi_k/|T| - a_kn)."""
    e0 = psiE_sig + H
    part1 = (H / e0 ** 2) * (psiV_k - 2.0 * (psiE_k / e0) * psiV_cross
                             + (psiE_k / e0) ** 2 * psiV_sig)
    part2 = (e0 * psiC_k - psiE_k * psiC_sig) ** 2 / e0 ** 4
    return part1 - part2


def fringe_fluct_var(model: ProbModel, k: int, n: float | None = None) -> float:
    """Asymptotic variance of the normalized fluctuation of the fraction of
    k-leaf fringe trees around its mean."""
    if k < 1:
        raise ValueError("k must be >= 1")
    H = entropy(model)
    d = span(model)
    size_t = Toll("size", label="size")
    if d == 0.0:
        mv_sig, _ = mellin_var(size_t, model, -1.0)
        if k == 1:
            return (H ** 3 * mv_sig - H ** 2) / (1.0 + H) ** 4
        kt = Toll("fringe_k", k=k, label=f"fringe-k={k}")
        mv_k, _ = mellin_var(kt, model, -1.0)
        mv_ks, _ = size_fringe_cov_mellin(model, k, -1.0)
        kk = k * (k - 1.0)
        return (H / (1.0 + H) ** 4) * ((1.0 + H) ** 2 * mv_k
                                       - 2.0 * (1.0 + H) / kk * mv_ks
                                       + (mv_sig - H) / kk ** 2)
    if n is None:
        raise ValueError("periodic model: supply n")
    t = math.log(n)
    pes = psi_value(size_t, model, "mean", t)[0]
    pvs = psi_value(size_t, model, "var", t)[0]
    pcs = psi_value(size_t, model, "cov", t)[0]
    if k == 1:
        pek, pvk, pck, pv_cross = _psi1_values(model, t)
    else:
        kt = Toll("fringe_k", k=k, label=f"fringe-k={k}")
        pek = psi_value(kt, model, "mean", t)[0]
        pvk = psi_value(kt, model, "var", t)[0]
        pck = psi_value(kt, model, "cov", t)[0]
        pv_cross = _psi_from_mellin(
            lambda s: size_fringe_cov_mellin(model, k, s)[0], d, t)
    return fluct_var_from_psi(H, pek, pvk, pck, pes, pvs, pcs, pv_cross)


# -- bucket trie constants ---------------------------------------------------------------


def bucket_internal_constant(b: int) -> float:
    """MfE(-1) for the internal-node count of a b-trie: 1/b."""
    if b < 1:
        raise ValueError("b must be >= 1")
    return 1.0 / b


def bucket_constant(model: ProbModel, b: int, k: int) -> float:
    """MfE(-1) for the count of buckets holding exactly k of b strings."""
    if not 1 <= k <= b:
        raise ValueError("need 1 <= k <= b")
    ker = _Bucket(b, k)
    return float(np.real(ker.mellin_mean(model, -1.0 + 0j)))


# -- the CLI-facing report dispatcher ------------------------------------------------------


def report(quantity: str, toll: Toll | None = None, model: ProbModel | None = None,
           **params) -> AnalyticReport:
    """Evaluate a tagged analytic quantity; the single entry point the CLI uses."""
    args = {k: v for k, v in params.items() if v is not None}
    if toll is not None:
        args["toll"] = str(toll)
    if model is not None and model.label:
        args["model"] = model.label

    def rep(value, method, err=0.0):
        return AnalyticReport(quantity, args, value, method, err)

    q = quantity
    if q == "entropy":
        return rep(entropy(model), "closed-form")
    if q == "rho":
        s = params["s"]
        v = rho(model, s)
        return rep(v, "closed-form")
    if q == "span":
        return rep(span(model), "exact-gcd")
    if q == "fe":
        return rep(mean_kernel(toll, model, params["lam"]), "closed-form", 1e-14)
    if q == "fc":
        return rep(cov_kernel(toll, model, params["lam"]), "closed-form", 1e-12)
    if q == "fv":
        v, err = var_kernel(toll, model, params["lam"])
        return rep(v, "prefix-sum", err)
    if q == "mfe":
        v, how, err = mellin_mean(toll, model, params["s"],
                                  method=params.get("method", "auto"))
        return rep(v, how, err)
    if q == "mfc":
        v, how, err = mellin_cov(toll, model, params["s"])
        return rep(v, how, err)
    if q == "mfv":
        v, err = mellin_var(toll, model, params["s"])
        return rep(v, "prefix-sum", err)
    if q in ("psi-e", "psi-v", "psi-c"):
        which = {"psi-e": "mean", "psi-v": "var", "psi-c": "cov"}[q]
        v, how, err = psi_value(toll, model, which, params["t"],
                                method=params.get("method", "auto"))
        return rep(v, how, err)
    if q == "asym-mean":
        return rep(asym_mean(toll, model, params["x"],
                             params.get("mode", "poisson")), "psi", 1e-9)
    if q == "asym-var-poisson":
        return rep(asym_var(toll, model, params["x"], "poisson"), "psi", 1e-9)
    if q == "asym-var-fixed":
        return rep(asym_var(toll, model, params["x"], "fixed"), "psi", 1e-9)
    if q == "fringe-dist":
        return rep(fringe_dist(model, k=params.get("k"),
                               target=params.get("target"), n=params.get("n")),
                   "closed-form", 1e-9)
    if q == "fringe-fluct":
        return rep(fringe_fluct_var(model, params["k"], n=params.get("n")),
                   "prefix-sum", 1e-8)
    if q == "protected":
        v, how, err = _prot.constant_with_method(model, params["k"])
        return rep(v, how, err)
    if q == "protected-asym":
        return rep(_prot.asymptotic(params["r"], params["k"]), "closed-form")
    if q == "bucket":
        b = params["b"]
        if params.get("k") is None:
            return rep(bucket_internal_constant(b), "closed-form")
        return rep(bucket_constant(model, b, params["k"]), "closed-form", 1e-13)
    if q == "fsum":
        ker = _kernels(toll)
        v, err = sum_over_prefixes(
            model, lambda P: ker.mean(model, params["lam"] * P),
            tol=params.get("tol", 1e-9),
            min_layers=layers_to_subunit(model, params["lam"]))
        return rep(v.real, "harmonic-sum", err)
    raise ValueError(f"unknown quantity tag {quantity!r}")
