"""Analytic steady states for the parametric examples."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, stats

from .errors import ParamError


def log_qpoch_ratio(x, c, a):
    """``log((-x/c; 1/a)_inf / (1 + x/c))`` for ``x >= 0``.

    The ratio is ``prod_{i>=1} (1 + (x/c) a**-i)``; terms stop once the
    increment falls below double precision.
    """
    x = np.asarray(x, dtype=float)
    u = x / c
    total = np.zeros_like(u)
    q = 1.0 / a
    term = u * q
    while np.any(np.abs(term) >= 1e-16):
        total += np.log1p(term)
        term = term * q
    return total


@dataclass(frozen=True)
class ClosedForm:
    """A named steady-state law with density, CDF and quantiles."""

    family: str
    params: dict
    lo: float
    hi: float
    _dist: object = field(default=None, repr=False, compare=False)

    def pdf(self, x):
        return self._dist.pdf(x)

    def cdf(self, x):
        return self._dist.cdf(x)

    def sf(self, x):
        return self._dist.sf(x)

    def ppf(self, q):
        return self._dist.ppf(q)

    def isf(self, q):
        return self._dist.isf(q)

    def mean(self):
        return float(self._dist.mean())

    def var(self):
        return float(self._dist.var())

    def to_json(self):
        return {"family": self.family, "params": dict(self.params),
                "support": [self.lo, "inf" if self.hi == math.inf else self.hi]}


class _QPochExp:
    """Density proportional to ``exp(-r x) * ((-x/c; 1/a)_inf / (1 + x/c))**eta`` on ``[0, inf)``."""

    def __init__(self, m, a, c, eta):
        self.rate = m / (a - 1.0)
        self.a, self.c, self.eta = a, c, eta
        z, _ = integrate.quad(self._kernel, 0.0, math.inf, epsabs=0.0, epsrel=1e-13, limit=500)
        self.log_norm = math.log(z)

    def _log_kernel(self, x):
        return -self.rate * np.asarray(x, dtype=float) + self.eta * log_qpoch_ratio(x, self.c, self.a)

    def _kernel(self, x):
        return float(np.exp(self._log_kernel(x)))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x >= 0, np.exp(self._log_kernel(np.maximum(x, 0.0)) - self.log_norm), 0.0)
        return out if out.ndim else float(out)

    def _cdf1(self, x):
        if x <= 0:
            return 0.0
        val, _ = integrate.quad(self.pdf, 0.0, x, epsabs=1e-15, epsrel=1e-12, limit=500)
        return min(val, 1.0)

    def _sf1(self, x):
        if x <= 0:
            return 1.0
        val, _ = integrate.quad(self.pdf, x, math.inf, epsabs=0.0, epsrel=1e-11, limit=500)
        return min(val, 1.0)

    def cdf(self, x):
        return np.vectorize(self._cdf1, otypes=[float])(x)

    def sf(self, x):
        return np.vectorize(self._sf1, otypes=[float])(x)

    def _root(self, fn, q):
        hi = 1.0
        while fn(hi) > 0:
            hi *= 2.0
        return optimize.brentq(fn, 0.0, hi, xtol=1e-13, rtol=1e-13)

    def ppf(self, q):
        return np.vectorize(lambda p: self._root(lambda x: p - self._cdf1(x), p), otypes=[float])(q)

    def isf(self, q):
        return np.vectorize(lambda p: self._root(lambda x: self._sf1(x) - p, p), otypes=[float])(q)

    def mean(self):
        val, _ = integrate.quad(lambda x: x * self.pdf(x), 0.0, math.inf, epsrel=1e-12, limit=500)
        return val

    def var(self):
        mu = self.mean()
        val, _ = integrate.quad(lambda x: (x - mu) ** 2 * self.pdf(x), 0.0, math.inf,
                                epsrel=1e-12, limit=500)
        return val


def exponential(rate, lo=0.0):
    if not rate > 0:
        raise ParamError(f"exponential rate must be positive, got {rate}")
    return ClosedForm("Exponential", {"rate": rate}, lo, math.inf,
                      stats.expon(loc=lo, scale=1.0 / rate))


def pareto(lo, nu):
    """Pareto law with CDF ``1 - (lo/x)**nu``."""
    if not (nu > 0 and lo > 0):
        raise ParamError(f"Pareto needs lo > 0 and nu > 0, got lo={lo}, nu={nu}")
    return ClosedForm("Pareto", {"lo": lo, "nu": nu}, lo, math.inf, stats.pareto(b=nu, scale=lo))


def gaussian(mean, var):
    if not var > 0:
        raise ParamError(f"variance must be positive, got {var}")
    return ClosedForm("Gaussian", {"mean": mean, "var": var}, -math.inf, math.inf,
                      stats.norm(loc=mean, scale=math.sqrt(var)))


def qpochhammer_exp(m, a, c, eta):
    if not (m > 0 and a > 1 and c > 0 and eta >= 0):
        raise ParamError(f"need m > 0, a > 1, c > 0, eta >= 0; got m={m}, a={a}, c={c}, eta={eta}")
    return ClosedForm("QPochhammerExp", {"m": m, "a": a, "c": c, "eta": eta}, 0.0, math.inf,
                      _QPochExp(m, a, c, eta))


def analytic_steady_state(example: str, **p) -> ClosedForm:
    """Closed-form steady state for a named parametric example.

    ``A(m, a)``: exponential fertility with linear transmission.
    ``C(m, a)``: power fertility with power transmission on ``[1, inf)``.
    ``D(m, c, eta, a)``: polynomial-exponential fertility, linear transmission.
    ``E(m, var, a, b)``: Gaussian fertility with affine transmission.
    ``Endo(alpha, beta)``: relative capital in the household model.
    """
    key = example.strip().upper()
    try:
        if key == "A":
            m, a = p["m"], p["a"]
            if not (m > 0 and a > 1):
                raise ParamError("example A needs m > 0 and a > 1")
            return exponential(m / (a - 1.0))
        if key == "C":
            m, a = p["m"], p["a"]
            if not (m > 0 and a > 1):
                raise ParamError("example C needs m > 0 and a > 1")
            return pareto(1.0, m / (a - 1.0))
        if key == "D":
            return qpochhammer_exp(p["m"], p["a"], p["c"], p["eta"])
        if key == "E":
            m, var, a, b = p["m"], p.get("var", p.get("sigma2")), p["a"], p["b"]
            if not a > 1:
                raise ParamError("example E needs a > 1")
            s = b / (1.0 - a)
            return gaussian((1.0 + a) * m - a * s, var * (a * a - 1.0))
        if key == "ENDO":
            total = p["alpha"] + p["beta"]
            if not total > 1:
                raise ParamError("a Pareto steady state needs alpha + beta > 1")
            return pareto(1.0, 1.0 / (total - 1.0))
    except KeyError as exc:
        raise ParamError(f"example {example}: missing parameter {exc.args[0]!r}") from None
    raise ParamError(f"unknown example {example!r}")
