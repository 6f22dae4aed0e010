"""Scalar maps used as fertility and transmission functions.

Every family is an immutable dataclass that evaluates on scalars or numpy
arrays, exposes first and second derivatives, and inverts itself when it
is a strictly increasing map.  The last field of every family is its
``domain``, a ``(lo, hi)`` pair whose ends may be infinite.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, fields
from functools import cached_property
from typing import ClassVar, Iterable

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq
from scipy.special import ndtr

from .errors import ConfigError, DomainError, NoConvergence, NoFixedPoint

INF = math.inf
_SQRT2PI = math.sqrt(2.0 * math.pi)

# fixed points with |tau'(s) - 1| below this are reported as tangent
DELTA_CLS = 1e-8


def _as_array(x):
    return np.asarray(x, dtype=float)


def _out(x_in, y):
    """Return a float for scalar input, an array otherwise."""
    if np.ndim(x_in) == 0:
        return float(y)
    return y


def _sech(x):
    e = np.exp(-np.abs(x))
    return 2.0 * e / (1.0 + e * e)


def _domain_tol(bound):
    return 1e-12 * max(1.0, abs(bound)) if math.isfinite(bound) else 0.0


@dataclass(frozen=True)
class FunctionSpec:
    """Base class.  Subclasses implement ``_f``, ``_df`` and ``_d2f``."""

    family: ClassVar[str] = ""

    # -- evaluation -------------------------------------------------------
    def _check(self, x):
        arr = _as_array(x)
        lo, hi = self.domain
        bad = np.isnan(arr) | (arr < lo - _domain_tol(lo)) | (arr > hi + _domain_tol(hi))
        if np.any(bad):
            first = arr[bad].flat[0] if arr.ndim else float(arr)
            raise DomainError(f"{self.family}: x={first!r} outside domain [{lo}, {hi}]")
        return np.clip(arr, lo, hi)

    def __call__(self, x):
        return _out(x, self._f(self._check(x)))

    def deriv(self, x):
        return _out(x, self._df(self._check(x)))

    def deriv2(self, x):
        return _out(x, self._d2f(self._check(x)))

    def log(self, x):
        """Natural log of the value; overridden where a stable form exists."""
        with np.errstate(divide="ignore"):
            return _out(x, self._logf(self._check(x)))

    def _logf(self, x):
        return np.log(self._f(x))

    def _d2f(self, x):
        h = np.maximum(1e-5, 1e-6 * np.abs(x))
        lo, hi = self.domain
        a = np.maximum(x - h, lo)
        b = np.minimum(x + h, hi)
        return (self._df(b) - self._df(a)) / (b - a)

    # -- inversion ----------------------------------------------------------
    def inverse(self, y):
        """Solve ``f(x) = y`` for an increasing map."""
        return _out(y, self._inverse(_as_array(y)))

    def _inverse(self, y):
        return _bracketed_newton(self, y)

    # -- qualitative facts used by the condition checkers -------------------
    def limit(self, end: str):
        """Limit of the map at the ``"lo"`` or ``"hi"`` end of its domain.

        Finite ends are evaluated directly.  Infinite ends return the
        analytic tail value when the family knows it, else ``None``.
        """
        lo, hi = self.domain
        point = lo if end == "lo" else hi
        if math.isfinite(point):
            return float(self._f(np.asarray(point)))
        return self._tail(end)

    def _tail(self, end):
        return None

    def integrable(self):
        """Whether the map is integrable on its domain (``None`` if unknown)."""
        lo, hi = self.domain
        if math.isfinite(lo) and math.isfinite(hi):
            return True
        return None

    def decay_order(self):
        """``(m, M)`` with ``x**m * f(x) -> M`` at +inf, when known."""
        return None

    # -- serialization ------------------------------------------------------
    def params(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "domain"}

    def to_json(self) -> dict:
        lo, hi = self.domain
        params = {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.params().items()}
        return {"family": self.family, "params": params, "domain": [_bound_out(lo), _bound_out(hi)]}

    def with_domain(self, lo, hi):
        kwargs = self.params()
        return type(self)(**kwargs, domain=(float(lo), float(hi)))


def _bound_out(v):
    if v == INF:
        return "inf"
    if v == -INF:
        return "-inf"
    return v


def _bound_in(v):
    if isinstance(v, str):
        key = v.strip().lower()
        if key in ("inf", "+inf", "infinity"):
            return INF
        if key in ("-inf", "-infinity"):
            return -INF
        raise ConfigError(f"bad domain bound {v!r}")
    if v is None:
        raise ConfigError("domain bound may not be null")
    return float(v)


# ---------------------------------------------------------------------------
# transmission families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Affine(FunctionSpec):
    """``a*x + b``."""

    a: float
    b: float = 0.0
    domain: tuple = (-INF, INF)
    family: ClassVar[str] = "Affine"

    def _f(self, x):
        return self.a * x + self.b

    def _df(self, x):
        return np.full_like(x, float(self.a))

    def _d2f(self, x):
        return np.zeros_like(x)

    def _inverse(self, y):
        return (y - self.b) / self.a

    def _tail(self, end):
        sign = 1.0 if end == "hi" else -1.0
        return sign * math.copysign(INF, self.a) if self.a != 0 else float(self.b)


@dataclass(frozen=True)
class Power(FunctionSpec):
    """``x**a`` on ``[1, inf)``."""

    a: float
    domain: tuple = (1.0, INF)
    family: ClassVar[str] = "Power"

    def _f(self, x):
        return np.power(x, self.a)

    def _df(self, x):
        return self.a * np.power(x, self.a - 1.0)

    def _d2f(self, x):
        return self.a * (self.a - 1.0) * np.power(x, self.a - 2.0)

    def _logf(self, x):
        return self.a * np.log(x)

    def _inverse(self, y):
        if np.any(y < 0):
            raise DomainError("Power: negative argument has no real inverse")
        return np.power(y, 1.0 / self.a)

    def _tail(self, end):
        return INF if self.a > 0 else 0.0


@dataclass(frozen=True)
class TanhShift(FunctionSpec):
    """``c*x + tanh(x)``; three fixed points when ``c = 1 - tanh(L)/L``."""

    c: float
    domain: tuple = (-INF, INF)
    family: ClassVar[str] = "TanhShift"

    def _f(self, x):
        return self.c * x + np.tanh(x)

    def _df(self, x):
        return self.c + _sech(x) ** 2

    def _d2f(self, x):
        return -2.0 * np.tanh(x) * _sech(x) ** 2

    def _tail(self, end):
        return INF if end == "hi" else -INF


# ---------------------------------------------------------------------------
# fertility families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExpDecay(FunctionSpec):
    """``scale * exp(-m*x)``."""

    m: float
    scale: float = 1.0
    domain: tuple = (0.0, INF)
    family: ClassVar[str] = "ExpDecay"

    def _f(self, x):
        return self.scale * np.exp(-self.m * x)

    def _df(self, x):
        return -self.m * self._f(x)

    def _d2f(self, x):
        return self.m**2 * self._f(x)

    def _logf(self, x):
        return math.log(self.scale) - self.m * x

    def _tail(self, end):
        rate = self.m if end == "hi" else -self.m
        if rate > 0:
            return 0.0
        return float(self.scale) if rate == 0 else INF

    def integrable(self):
        lo, hi = self.domain
        if math.isfinite(lo) and math.isfinite(hi):
            return True
        if math.isfinite(lo):
            return self.m > 0
        if math.isfinite(hi):
            return self.m < 0
        return False


@dataclass(frozen=True)
class PowerDecay(FunctionSpec):
    """``scale * x**(-m)`` on a positive domain."""

    m: float
    scale: float = 1.0
    domain: tuple = (1.0, INF)
    family: ClassVar[str] = "PowerDecay"

    def __post_init__(self):
        if self.domain[0] <= 0:
            raise ConfigError("PowerDecay needs a domain inside (0, inf)")

    def _f(self, x):
        return self.scale * np.power(x, -self.m)

    def _df(self, x):
        return -self.m * self.scale * np.power(x, -self.m - 1.0)

    def _d2f(self, x):
        return self.m * (self.m + 1.0) * self.scale * np.power(x, -self.m - 2.0)

    def _logf(self, x):
        return math.log(self.scale) - self.m * np.log(x)

    def _tail(self, end):
        if self.m > 0:
            return 0.0
        return float(self.scale) if self.m == 0 else INF

    def integrable(self):
        if math.isfinite(self.domain[1]):
            return True
        return self.m > 1

    def decay_order(self):
        return (float(self.m), float(self.scale))


@dataclass(frozen=True)
class GaussBump(FunctionSpec):
    """``scale * exp(-(x - m)**2 / (2*var))``."""

    m: float
    var: float
    scale: float = 1.0
    domain: tuple = (-INF, INF)
    family: ClassVar[str] = "GaussBump"

    def __post_init__(self):
        if not self.var > 0:
            raise ConfigError("GaussBump needs var > 0")

    def _f(self, x):
        return self.scale * np.exp(-((x - self.m) ** 2) / (2.0 * self.var))

    def _df(self, x):
        return -(x - self.m) / self.var * self._f(x)

    def _d2f(self, x):
        u = (x - self.m) / self.var
        return (u * u - 1.0 / self.var) * self._f(x)

    def _logf(self, x):
        return math.log(self.scale) - (x - self.m) ** 2 / (2.0 * self.var)

    def _tail(self, end):
        return 0.0

    def integrable(self):
        return True


@dataclass(frozen=True)
class SkewGaussBump(FunctionSpec):
    """Skew-normal hump on a floor.

    ``floor + scale * exp(-z**2/2) * 2*Phi(skew*z)`` with
    ``z = (x - loc) / width``.
    """

    loc: float
    width: float
    skew: float = 0.0
    scale: float = 1.0
    floor: float = 0.0
    domain: tuple = (-INF, INF)
    family: ClassVar[str] = "SkewGaussBump"

    def __post_init__(self):
        if not self.width > 0:
            raise ConfigError("SkewGaussBump needs width > 0")

    def _parts(self, x):
        z = (x - self.loc) / self.width
        k = self.skew
        a = np.exp(-0.5 * z * z)
        b = 2.0 * ndtr(k * z)
        phi = np.exp(-0.5 * (k * z) ** 2) / _SQRT2PI
        return z, a, b, phi

    def _f(self, x):
        _, a, b, _ = self._parts(x)
        return self.floor + self.scale * a * b

    def _df(self, x):
        z, a, b, phi = self._parts(x)
        g1 = -z * a * b + a * 2.0 * self.skew * phi
        return self.scale * g1 / self.width

    def _d2f(self, x):
        z, a, b, phi = self._parts(x)
        k = self.skew
        da = -z * a
        d2a = (z * z - 1.0) * a
        db = 2.0 * k * phi
        d2b = -2.0 * k**3 * z * phi
        g2 = d2a * b + 2.0 * da * db + a * d2b
        return self.scale * g2 / self.width**2

    def _tail(self, end):
        return float(self.floor)

    def integrable(self):
        lo, hi = self.domain
        if math.isfinite(lo) and math.isfinite(hi):
            return True
        return self.floor == 0


@dataclass(frozen=True)
class PolyExp(FunctionSpec):
    """``scale * (x + c)**eta * exp(-m*x)``."""

    c: float
    eta: float
    m: float
    scale: float = 1.0
    domain: tuple = (0.0, INF)
    family: ClassVar[str] = "PolyExp"

    def __post_init__(self):
        if self.domain[0] + self.c <= 0:
            raise ConfigError("PolyExp needs x + c > 0 on the whole domain")

    def _f(self, x):
        return np.exp(self._logf(x))

    def _logf(self, x):
        return math.log(self.scale) + self.eta * np.log(x + self.c) - self.m * x

    def _df(self, x):
        return (self.eta / (x + self.c) - self.m) * self._f(x)

    def _d2f(self, x):
        u = self.eta / (x + self.c) - self.m
        return (u * u - self.eta / (x + self.c) ** 2) * self._f(x)

    def _tail(self, end):
        if end == "hi":
            return 0.0 if self.m > 0 else INF
        return None

    def integrable(self):
        if math.isfinite(self.domain[1]):
            return True
        return self.m > 0


@dataclass(frozen=True)
class Flat(FunctionSpec):
    """Constant ``C``."""

    C: float = 1.0
    domain: tuple = (-INF, INF)
    family: ClassVar[str] = "Flat"

    def _f(self, x):
        return np.full_like(x, float(self.C))

    def _df(self, x):
        return np.zeros_like(x)

    def _d2f(self, x):
        return np.zeros_like(x)

    def _tail(self, end):
        return float(self.C)

    def integrable(self):
        lo, hi = self.domain
        return math.isfinite(lo) and math.isfinite(hi)


@dataclass(frozen=True)
class Tabulated(FunctionSpec):
    """Monotone cubic (PCHIP) interpolation through ``(xs, ys)``.

    The domain is the table range; nothing is extrapolated.
    """

    xs: tuple
    ys: tuple
    domain: tuple = None
    family: ClassVar[str] = "Tabulated"

    def __post_init__(self):
        xs = tuple(float(v) for v in self.xs)
        ys = tuple(float(v) for v in self.ys)
        if len(xs) != len(ys) or len(xs) < 2:
            raise ConfigError("Tabulated needs matching xs/ys with at least two points")
        if np.any(np.diff(xs) <= 0):
            raise ConfigError("Tabulated xs must be strictly increasing")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        dom = (xs[0], xs[-1]) if self.domain is None else tuple(map(float, self.domain))
        if dom[0] < xs[0] - 1e-12 or dom[1] > xs[-1] + 1e-12:
            raise ConfigError("Tabulated domain must lie inside the table range")
        object.__setattr__(self, "domain", dom)

    @cached_property
    def _pchip(self):
        return PchipInterpolator(np.array(self.xs), np.array(self.ys), extrapolate=False)

    def _f(self, x):
        return self._pchip(x)

    def _df(self, x):
        lo, hi = self.domain
        h = np.maximum(1e-6, 1e-8 * np.abs(x))
        a = np.maximum(x - h, lo)
        b = np.minimum(x + h, hi)
        return (self._f(b) - self._f(a)) / (b - a)

    def integrable(self):
        return True


@dataclass(frozen=True)
class Composite(FunctionSpec):
    """Pointwise product or sum of other maps."""

    parts: tuple
    op: str = "product"
    domain: tuple = None
    family: ClassVar[str] = "Composite"

    def __post_init__(self):
        parts = tuple(p if isinstance(p, FunctionSpec) else from_json(p) for p in self.parts)
        if not parts:
            raise ConfigError("Composite needs at least one part")
        if self.op not in ("product", "sum"):
            raise ConfigError(f"Composite op must be 'product' or 'sum', got {self.op!r}")
        object.__setattr__(self, "parts", parts)
        lo = max(p.domain[0] for p in parts)
        hi = min(p.domain[1] for p in parts)
        if self.domain is not None:
            lo, hi = max(lo, self.domain[0]), min(hi, self.domain[1])
        if not lo < hi:
            raise ConfigError("Composite parts have disjoint domains")
        object.__setattr__(self, "domain", (float(lo), float(hi)))

    def _jets(self, x):
        v = d = d2 = None
        for p in self.parts:
            pv, pd, pd2 = p._f(x), p._df(x), p._d2f(x)
            if v is None:
                v, d, d2 = pv, pd, pd2
            elif self.op == "product":
                v, d, d2 = v * pv, d * pv + v * pd, d2 * pv + 2.0 * d * pd + v * pd2
            else:
                v, d, d2 = v + pv, d + pd, d2 + pd2
        return v, d, d2

    def _f(self, x):
        return self._jets(x)[0]

    def _df(self, x):
        return self._jets(x)[1]

    def _d2f(self, x):
        return self._jets(x)[2]

    def _logf(self, x):
        if self.op == "product":
            return sum(p._logf(x) for p in self.parts)
        return np.log(self._f(x))

    def _tail(self, end):
        vals = [p.limit(end) for p in self.parts]
        if any(v is None for v in vals):
            return None
        if self.op == "sum":
            return float(sum(vals))
        if any(v == 0 for v in vals) and any(math.isinf(v) for v in vals):
            return None
        return float(np.prod(vals))

    def integrable(self):
        if self.op == "product":
            rest = [p for p in self.parts if not isinstance(p, Flat)]
            if len(rest) == 1:
                return rest[0].with_domain(*self.domain).integrable()
        return super().integrable()

    def decay_order(self):
        if self.op != "product":
            return None
        m, M = 0.0, 1.0
        for p in self.parts:
            if isinstance(p, Flat):
                M *= p.C
                continue
            order = p.decay_order()
            if order is None:
                return None
            m += order[0]
            M *= order[1]
        return (m, M)

    def params(self):
        return {"parts": tuple(p.to_json() for p in self.parts), "op": self.op}

    def with_domain(self, lo, hi):
        return Composite(parts=self.parts, op=self.op, domain=(float(lo), float(hi)))


FAMILIES = {
    cls.family: cls
    for cls in (Affine, Power, TanhShift, ExpDecay, PowerDecay, GaussBump,
                SkewGaussBump, PolyExp, Flat, Tabulated, Composite)
}


def from_json(obj: dict) -> FunctionSpec:
    """Build a map from ``{"family", "params", "domain"}``."""
    if not isinstance(obj, dict) or "family" not in obj:
        raise ConfigError("function spec must be an object with a 'family' key")
    cls = FAMILIES.get(obj["family"])
    if cls is None:
        raise ConfigError(f"unknown family {obj['family']!r}; expected one of {sorted(FAMILIES)}")
    params = dict(obj.get("params", {}))
    for key in ("xs", "ys", "parts"):
        if key in params:
            params[key] = tuple(params[key])
    if "domain" in obj and obj["domain"] is not None:
        dom = obj["domain"]
        if not isinstance(dom, (list, tuple)) or len(dom) != 2:
            raise ConfigError("domain must be a two-element list")
        lo, hi = _bound_in(dom[0]), _bound_in(dom[1])
        if not lo < hi:
            raise ConfigError(f"empty domain [{lo}, {hi}]")
        params["domain"] = (lo, hi)
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConfigError(f"{obj['family']}: {exc}") from None


# ---------------------------------------------------------------------------
# inversion
# ---------------------------------------------------------------------------


def _bracketed_newton(f: FunctionSpec, y, max_iter=200):
    """Vectorized Newton iteration safeguarded by a shrinking bracket."""
    shape = np.shape(y)
    y = np.atleast_1d(np.asarray(y, dtype=float)).ravel().copy()
    lo, hi = f.domain
    a = np.empty_like(y)
    b = np.empty_like(y)

    if math.isfinite(lo):
        a[:] = lo
        f_lo = float(f._f(np.asarray(lo)))
        tol_lo = 1e-12 * max(1.0, abs(f_lo))
        if np.any(y < f_lo - tol_lo):
            raise DomainError(f"{f.family}: value below the image of the domain")
    else:
        a[:] = np.minimum(y, 0.0) - 1.0
        for _ in range(2100):
            low = f._f(a) > y
            if not low.any():
                break
            a[low] = 2.0 * a[low] - 1.0
        else:
            raise NoConvergence(f"{f.family}: could not bracket the inverse from below")
    if math.isfinite(hi):
        b[:] = hi
        f_hi = float(f._f(np.asarray(hi)))
        tol_hi = 1e-12 * max(1.0, abs(f_hi))
        if np.any(y > f_hi + tol_hi):
            raise DomainError(f"{f.family}: value above the image of the domain")
    else:
        b[:] = np.maximum(y, a) + 1.0
        for _ in range(2100):
            high = f._f(b) < y
            if not high.any():
                break
            b[high] = 2.0 * b[high] + 1.0
        else:
            raise NoConvergence(f"{f.family}: could not bracket the inverse from above")

    tol = 1e-12 * np.maximum(1.0, np.abs(y))
    eps = np.finfo(float).eps
    x = np.clip(y, a, b)
    # iterate to rounding level in x, so tiny values keep full relative accuracy
    for _ in range(max_iter):
        r = f._f(x) - y
        done = r == 0
        a = np.where(r < 0, x, a)
        b = np.where(r > 0, x, b)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = x - r / f._df(x)
        bad = ~np.isfinite(step) | (step <= a) | (step >= b)
        step = np.where(bad, 0.5 * (a + b), step)
        collapsed = (b - a) <= 4.0 * np.spacing(np.maximum(np.abs(a), np.abs(b)))
        settled = ~bad & (np.abs(step - x) <= 4.0 * eps * np.abs(x))
        x = np.where(done | collapsed, x, step)
        if (done | collapsed | settled).all():
            break

    r = np.abs(f._f(x) - y)
    ok = (r <= tol) | ((b - a) <= 4.0 * np.spacing(np.maximum(np.abs(a), np.abs(b))))
    if not ok.all():
        worst = float(np.max(np.where(ok, 0.0, r)))
        raise NoConvergence(f"{f.family}: inverse residual {worst:.3e} above tolerance")
    return x.reshape(shape)


# ---------------------------------------------------------------------------
# module-level operations
# ---------------------------------------------------------------------------


def evaluate(f: FunctionSpec, x):
    return f(x)


def derivative(f: FunctionSpec, x):
    return f.deriv(x)


def inverse(tau: FunctionSpec, y):
    return tau.inverse(y)


class Direction(str, enum.Enum):
    FORWARD = "forward"
    INVERSE = "inverse"


def iterate_map(f: FunctionSpec, x, t: int, direction="forward"):
    """Compose ``f`` (or its inverse) ``t`` times; ``t = 0`` returns ``x``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    step = f if Direction(direction) is Direction.FORWARD else f.inverse
    for _ in range(t):
        x = step(x)
    return x


# ---------------------------------------------------------------------------
# fixed points and intervals
# ---------------------------------------------------------------------------


class Kind(str, enum.Enum):
    SOURCE = "Source"
    SINK = "Sink"
    TANGENT = "Tangent"


@dataclass(frozen=True)
class FixedPointReport:
    location: float
    kind: Kind
    derivative_at: float
    residual: float

    def to_json(self):
        return {"location": self.location, "kind": self.kind.value,
                "derivative_at": self.derivative_at, "residual": self.residual}


@dataclass(frozen=True)
class Interval:
    """One piece ``X_k`` between consecutive fixed points."""

    index: int
    left: float
    right: float
    closed_left: bool
    closed_right: bool
    empty: bool

    def contains(self, x):
        x = _as_array(x)
        if self.empty:
            return np.zeros_like(x, dtype=bool)
        left_ok = x >= self.left if self.closed_left else x > self.left
        right_ok = x <= self.right if self.closed_right else x < self.right
        return left_ok & right_ok

    def to_json(self):
        return {"index": self.index, "left": _bound_out(self.left), "right": _bound_out(self.right),
                "closed_left": self.closed_left, "closed_right": self.closed_right,
                "empty": self.empty}


@dataclass(frozen=True)
class IntervalDecomposition:
    """Fixed points ``s_1 < ... < s_K`` and the intervals ``X_0 ... X_K``."""

    fixed_points: tuple
    lo: float
    hi: float

    @property
    def K(self) -> int:
        return len(self.fixed_points)

    @property
    def locations(self):
        return [fp.location for fp in self.fixed_points]

    @property
    def has_tangent(self) -> bool:
        return any(fp.kind is Kind.TANGENT for fp in self.fixed_points)

    @property
    def intervals(self):
        s = [self.lo] + self.locations + [self.hi]
        K = self.K
        out = []
        for k in range(K + 1):
            left, right = s[k], s[k + 1]
            out.append(Interval(
                index=k, left=left, right=right,
                closed_left=k > 0, closed_right=k < K,
                empty=(left == right),
            ))
        return out

    def nonempty(self):
        return [iv for iv in self.intervals if not iv.empty]

    def sinks(self):
        return [fp for fp in self.fixed_points if fp.kind is Kind.SINK]

    def sources(self):
        return [fp for fp in self.fixed_points if fp.kind is Kind.SOURCE]

    def to_json(self):
        return {"fixed_points": [fp.to_json() for fp in self.fixed_points],
                "intervals": [iv.to_json() for iv in self.intervals]}


def classify_fixed_point(tau: FunctionSpec, s: float, delta_cls: float = DELTA_CLS) -> FixedPointReport:
    d = float(tau.deriv(s))
    if d > 1.0 + delta_cls:
        kind = Kind.SOURCE
    elif d < 1.0 - delta_cls:
        kind = Kind.SINK
    else:
        kind = Kind.TANGENT
    return FixedPointReport(float(s), kind, d, abs(float(tau(s)) - s))


def find_fixed_points(tau: FunctionSpec, space: Iterable[float] | None = None, *,
                      probes: int = 4096, scan_limit: float = 1e3,
                      delta_cls: float = DELTA_CLS) -> IntervalDecomposition:
    """Locate every root of ``tau(x) - x`` by a sign-change scan.

    Infinite ends are scanned up to ``scan_limit``.  Roots are refined with
    Brent's method; runs of probes on which ``tau`` is the identity are
    reported once as a tangent fixed point.
    """
    lo, hi = (tau.domain if space is None else tuple(float(v) for v in space))
    lo, hi = max(lo, tau.domain[0]), min(hi, tau.domain[1])
    if not lo < hi:
        raise ConfigError(f"empty scan interval [{lo}, {hi}]")
    a = lo if math.isfinite(lo) else min(-scan_limit, hi - scan_limit)
    b = hi if math.isfinite(hi) else max(scan_limit, a + scan_limit)
    p = np.linspace(a, b, probes)
    g = tau._f(p) - p
    zero = np.abs(g) <= 1e-9 * np.maximum(1.0, np.abs(p))

    def gfun(v):
        return float(tau._f(np.asarray(v))) - v

    roots = []
    i = 0
    while i < probes:
        if zero[i]:
            j = i
            while j + 1 < probes and zero[j + 1]:
                j += 1
            if j > i:
                roots.append((p[i], True))
            else:
                root = p[i]
                if 0 < i < probes - 1 and g[i - 1] * g[i + 1] < 0:
                    root = brentq(gfun, p[i - 1], p[i + 1], xtol=1e-13, rtol=4 * np.finfo(float).eps)
                roots.append((root, False))
            i = j + 1
            continue
        if i + 1 < probes and not zero[i + 1] and g[i] * g[i + 1] < 0:
            roots.append((brentq(gfun, p[i], p[i + 1], xtol=1e-13, rtol=4 * np.finfo(float).eps), False))
        i += 1

    if not roots:
        raise NoFixedPoint(f"no fixed point of {tau.family} on [{a}, {b}]")

    reports = []
    for root, flat_run in roots:
        rep = classify_fixed_point(tau, float(root), delta_cls)
        if flat_run and rep.kind is not Kind.TANGENT:
            rep = FixedPointReport(rep.location, Kind.TANGENT, rep.derivative_at, rep.residual)
        reports.append(rep)
    return IntervalDecomposition(tuple(reports), float(lo), float(hi))


# ---------------------------------------------------------------------------
# assumption checks
# ---------------------------------------------------------------------------


def probe_points(lo, hi, count=2048, span=1e3):
    a = lo if math.isfinite(lo) else (hi - span if math.isfinite(hi) else -span)
    b = hi if math.isfinite(hi) else a + span
    return np.linspace(a, b, count)


def check_fertility(n: FunctionSpec, lo=None, hi=None):
    """Raise ``ConfigError`` unless ``n`` is positive and finite on probes."""
    lo = n.domain[0] if lo is None else lo
    hi = n.domain[1] if hi is None else hi
    x = probe_points(lo, hi)
    v = n(x)
    if not np.all(np.isfinite(v)) or np.any(v <= 0):
        raise ConfigError(f"fertility {n.family} must be positive and bounded on [{lo}, {hi}]")


def check_transmission(tau: FunctionSpec, lo=None, hi=None):
    """Raise ``ConfigError`` unless ``tau`` increases and maps the interval onto itself."""
    lo = tau.domain[0] if lo is None else lo
    hi = tau.domain[1] if hi is None else hi
    x = probe_points(lo, hi)
    if np.any(np.diff(tau(x)) <= 0) or np.any(tau.deriv(x) <= 0):
        raise ConfigError(f"transmission {tau.family} is not strictly increasing on [{lo}, {hi}]")
    for end, point in (("lo", lo), ("hi", hi)):
        if math.isfinite(point):
            image = float(tau(point))
            if abs(image - point) > 1e-9 * max(1.0, abs(point)):
                raise ConfigError(
                    f"transmission {tau.family} maps endpoint {point} to {image}; "
                    "it must map the capital space onto itself")
        else:
            tail = tau.limit(end)
            if tail is not None and tail != point:
                raise ConfigError(f"transmission {tau.family} does not reach {point}")
