"""Long-run behaviour: the G_t products, the conditions that decide the
limit, and the limit itself.

``G_t(x, y)`` multiplies ``(n/tau')(rho^i(x)) / (n/tau')(y)`` over
``i = 1..t``.  Its limit at the selected source, normalized, is the
atomless steady-state density; a selected sink means the population ends
up as a point mass there.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .closed_form import analytic_steady_state
from .distribution import GridDistribution, build_grid, normalize
from .errors import NoConvergence, NoFixedPoint, TangentPresent
from .functions import FunctionSpec, IntervalDecomposition, Kind, Power, find_fixed_points

STATIONARY_TOL = 1e-8
GENERIC_RTOL = 1e-9
FACTOR_TOL = 1e-14
T_MAX = 10_000
# log G below this is an underflow to zero
LOG_ZERO = -745.0
EVIDENCE_RTOL = 1e-4
EVIDENCE_T = (1, 2, 4, 8, 16, 32)


def _log_ratio(n: FunctionSpec, tau: FunctionSpec, x):
    """``log(n(x) / tau'(x))``."""
    return np.asarray(n.log(x), dtype=float) - np.log(np.asarray(tau.deriv(x), dtype=float))


def _out(x, val):
    return float(val) if np.ndim(x) == 0 else val


def gt_log_factors(x, y, n: FunctionSpec, tau: FunctionSpec, t: int):
    """The ``t`` log factors of ``G_t(x, y)``; shape ``(t,) + shape(x)``."""
    z = np.asarray(x, dtype=float)
    ref = float(_log_ratio(n, tau, y))
    out = []
    for _ in range(t):
        z = np.asarray(tau.inverse(z), dtype=float)
        out.append(_log_ratio(n, tau, z) - ref)
    return np.array(out)


def gt_product(x, y, n: FunctionSpec, tau: FunctionSpec, t: int):
    """``G_t(x, y)``, summed in logs."""
    if t < 1:
        raise ValueError("t must be at least 1")
    return _out(x, np.exp(gt_log_factors(x, y, n, tau, t).sum(axis=0)))


def gt_limit(x, s: float, n: FunctionSpec, tau: FunctionSpec, factor_tol: float = FACTOR_TOL,
             t_max: int = T_MAX, raise_on_failure: bool = True):
    """``lim_t G_t(x, s)`` for ``x`` in the basin of the source ``s``.

    Factors are accumulated until ``|log factor| < factor_tol``.  Returns
    ``(value, steps)``; ``steps`` is ``-1`` where ``t_max`` was reached
    (and ``value`` is ``nan``) when ``raise_on_failure`` is off.
    """
    z = np.atleast_1d(np.asarray(x, dtype=float)).copy()
    ref = float(_log_ratio(n, tau, s))
    total = np.zeros_like(z)
    steps = np.zeros(z.shape, dtype=int)
    live = np.ones(z.shape, dtype=bool)
    for i in range(1, t_max + 1):
        if not live.any():
            break
        zi = np.asarray(tau.inverse(z[live]), dtype=float)
        z[live] = zi
        r = _log_ratio(n, tau, zi) - ref
        total[live] += r
        steps[live] = i
        done = (np.abs(r) < factor_tol) | (total[live] < LOG_ZERO)
        idx = np.flatnonzero(live)
        live[idx[done]] = False
    if live.any():
        if raise_on_failure:
            bad = z[live][0]
            raise NoConvergence(f"G_t(x, {s}) factors do not vanish after {t_max} steps (iterate at {bad})")
        total[live] = math.nan
        steps[live] = -1
    value = np.exp(total)
    if np.ndim(x) == 0:
        return float(value[0]), int(steps[0])
    return value.reshape(np.shape(x)), steps.reshape(np.shape(x))


# ---------------------------------------------------------------------------
# conditions
# ---------------------------------------------------------------------------


class WellBehavedKind(str, enum.Enum):
    BY_INTEGRABLE = "ByProp3"
    BY_POWER_DECAY = "ByProp4"
    NUMERIC = "NumericEvidence"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class WellBehaved:
    kind: WellBehavedKind
    t: int | None = None
    integral: float | None = None

    @property
    def holds(self) -> bool:
        return self.kind is not WellBehavedKind.UNKNOWN

    def to_json(self):
        return {"kind": self.kind.value, "t": self.t, "integral": self.integral}


def _span(space, tau):
    lo, hi = (tau.domain if space is None else tuple(float(v) for v in space))
    return max(lo, tau.domain[0]), min(hi, tau.domain[1])


def gt_integral(s: float, n: FunctionSpec, tau: FunctionSpec, t: int, lo: float, hi: float) -> float:
    """``int_lo^hi G_t(x, s) dx`` by adaptive quadrature."""
    val, _ = integrate.quad(lambda v: gt_product(v, s, n, tau, t), lo, hi, limit=400,
                            epsabs=0.0, epsrel=1e-10)
    return val


def forward_product_integral(s: float, n: FunctionSpec, tau: FunctionSpec, t: int,
                             lo: float, hi: float) -> float:
    """``tau'(s)**t * int prod_{i<t} n(tau^i(y)) / n(s) dy`` over ``[lo, hi]``."""
    ref = float(n.log(s))

    def integrand(y):
        z, acc = y, 0.0
        for _ in range(t):
            acc += float(n.log(z)) - ref
            z = float(tau(z))
        return math.exp(acc)

    val, _ = integrate.quad(integrand, lo, hi, limit=400, epsabs=0.0, epsrel=1e-10)
    return float(tau.deriv(s)) ** t * val


def _numeric_evidence(n, tau, lo, hi, anchors):
    """Smallest ``t`` for which ``int G_t(., s)`` settles on doubling truncations."""
    for t in EVIDENCE_T:
        totals = []
        for s in anchors:
            a = lo if math.isfinite(lo) else s - 10.0
            b = hi if math.isfinite(hi) else s + 10.0
            prev = None
            settled = None
            for _ in range(40):
                try:
                    val = gt_integral(s, n, tau, t, a, b)
                except (ArithmeticError, ValueError):
                    break
                if not math.isfinite(val):
                    break
                if prev is not None and abs(val - prev) <= EVIDENCE_RTOL * abs(val):
                    settled = val
                    break
                if math.isfinite(lo) and math.isfinite(hi):
                    settled = val
                    break
                prev = val
                if not math.isfinite(lo):
                    a = s - 2.0 * (s - a)
                if not math.isfinite(hi):
                    b = s + 2.0 * (b - s)
            if settled is None:
                break
            totals.append(settled)
        if len(totals) == len(anchors):
            return WellBehaved(WellBehavedKind.NUMERIC, t, max(totals))
    return None


def check_well_behaved(n: FunctionSpec, tau: FunctionSpec, space=None,
                       decomp: IntervalDecomposition | None = None) -> WellBehaved:
    """Integrable fertility, power transmission with polynomially decaying
    fertility, or numeric evidence that ``int G_t`` is finite."""
    lo, hi = _span(space, tau)
    if n.with_domain(lo, hi).integrable() is True:
        return WellBehaved(WellBehavedKind.BY_INTEGRABLE)
    if isinstance(tau, Power) and tau.a > 0 and tau.a != 1 and lo == 1.0 and hi == math.inf:
        order = n.decay_order()
        if order is not None and order[0] > 0 and 0 <= order[1] < math.inf:
            return WellBehaved(WellBehavedKind.BY_POWER_DECAY)
    if decomp is None:
        try:
            decomp = find_fixed_points(tau, (lo, hi))
        except NoFixedPoint:
            return WellBehaved(WellBehavedKind.UNKNOWN)
    found = _numeric_evidence(n, tau, lo, hi, decomp.locations)
    return found or WellBehaved(WellBehavedKind.UNKNOWN)


class Branch(str, enum.Enum):
    SINK = "SinkBranch"
    SOURCE = "SourceBranch"
    NEITHER = "Neither"


@dataclass(frozen=True)
class NiceReport:
    interval: int
    holds: bool
    branch: Branch
    details: dict = field(default_factory=dict)

    def to_json(self):
        return {"interval": self.interval, "holds": self.holds, "branch": self.branch.value,
                "details": self.details}


def _end_log_values(logh, s: float, end: float, analytic):
    """Log values standing in for the limit at ``end``.

    Finite ends are evaluated; infinite ends use the analytic tail when
    known, else the values at a far point and twice as far, which must
    agree in their ordering against ``s``.
    """
    if math.isfinite(end):
        return [float(logh(end))]
    if analytic is not None:
        return [math.log(analytic) if analytic > 0 else -math.inf]
    far = max(1e3, 100.0 * abs(s))
    sign = 1.0 if end > 0 else -1.0
    return [float(logh(s + sign * far)), float(logh(s + sign * 2 * far))]


def _stationary(h, dh) -> bool:
    return not abs(dh) > STATIONARY_TOL * (1.0 + abs(h))


def check_nice(n: FunctionSpec, tau: FunctionSpec, k: int, decomp: IntervalDecomposition) -> NiceReport:
    """Whether some fixed point at an end of ``X_k`` satisfies the sink or
    the source condition."""
    iv = decomp.intervals[k]
    details = {}
    for fp in decomp.fixed_points:
        s = fp.location
        if s not in (iv.left, iv.right) or iv.empty:
            continue
        other = iv.right if s == iv.left else iv.left
        end = "hi" if other > s else "lo"
        if fp.kind is Kind.SINK:
            h, dh = float(n(s)), float(n.deriv(s))
            logh = n.log
            analytic = n.limit(end) if not math.isfinite(other) else None
            branch = Branch.SINK
        elif fp.kind is Kind.SOURCE:
            d1, d2 = float(tau.deriv(s)), float(tau.deriv2(s))
            h = float(n(s)) / d1
            dh = (float(n.deriv(s)) * d1 - float(n(s)) * d2) / (d1 * d1)
            logh = lambda v: float(_log_ratio(n, tau, v))
            analytic = None
            # n -> 0 with tau' bounded away from zero forces n/tau' -> 0
            if not math.isfinite(other) and n.limit(end) == 0.0 and _slope_bounded_below(tau, end):
                analytic = 0.0
            branch = Branch.SOURCE
        else:
            continue
        ends = _end_log_values(logh, s, other, analytic)
        log_hs = math.log(h) if h > 0 else -math.inf
        maximal = all(log_hs > v for v in ends)
        stationary = _stationary(h, dh)
        details[f"{s!r}"] = {"branch": branch.value, "value": h, "derivative": dh,
                             "stationary": stationary, "endpoint_maximal": maximal,
                             "other_end": [math.exp(v) for v in ends]}
        if maximal and not stationary:
            return NiceReport(k, True, branch, details)
    return NiceReport(k, False, Branch.NEITHER, details)


def _slope_bounded_below(tau: FunctionSpec, end: str) -> bool:
    """Whether ``tau'`` stays away from zero toward ``end``."""
    lo, hi = tau.domain
    start = (lo if math.isfinite(lo) else -1.0) if end == "hi" else (hi if math.isfinite(hi) else 1.0)
    sign = 1.0 if end == "hi" else -1.0
    pts = start + sign * np.geomspace(1.0, 1e6, 25)
    return bool(np.min(np.asarray(tau.deriv(pts), dtype=float)) > 1e-12)


class GenericKind(str, enum.Enum):
    GENERIC = "Generic"
    NON_GENERIC = "NonGeneric"
    NOT_APPLICABLE = "NotApplicable"


@dataclass(frozen=True)
class GenericVerdict:
    kind: GenericKind
    k_star: int | None = None
    tied: tuple = ()
    scores: tuple = ()

    def to_json(self):
        return {"kind": self.kind.value, "k_star": self.k_star, "tied": list(self.tied),
                "scores": list(self.scores)}


def fixed_point_score(n: FunctionSpec, fp) -> float:
    """``n(s)`` at a sink, ``n(s)/tau'(s)`` at a source."""
    value = float(n(fp.location))
    return value / fp.derivative_at if fp.kind is Kind.SOURCE else value


def check_generic(n: FunctionSpec, tau: FunctionSpec, decomp: IntervalDecomposition) -> GenericVerdict:
    """Unique maximizer ``k*`` (1-based) of the per-fixed-point score."""
    if decomp.K == 0:
        return GenericVerdict(GenericKind.NOT_APPLICABLE)
    if decomp.has_tangent:
        raise TangentPresent("a tangent fixed point has no score")
    scores = tuple(fixed_point_score(n, fp) for fp in decomp.fixed_points)
    best = max(scores)
    tied = tuple(k + 1 for k, v in enumerate(scores) if v >= best - GENERIC_RTOL * abs(best))
    if len(tied) == 1:
        return GenericVerdict(GenericKind.GENERIC, tied[0], tied, scores)
    return GenericVerdict(GenericKind.NON_GENERIC, None, tied, scores)


@dataclass(frozen=True)
class ConditionReport:
    well_behaved: WellBehaved
    nice: tuple
    generic: GenericVerdict
    decomposition: IntervalDecomposition | None = None

    def failures(self) -> list:
        out = []
        if not self.well_behaved.holds:
            out.append("well-behavedness could not be established")
        for r in self.nice:
            if not r.holds:
                out.append(f"not nice in interval {r.interval}")
        if self.generic.kind is GenericKind.NON_GENERIC:
            out.append(f"not generic: fixed points {list(self.generic.tied)} tie")
        elif self.generic.kind is GenericKind.NOT_APPLICABLE:
            out.append("genericity does not apply")
        return out

    def to_json(self):
        return {"well_behaved": self.well_behaved.to_json(),
                "nice_per_interval": [r.to_json() for r in self.nice],
                "generic": self.generic.to_json(),
                "fixed_points": None if self.decomposition is None else self.decomposition.to_json()}


# ---------------------------------------------------------------------------
# verdicts
# ---------------------------------------------------------------------------


class VerdictKind(str, enum.Enum):
    ATOMLESS = "Atomless"
    DEGENERATE = "Degenerate"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class LongRunVerdict:
    kind: VerdictKind
    k_star: int | None = None
    location: float | None = None
    support: tuple | None = None
    density: GridDistribution | None = None
    reasons: tuple = ()
    report: ConditionReport | None = None

    def to_json(self):
        out = {"kind": self.kind.value, "k_star": self.k_star, "location": self.location,
               "support": None if self.support is None else [_jsonable(v) for v in self.support],
               "reasons": list(self.reasons)}
        if self.report is not None:
            out["conditions"] = self.report.to_json()
        return out


def _jsonable(v):
    return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")


def condition_report(n: FunctionSpec, tau: FunctionSpec, space=None,
                     decomp: IntervalDecomposition | None = None) -> ConditionReport:
    lo, hi = _span(space, tau)
    if decomp is None:
        decomp = find_fixed_points(tau, (lo, hi))
    if decomp.has_tangent:
        generic = GenericVerdict(GenericKind.NOT_APPLICABLE)
    else:
        generic = check_generic(n, tau, decomp)
    nice = tuple(check_nice(n, tau, iv.index, decomp) for iv in decomp.nonempty())
    wb = check_well_behaved(n, tau, (lo, hi), decomp)
    return ConditionReport(wb, nice, generic, decomp)


def classify_longrun(n: FunctionSpec, tau: FunctionSpec, space=None, grid=None,
                     decomp: IntervalDecomposition | None = None, n_nodes: int = 1024) -> LongRunVerdict:
    """Atomless steady state, point mass at a sink, or inconclusive.

    An atomless verdict carries the steady density on ``grid`` (built over
    the truncation of ``space`` when omitted).
    """
    lo, hi = _span(space, tau)
    try:
        decomp = decomp or find_fixed_points(tau, (lo, hi))
    except NoFixedPoint as exc:
        return LongRunVerdict(VerdictKind.INCONCLUSIVE, reasons=(str(exc),))
    if decomp.has_tangent:
        where = [fp.location for fp in decomp.fixed_points if fp.kind is Kind.TANGENT]
        return LongRunVerdict(VerdictKind.INCONCLUSIVE, reasons=(f"tangent fixed point at {where}",),
                              report=ConditionReport(WellBehaved(WellBehavedKind.UNKNOWN), (),
                                                     GenericVerdict(GenericKind.NOT_APPLICABLE), decomp))
    report = condition_report(n, tau, (lo, hi), decomp)
    failures = report.failures()
    if failures:
        return LongRunVerdict(VerdictKind.INCONCLUSIVE, reasons=tuple(failures), report=report)
    k = report.generic.k_star
    fp = decomp.fixed_points[k - 1]
    if fp.kind is Kind.SINK:
        return LongRunVerdict(VerdictKind.DEGENERATE, k, fp.location, (fp.location, fp.location),
                              report=report)
    support = _support(decomp, k)
    if grid is None:
        grid = build_grid((lo, hi), n_nodes, breakpoints=tuple(decomp.locations))
    density = steady_state_numeric(n, tau, decomp, grid, k)
    return LongRunVerdict(VerdictKind.ATOMLESS, k, fp.location, support, density, report=report)


def _support(decomp, k):
    ivs = decomp.intervals
    left = ivs[k - 1] if not ivs[k - 1].empty else ivs[k]
    right = ivs[k] if not ivs[k].empty else ivs[k - 1]
    return (left.left, right.right)


def steady_state_numeric(n: FunctionSpec, tau: FunctionSpec, decomp: IntervalDecomposition, grid,
                         k_star: int | None = None, factor_tol: float = FACTOR_TOL,
                         t_max: int = T_MAX) -> GridDistribution:
    """Normalized ``lim_t G_t(x, s_{k*})`` at every node of ``X_{k*-1}`` and ``X_{k*}``.

    Nodes where the limit fails to settle are filled by interpolation from
    their neighbours and listed in ``info["failed_nodes"]``.
    """
    if k_star is None:
        k_star = check_generic(n, tau, decomp).k_star
        if k_star is None:
            raise ValueError("no unique selected fixed point")
    fp = decomp.fixed_points[k_star - 1]
    if fp.kind is not Kind.SOURCE:
        raise ValueError(f"s_{k_star} = {fp.location} is not a source")
    lo, hi = _support(decomp, k_star)
    x = grid.nodes
    inside = (x >= lo) & (x <= hi)
    vals, steps = gt_limit(x[inside], fp.location, n, tau, factor_tol, t_max, raise_on_failure=False)
    dens = np.zeros(grid.size)
    dens[inside] = vals
    failed = np.flatnonzero(inside)[steps < 0]
    if failed.size:
        good = inside.copy()
        good[failed] = False
        dens[failed] = np.interp(x[failed], x[good], dens[good])
    d = normalize(GridDistribution(grid, dens))
    return d.replace(info={"source": fp.location, "k_star": k_star,
                           "failed_nodes": [float(v) for v in x[failed]],
                           "max_steps": int(steps.max()) if steps.size else 0})


def fitted_tail_exponent(d: GridDistribution, lo: float, hi: float) -> float:
    """Slope of ``log f`` against ``log x`` over nodes in ``[lo, hi]``."""
    x = d.grid.nodes
    m = (x >= lo) & (x <= hi) & (d.density > 0)
    slope, _ = np.polyfit(np.log(x[m]), np.log(d.density[m]), 1)
    return float(slope)


def fitted_exponential_rate(d: GridDistribution, lo: float, hi: float) -> float:
    """Minus the slope of ``log f`` against ``x`` over nodes in ``[lo, hi]``."""
    x = d.grid.nodes
    m = (x >= lo) & (x <= hi) & (d.density > 0)
    slope, _ = np.polyfit(x[m], np.log(d.density[m]), 1)
    return float(-slope)


__all__ = [
    "Branch", "ConditionReport", "GenericKind", "GenericVerdict", "LongRunVerdict", "NiceReport",
    "VerdictKind", "WellBehaved", "WellBehavedKind", "analytic_steady_state", "check_generic",
    "check_nice", "check_well_behaved", "classify_longrun", "condition_report", "fitted_exponential_rate",
    "fitted_tail_exponent", "fixed_point_score", "forward_product_integral", "gt_integral", "gt_limit",
    "gt_log_factors", "gt_product", "steady_state_numeric",
]
