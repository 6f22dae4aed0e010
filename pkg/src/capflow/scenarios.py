"""Ready-made parametric examples: primitives, grid, starting law, closed form."""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import stats

from .closed_form import ClosedForm, analytic_steady_state, exponential
from .distribution import GridDistribution, build_grid, from_pdf
from .dynamics import Interp
from .errors import ConfigError
from .functions import (
    Affine, ExpDecay, Flat, FunctionSpec, GaussBump, PolyExp, Power, PowerDecay, SkewGaussBump, TanhShift,
)

HALF_LINE = (0.0, math.inf)
TANH_C = 1 - math.tanh(5) / 5

DEFAULTS = {
    "A": {"m": 0.5, "a": 1.5},
    "B": {},
    "C": {"m": 1.0, "a": 2.0},
    "D": {"m": 0.5, "a": 1.5, "c": 1.0, "eta": 2.0},
    "E": {"m": 0.0, "var": 1.0, "a": 1.5, "b": 0.5},
}

B_FERTILITY = {
    "a": SkewGaussBump(0.0, 1.5, 1.0, 1.0, 0.02),
    "b": SkewGaussBump(-4.0, 3.0, 0.5, 1.0, 0.0),
    "c": Flat(1.0),
}


def mixture_pdf(parts):
    """``parts`` is ``[(weight, loc, scale), ...]`` of Gaussian components."""
    return lambda x: sum(w * stats.norm.pdf(x, mu, sd) for w, mu, sd in parts)


HALF_LINE_START = ((0.6, 1.0, 0.7), (0.4, 4.0, 1.0))
TANH_START = ((0.6, -1.5, 1.0), (0.4, 2.0, 0.8))
POWER_START = ((0.7, 2.0, 0.6), (0.3, 4.0, 1.0))
LINE_START = ((0.5, -2.0, 1.0), (0.5, 3.0, 1.5))


@dataclass(frozen=True)
class Scenario:
    name: str
    n: FunctionSpec
    tau: FunctionSpec
    space: tuple
    grid: object
    f0: GridDistribution
    analytic: ClosedForm | None = None
    interp: Interp = Interp.LINEAR

    @property
    def label(self) -> str:
        return self.name


def example(name: str, case: str | None = None, n_nodes: int = 1024, **params) -> Scenario:
    """Build a named example; unspecified parameters take their defaults."""
    key = name.strip().upper()
    if key not in DEFAULTS:
        raise ConfigError(f"unknown example {name!r}; expected one of {sorted(DEFAULTS)}")
    p = {**DEFAULTS[key], **params}
    unknown = set(params) - set(DEFAULTS[key])
    if unknown:
        raise ConfigError(f"example {key} has no parameters {sorted(unknown)}")
    return _BUILDERS[key](p, (case or "a").lower(), n_nodes)


def _example_a(p, case, n_nodes):
    m, a = p["m"], p["a"]
    analytic = analytic_steady_state("A", m=m, a=a) if a > 1 else None
    ref = analytic if analytic is not None else exponential(1.0)
    grid = build_grid(HALF_LINE, n_nodes, reference=ref, tail_mass_tol=1e-10, breakpoints=(0.0,))
    return Scenario(f"A(m={m}, a={a})", ExpDecay(m), Affine(a, domain=HALF_LINE), HALF_LINE, grid,
                    from_pdf(grid, mixture_pdf(HALF_LINE_START)), analytic)


def _example_b(p, case, n_nodes):
    if case not in B_FERTILITY:
        raise ConfigError(f"example B needs case a, b or c, got {case!r}")
    space = (-5.0, 5.0)
    grid = build_grid(space, n_nodes, breakpoints=(-5.0, 0.0, 5.0))
    return Scenario(f"B({case})", B_FERTILITY[case], TanhShift(TANH_C, domain=space), space, grid,
                    from_pdf(grid, mixture_pdf(TANH_START)), None, Interp.CUBIC)


def _example_c(p, case, n_nodes):
    m, a = p["m"], p["a"]
    analytic = analytic_steady_state("C", m=m, a=a)
    space = (1.0, math.inf)
    grid = build_grid(space, n_nodes, "LogSpaced", reference=analytic, breakpoints=(1.0,))
    return Scenario(f"C(m={m}, a={a})", PowerDecay(m), Power(a), space, grid,
                    from_pdf(grid, mixture_pdf(POWER_START)), analytic)


def _example_d(p, case, n_nodes):
    m, a, c, eta = p["m"], p["a"], p["c"], p["eta"]
    analytic = analytic_steady_state("D", m=m, a=a, c=c, eta=eta)
    grid = build_grid(HALF_LINE, n_nodes, reference=analytic, tail_mass_tol=1e-10, breakpoints=(0.0,))
    return Scenario(f"D(m={m}, a={a}, c={c}, eta={eta})", PolyExp(c, eta, m), Affine(a, domain=HALF_LINE),
                    HALF_LINE, grid, from_pdf(grid, mixture_pdf(HALF_LINE_START)), analytic)


def _example_e(p, case, n_nodes):
    m, var, a, b = p["m"], p["var"], p["a"], p["b"]
    analytic = analytic_steady_state("E", m=m, var=var, a=a, b=b)
    space = (-math.inf, math.inf)
    source = b / (1 - a)
    grid = build_grid(space, n_nodes, reference=analytic, tail_mass_tol=1e-10, breakpoints=(source,))
    return Scenario(f"E(m={m}, var={var}, a={a}, b={b})", GaussBump(m, var), Affine(a, b),
                    space, grid, from_pdf(grid, mixture_pdf(LINE_START)), analytic)


_BUILDERS = {"A": _example_a, "B": _example_b, "C": _example_c, "D": _example_d, "E": _example_e}
