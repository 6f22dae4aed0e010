"""Distributions of capital on a grid: atoms plus a nodal density.

The density is piecewise linear between nodes and integrated with the
trapezoid rule.  Atoms sit at arbitrary points of the truncation interval.
"""

from __future__ import annotations

import enum
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import ConfigError, GridMismatch, UndefinedRatio, ZeroMass

MIN_NODES = 64
FOSD_TOL = 1e-9
MLR_RTOL = 1e-9
# density values below this are treated as zero in ratio tests
RATIO_FLOOR = 1e-250


class Scheme(str, enum.Enum):
    UNIFORM = "Uniform"
    LOG = "LogSpaced"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "").replace("-", "")
        if key in ("uniform", "linear"):
            return cls.UNIFORM
        if key in ("logspaced", "log", "geometric"):
            return cls.LOG
        raise ConfigError(f"unknown grid scheme {value!r}")


@dataclass(frozen=True, eq=False)
class Grid:
    """Ordered nodes over a truncation of a possibly infinite capital space."""

    nodes: np.ndarray
    scheme: Scheme
    domain: tuple
    breakpoints: tuple = ()

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < MIN_NODES:
            raise ConfigError(f"a grid needs at least {MIN_NODES} nodes")
        if np.any(np.diff(nodes) <= 0):
            raise ConfigError("grid nodes must be strictly increasing")
        lo, hi = self.domain
        if nodes[0] < lo - 1e-12 * max(1, abs(lo)) or nodes[-1] > hi + 1e-12 * max(1, abs(hi)):
            raise ConfigError("grid truncation must lie inside the declared domain")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def lo(self) -> float:
        return float(self.nodes[0])

    @property
    def hi(self) -> float:
        return float(self.nodes[-1])

    @property
    def truncation(self):
        return (self.lo, self.hi)

    @property
    def size(self) -> int:
        return self.nodes.size

    def spacing_near(self, s: float) -> float:
        i = int(np.clip(np.searchsorted(self.nodes, s), 1, self.size - 1))
        gaps = [self.nodes[i] - self.nodes[i - 1]]
        if i + 1 < self.size:
            gaps.append(self.nodes[i + 1] - self.nodes[i])
        return float(max(gaps))

    def index_of(self, s: float):
        i = int(np.searchsorted(self.nodes, s))
        if i < self.size and self.nodes[i] == s:
            return i
        return None

    def same_as(self, other: "Grid") -> bool:
        return self is other or np.array_equal(self.nodes, other.nodes)

    def describe(self) -> dict:
        return {"nodes": self.size, "scheme": self.scheme.value, "lo": self.lo, "hi": self.hi,
                "breakpoints": list(self.breakpoints)}


def _spaced(lo, hi, n, scheme):
    if scheme is Scheme.UNIFORM:
        return np.linspace(lo, hi, n)
    if lo > 0:
        nodes = np.geomspace(lo, hi, n)
    else:
        nodes = lo - 1.0 + np.geomspace(1.0, hi - lo + 1.0, n)
    nodes[0], nodes[-1] = lo, hi
    return nodes


def _snap(nodes, points):
    nodes = nodes.copy()
    kept = []
    for b in sorted(points):
        if not nodes[0] <= b <= nodes[-1]:
            continue
        kept.append(float(b))
        if b in (nodes[0], nodes[-1]):
            continue
        i = int(np.argmin(np.abs(nodes - b)))
        i = min(max(i, 1), nodes.size - 2)
        if not nodes[i - 1] < b < nodes[i + 1]:
            raise ConfigError(f"cannot place breakpoint {b} on the grid; use more nodes")
        nodes[i] = b
    return nodes, tuple(kept)


def build_grid(space, n_nodes: int = 1024, scheme="Uniform", tail_mass_tol: float = 1e-6,
               reference=None, default_span: float = 20.0, breakpoints=()) -> Grid:
    """Choose a truncation and lay out nodes.

    Infinite ends are cut where the ``reference`` law (anything with
    ``ppf``/``isf``) leaves less than ``tail_mass_tol`` beyond the cut; a
    two-sided cut splits the tolerance evenly.  Without a reference an
    infinite end sits ``default_span`` away from the other end.
    ``breakpoints`` (typically fixed points) are moved onto nodes.
    """
    lo, hi = (float(v) for v in space)
    if not lo < hi:
        raise ConfigError(f"empty capital space [{lo}, {hi}]")
    if n_nodes < MIN_NODES:
        raise ConfigError(f"n_nodes must be at least {MIN_NODES}, got {n_nodes}")
    if not 0 < tail_mass_tol <= 0.01:
        raise ConfigError(f"tail_mass_tol must lie in (0, 0.01], got {tail_mass_tol}")
    scheme = Scheme.parse(scheme)

    both = not math.isfinite(lo) and not math.isfinite(hi)
    side_tol = tail_mass_tol / 2 if both else tail_mass_tol
    t_lo, t_hi = lo, hi
    if not math.isfinite(hi):
        t_hi = float(reference.isf(side_tol)) if reference is not None else None
    if not math.isfinite(lo):
        t_lo = float(reference.ppf(side_tol)) if reference is not None else None
    if t_lo is None and t_hi is None:
        t_lo, t_hi = -default_span, default_span
    elif t_hi is None:
        t_hi = t_lo + default_span
    elif t_lo is None:
        t_lo = t_hi - default_span
    if not t_lo < t_hi:
        raise ConfigError("reference law leaves an empty truncation")

    nodes = _spaced(t_lo, t_hi, n_nodes, scheme)
    nodes, kept = _snap(nodes, breakpoints)
    return Grid(nodes, scheme, (lo, hi), kept)


def expand_grid(grid: Grid, factor: float = 2.0) -> Grid:
    """Same node count and scheme over a wider truncation.

    Only infinite ends move: the width grows by ``factor``.
    """
    lo, hi = grid.truncation
    width = hi - lo
    d_lo, d_hi = grid.domain
    grow = (factor - 1.0) * width
    if math.isfinite(d_lo) and math.isfinite(d_hi):
        return grid
    if not math.isfinite(d_lo) and not math.isfinite(d_hi):
        lo, hi = lo - grow / 2, hi + grow / 2
    elif not math.isfinite(d_hi):
        hi = hi + grow
    else:
        lo = lo - grow
    nodes = _spaced(lo, hi, grid.size, grid.scheme)
    nodes, kept = _snap(nodes, grid.breakpoints)
    return Grid(nodes, grid.scheme, grid.domain, kept)


# ---------------------------------------------------------------------------
# distributions
# ---------------------------------------------------------------------------


def _merge_atoms(atoms, tol=1e-12):
    merged = []
    for loc, mass in sorted((float(a), float(w)) for a, w in atoms):
        if mass == 0:
            continue
        if merged and abs(loc - merged[-1][0]) <= tol * max(1.0, abs(loc)):
            merged[-1] = (merged[-1][0], merged[-1][1] + mass)
        else:
            merged.append((loc, mass))
    return tuple(merged)


@dataclass(frozen=True, eq=False)
class GridDistribution:
    """Atoms ``(location, mass)`` plus density values at the grid nodes."""

    grid: Grid
    density: np.ndarray
    atoms: tuple = ()
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        dens = np.asarray(self.density, dtype=float)
        if dens.shape != self.grid.nodes.shape:
            raise GridMismatch("density length differs from the node count")
        if np.any(dens < 0) or not np.all(np.isfinite(dens)):
            raise ValueError("density values must be finite and nonnegative")
        dens.setflags(write=False)
        object.__setattr__(self, "density", dens)
        atoms = _merge_atoms(self.atoms)
        lo, hi = self.grid.truncation
        for loc, mass in atoms:
            if not lo - 1e-9 * max(1, abs(lo)) <= loc <= hi + 1e-9 * max(1, abs(hi)):
                raise ValueError(f"atom at {loc} lies outside the truncation [{lo}, {hi}]")
            if mass < 0:
                raise ValueError("atom masses must be nonnegative")
        object.__setattr__(self, "atoms", atoms)

    @property
    def nodes(self):
        return self.grid.nodes

    @property
    def density_mass(self) -> float:
        return float(np.trapezoid(self.density, self.grid.nodes))

    @property
    def atom_mass(self) -> float:
        return float(sum(w for _, w in self.atoms))

    @property
    def total_mass(self) -> float:
        return self.density_mass + self.atom_mass

    @property
    def has_atoms(self) -> bool:
        return bool(self.atoms)

    def mean(self) -> float:
        x = self.grid.nodes
        m = np.trapezoid(x * self.density, x) + sum(a * w for a, w in self.atoms)
        return float(m / self.total_mass)

    def var(self) -> float:
        x = self.grid.nodes
        mu = self.mean()
        v = np.trapezoid((x - mu) ** 2 * self.density, x) + sum((a - mu) ** 2 * w for a, w in self.atoms)
        return float(v / self.total_mass)

    def replace(self, density=None, atoms=None, grid=None, info=None):
        return GridDistribution(self.grid if grid is None else grid,
                                self.density if density is None else density,
                                self.atoms if atoms is None else atoms,
                                dict(self.info) if info is None else info)


def from_pdf(grid: Grid, pdf, atoms=()) -> GridDistribution:
    """Sample a density function at the nodes and normalize."""
    return normalize(GridDistribution(grid, np.asarray(pdf(grid.nodes), dtype=float), atoms))


def point_mass(grid: Grid, s: float, mass: float = 1.0) -> GridDistribution:
    return GridDistribution(grid, np.zeros(grid.size), ((s, mass),))


def normalize(d: GridDistribution) -> GridDistribution:
    """Scale density and atoms so the total mass is one."""
    total = d.total_mass
    if not (total > 0 and math.isfinite(total)):
        raise ZeroMass(f"cannot normalize a distribution with total mass {total}")
    if abs(total - 1.0) <= 1e-14:
        return d
    return GridDistribution(d.grid, d.density / total, tuple((a, w / total) for a, w in d.atoms),
                            dict(d.info))


def _cum_density(d: GridDistribution):
    return cumulative_trapezoid(d.density, d.grid.nodes, initial=0.0)


def _density_cdf(d: GridDistribution, x, cum=None):
    nodes = d.grid.nodes
    f = d.density
    cum = _cum_density(d) if cum is None else cum
    x = np.asarray(x, dtype=float)
    i = np.clip(np.searchsorted(nodes, x, side="right") - 1, 0, nodes.size - 2)
    x0, x1 = nodes[i], nodes[i + 1]
    xc = np.clip(x, nodes[0], nodes[-1])
    lam = (xc - x0) / (x1 - x0)
    fx = f[i] + lam * (f[i + 1] - f[i])
    out = cum[i] + (xc - x0) * (f[i] + fx) / 2.0
    return np.where(x < nodes[0], 0.0, out)


def _atom_cdf(d: GridDistribution, x, strict=False):
    x = np.asarray(x, dtype=float)
    if not d.atoms:
        return np.zeros_like(x)
    locs = np.array([a for a, _ in d.atoms])
    cw = np.concatenate([[0.0], np.cumsum([w for _, w in d.atoms])])
    idx = np.searchsorted(locs, x, side="left" if strict else "right")
    return cw[idx]


def cdf(d: GridDistribution, x):
    """Right-continuous CDF; clamps to 0 below and to the total mass above."""
    val = _density_cdf(d, x) + _atom_cdf(d, x)
    return float(val) if np.ndim(x) == 0 else val


def cdf_left(d: GridDistribution, x):
    """Left limit ``F(x-)``: atoms at ``x`` excluded."""
    val = _density_cdf(d, x) + _atom_cdf(d, x, strict=True)
    return float(val) if np.ndim(x) == 0 else val


def mass_in(d: GridDistribution, a: float, b: float) -> float:
    """Mass of the closed interval ``[a, b]``."""
    return float(cdf(d, b) - cdf_left(d, a))


def _require_same_grid(d1, d2):
    if not d1.grid.same_as(d2.grid):
        raise GridMismatch("distributions live on different grids")


def _breakpoints(*ds):
    pts = [ds[0].grid.nodes]
    for d in ds:
        if d.atoms:
            pts.append(np.array([a for a, _ in d.atoms]))
    return np.unique(np.concatenate(pts))


def _both_sides(d, pts):
    cum = _cum_density(d)
    dens = _density_cdf(d, pts, cum)
    return dens + _atom_cdf(d, pts), dens + _atom_cdf(d, pts, strict=True)


class Metric(str, enum.Enum):
    KOLMOGOROV = "Kolmogorov"
    L1 = "L1Density"
    WASSERSTEIN = "Wasserstein1"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        for m in cls:
            if m.value.lower() == key or m.name.lower() == key:
                return m
        if key in ("l1", "l1density"):
            return cls.L1
        if key in ("w1", "wasserstein"):
            return cls.WASSERSTEIN
        raise ConfigError(f"unknown metric {value!r}")


def distance(d1: GridDistribution, d2: GridDistribution, metric="Kolmogorov") -> float:
    """Distance between two distributions on the same grid."""
    _require_same_grid(d1, d2)
    metric = Metric.parse(metric)
    if metric is Metric.L1:
        x = d1.grid.nodes
        total = float(np.trapezoid(np.abs(d1.density - d2.density), x))
        return total + _atom_l1(d1, d2)
    pts = _breakpoints(d1, d2)
    r1, l1 = _both_sides(d1, pts)
    r2, l2 = _both_sides(d2, pts)
    if metric is Metric.KOLMOGOROV:
        return float(max(np.max(np.abs(r1 - r2)), np.max(np.abs(l1 - l2))))
    # integrate |F1 - F2| piece by piece between consecutive breakpoints
    right = np.abs(r1 - r2)[:-1]
    left = np.abs(l1 - l2)[1:]
    return float(np.sum(np.diff(pts) * (right + left) / 2.0))


def _atom_l1(d1, d2):
    """Atoms are matched when they sit within one grid spacing of each other."""
    rest2 = list(d2.atoms)
    total = 0.0
    for loc, w in d1.atoms:
        h = d1.grid.spacing_near(loc)
        match = None
        for j, (loc2, _) in enumerate(rest2):
            if abs(loc2 - loc) <= h and (match is None or abs(loc2 - loc) < abs(rest2[match][0] - loc)):
                match = j
        if match is None:
            total += w
        else:
            total += abs(w - rest2.pop(match)[1])
    return total + sum(w for _, w in rest2)


# ---------------------------------------------------------------------------
# stochastic orders
# ---------------------------------------------------------------------------


class Relation(str, enum.Enum):
    STRICT = "StrictlyDominates"
    EQUAL = "Equal"
    NEITHER = "Neither"


@dataclass(frozen=True)
class OrderVerdict:
    relation: Relation
    witness: float | None = None
    margin: float = 0.0

    def __post_init__(self):
        if (self.witness is None) != (self.relation is Relation.EQUAL):
            raise ValueError("a witness is present exactly when the relation is not Equal")

    @property
    def dominates(self) -> bool:
        return self.relation is Relation.STRICT

    def to_json(self):
        return {"relation": self.relation.value, "witness": self.witness, "margin": self.margin}


def check_fosd(f_hat: GridDistribution, f: GridDistribution, tol: float = FOSD_TOL) -> OrderVerdict:
    """Does ``f_hat`` first-order stochastically dominate ``f``?

    Dominance means ``F_hat <= F`` everywhere and strictly somewhere, both
    up to ``tol``.  The witness is the strictest point, or the worst
    violation when dominance fails.
    """
    _require_same_grid(f_hat, f)
    pts = _breakpoints(f_hat, f)
    rh, lh = _both_sides(f_hat, pts)
    r, l = _both_sides(f, pts)
    diff = np.concatenate([rh - r, lh - l])
    where = np.concatenate([pts, pts])
    worst = int(np.argmax(diff))
    best = int(np.argmin(diff))
    if diff[worst] > tol:
        return OrderVerdict(Relation.NEITHER, float(where[worst]), float(diff[worst]))
    if diff[best] < -tol:
        return OrderVerdict(Relation.STRICT, float(where[best]), float(-diff[best]))
    return OrderVerdict(Relation.EQUAL)


def _values(obj, x):
    if isinstance(obj, GridDistribution):
        return np.asarray(obj.density, dtype=float)
    if callable(obj):
        if x is None:
            raise ValueError("evaluation points are required for function arguments")
        return np.asarray(obj(x), dtype=float)
    return np.asarray(obj, dtype=float)


def check_mlr(f_hat, f, x=None, rtol: float = MLR_RTOL) -> OrderVerdict:
    """Does ``f_hat`` dominate ``f`` in the monotone likelihood ratio order?

    Arguments may be arrays of values on common points ``x``, callables
    evaluated at ``x``, or grid distributions.  The ratio ``f_hat/f`` must
    be nondecreasing up to relative slack ``rtol`` and increase somewhere.
    """
    a = _values(f_hat, x)
    b = _values(f, x)
    if a.shape != b.shape:
        raise GridMismatch("ratio test needs values on the same points")
    if x is None:
        x = f.grid.nodes if isinstance(f, GridDistribution) else np.arange(a.size, dtype=float)
    x = np.asarray(x, dtype=float)

    pos_b = b > RATIO_FLOOR
    pos_a = a > RATIO_FLOOR
    if not pos_b.any():
        raise UndefinedRatio("reference function has no support on the points")
    first, last = np.flatnonzero(pos_b)[[0, -1]]
    inside = np.zeros_like(pos_b)
    inside[first:last + 1] = True
    gap = inside & ~pos_b & pos_a
    if gap.any():
        raise UndefinedRatio(f"ratio undefined at x={x[np.flatnonzero(gap)[0]]}: reference vanishes")
    if pos_a[:first].any():
        bad = np.flatnonzero(pos_a[:first])[0]
        return OrderVerdict(Relation.NEITHER, float(x[bad]), math.inf)

    keep = inside & pos_b
    r = a[keep] / b[keep]
    xs = x[keep]
    grows_beyond = pos_a[last + 1:].any()
    if r.size < 2:
        if grows_beyond:
            return OrderVerdict(Relation.STRICT, float(x[last + 1]), math.inf)
        return OrderVerdict(Relation.EQUAL)
    step = np.diff(r)
    slack = rtol * np.maximum(np.abs(r[:-1]), np.abs(r[1:]))
    worst = int(np.argmin(step + slack))
    if step[worst] < -slack[worst]:
        return OrderVerdict(Relation.NEITHER, float(xs[worst + 1]), float(-step[worst]))
    rel = step - slack
    best = int(np.argmax(rel))
    if rel[best] > 0:
        return OrderVerdict(Relation.STRICT, float(xs[best + 1]), float(step[best]))
    if grows_beyond:
        return OrderVerdict(Relation.STRICT, float(x[last + 1]), math.inf)
    return OrderVerdict(Relation.EQUAL)


def detect_atom(d: GridDistribution, s: float, eps: float, delta: float) -> bool:
    """True when ``[s - eps, s + eps]`` carries at least ``1 - delta`` of the mass."""
    return mass_in(d, s - eps, s + eps) >= 1.0 - delta


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def write_csv(d: GridDistribution, fh) -> None:
    """Rows ``x,density,cdf``; atoms follow as ``x,ATOM,mass``."""
    fh.write("x,density,cdf\n")
    F = _cum_density(d) + _atom_cdf(d, d.grid.nodes)
    for xi, fi, Fi in zip(d.grid.nodes.tolist(), d.density.tolist(), F.tolist()):
        fh.write(f"{xi!r},{fi!r},{Fi!r}\n")
    for loc, mass in d.atoms:
        fh.write(f"{loc!r},ATOM,{mass!r}\n")


def to_csv(d: GridDistribution) -> str:
    buf = io.StringIO()
    write_csv(d, buf)
    return buf.getvalue()


def tail_mass(d: GridDistribution, cells: int = 2) -> float:
    """Mass within ``cells`` grid cells of the upper truncation point."""
    nodes = d.grid.nodes
    return mass_in(d, float(nodes[-1 - cells]), float(nodes[-1]))


def summary(d: GridDistribution) -> dict:
    return {
        "total_mass": d.total_mass,
        "mean": d.mean(),
        "variance": d.var(),
        "tail_mass": tail_mass(d),
        "atoms": [{"location": a, "mass": w} for a, w in d.atoms],
    }


def summary_json(d: GridDistribution) -> str:
    return json.dumps(summary(d), indent=2, sort_keys=True)
