"""Forward iteration of the population process on a grid.

A step reweights every parent by fertility and pushes the children
through the transmission map.  For the density part this is evaluated
pointwise through the inverse map ``rho``::

    f_{t+1}(x) = n(rho(x)) / tau'(rho(x)) * f_t(rho(x)) / E_t[n]

Atoms move to ``tau(y)`` and are reweighted by ``n(y) / E_t[n]``.
"""

from __future__ import annotations

import enum
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .distribution import (
    GridDistribution, Metric, check_fosd, distance, expand_grid, mass_in, normalize, write_csv,
)
from .errors import GridMismatch, NoFixedPoint, TruncationEscape, ZeroMass
from .functions import FunctionSpec, Kind, find_fixed_points

ESCAPE_TOL = 1e-6
ESCAPE_CELLS = 2
MAX_EXPANSIONS = 8
COLLAPSE_CELLS = 5
COLLAPSE_DELTA = 1e-3
# window masses below this are left in the density
ABSORB_FLOOR = 1e-14


def max_threads() -> int:
    """Worker cap for data-parallel work, from ``CAPFLOW_THREADS``."""
    raw = os.environ.get("CAPFLOW_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return min(8, os.cpu_count() or 1)


def parallel_map(fn, items):
    """``map`` over a thread pool; results keep the input order."""
    items = list(items)
    width = min(max_threads(), len(items))
    if width <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=width) as pool:
        return list(pool.map(fn, items))


class Interp(str, enum.Enum):
    LINEAR = "linear"
    LOGLINEAR = "loglinear"
    CUBIC = "cubic"

    @classmethod
    def parse(cls, value):
        return value if isinstance(value, cls) else cls(str(value).lower())


class StopReason(str, enum.Enum):
    TOLERANCE = "Tolerance"
    MAX_GENERATIONS = "MaxGenerations"
    ATOM_COLLAPSE = "AtomCollapse"


@dataclass(frozen=True, eq=False)
class Transfer:
    """Inverse-map data for one grid and one transmission map."""

    grid: object
    tau: FunctionSpec
    rho: np.ndarray
    slope: np.ndarray
    inside: np.ndarray
    index: np.ndarray
    weight: np.ndarray

    @classmethod
    def build(cls, grid, tau: FunctionSpec) -> "Transfer":
        x = grid.nodes
        rho = np.asarray(tau.inverse(x), dtype=float)
        # fixed points on the grid map to themselves exactly
        for b in grid.breakpoints:
            i = grid.index_of(b)
            if i is not None:
                rho[i] = b
        slope = np.asarray(tau.deriv(rho), dtype=float)
        lo, hi = grid.truncation
        inside = (rho >= lo) & (rho <= hi)
        idx = np.clip(np.searchsorted(x, rho, side="right") - 1, 0, x.size - 2)
        lam = np.clip((rho - x[idx]) / (x[idx + 1] - x[idx]), 0.0, 1.0)
        for arr in (rho, slope, inside, idx, lam):
            arr.setflags(write=False)
        return cls(grid, tau, rho, slope, inside, idx, lam)

    def sample(self, density: np.ndarray, interp=Interp.LINEAR) -> np.ndarray:
        """Values of the nodal density at ``rho(x)``; zero outside the truncation."""
        interp = Interp.parse(interp)
        i, lam = self.index, self.weight
        if interp is Interp.LINEAR:
            vals = density[i] * (1.0 - lam) + density[i + 1] * lam
        elif interp is Interp.LOGLINEAR:
            a, b = density[i], density[i + 1]
            both = (a > 0) & (b > 0)
            with np.errstate(divide="ignore"):
                la, lb = np.log(np.where(both, a, 1.0)), np.log(np.where(both, b, 1.0))
            vals = np.where(both, np.exp(la * (1.0 - lam) + lb * lam), a * (1.0 - lam) + b * lam)
        else:
            vals = np.maximum(CubicSpline(self.grid.nodes, density)(np.clip(self.rho, *self.grid.truncation)), 0.0)
        return np.where(self.inside, vals, 0.0)


def _transfer_for(d: GridDistribution, tau, transfer):
    if transfer is not None and transfer.grid.same_as(d.grid) and transfer.tau is tau:
        return transfer
    return Transfer.build(d.grid, tau)


def push_density(f: GridDistribution, n: FunctionSpec, tau: FunctionSpec, interp=Interp.LINEAR,
                 transfer: Transfer | None = None) -> np.ndarray:
    """Unnormalized children density ``n(rho)/tau'(rho) * f(rho)`` at the nodes."""
    tr = _transfer_for(f, tau, transfer)
    return np.asarray(n(tr.rho), dtype=float) / tr.slope * tr.sample(f.density, interp)


def step_density(f: GridDistribution, n: FunctionSpec, tau: FunctionSpec, interp=Interp.LINEAR,
                 transfer: Transfer | None = None):
    """One generation of an atomless distribution.

    Returns the next density and the growth factor ``E_t[n]``, measured as
    the mass of the pushed-forward density.  At a discrete steady state this
    is exactly the factor by which the population grows.
    """
    if f.has_atoms:
        raise ValueError("step_density needs an atomless distribution; use advance")
    raw = push_density(f, n, tau, interp, transfer)
    growth = float(np.trapezoid(raw, f.grid.nodes))
    if not (growth > 0 and math.isfinite(growth)):
        raise ZeroMass(f"children carry total mass {growth}")
    return f.replace(density=raw / growth, info={}), growth


def step_atoms(atoms, n: FunctionSpec, tau: FunctionSpec):
    """Move atoms ``(y, w)`` to ``(tau(y), w n(y) / E)`` with ``E = sum w n(y)``."""
    atoms = tuple((float(y), float(w)) for y, w in atoms)
    if not atoms:
        raise ZeroMass("no atoms to move")
    grown = [(float(tau(y)), w * float(n(y))) for y, w in atoms]
    growth = sum(w for _, w in grown)
    if not growth > 0:
        raise ZeroMass("atoms carry no children")
    return tuple((y, w / growth) for y, w in grown), growth


def advance(d: GridDistribution, n: FunctionSpec, tau: FunctionSpec, interp=Interp.LINEAR,
            transfer: Transfer | None = None):
    """One generation of a mixed distribution; returns ``(next, E_t[n])``."""
    if not d.has_atoms:
        return step_density(d, n, tau, interp, transfer)
    raw = push_density(d, n, tau, interp, transfer) if d.density_mass > 0 else np.zeros(d.grid.size)
    grown = [(float(tau(y)), w * float(n(y))) for y, w in d.atoms]
    growth = float(np.trapezoid(raw, d.grid.nodes)) + sum(w for _, w in grown)
    if not (growth > 0 and math.isfinite(growth)):
        raise ZeroMass(f"children carry total mass {growth}")
    return d.replace(density=raw / growth, atoms=tuple((y, w / growth) for y, w in grown), info={}), growth


def absorb(d: GridDistribution, s: float, eps: float) -> GridDistribution:
    """Move the density mass in ``[s - eps, s + eps]`` into an atom at ``s``.

    The moved mass is the drop in trapezoid mass when the window nodes are
    zeroed, so total mass is preserved exactly.
    """
    x = d.grid.nodes
    win = np.abs(x - s) <= eps
    if not win.any():
        return d
    kept = np.where(win, 0.0, d.density)
    moved = float(np.trapezoid(d.density, x) - np.trapezoid(kept, x))
    if moved <= ABSORB_FLOOR:
        return d
    return d.replace(density=kept, atoms=d.atoms + ((s, moved),))


def _regrid(d: GridDistribution, grid) -> GridDistribution:
    dens = np.interp(grid.nodes, d.grid.nodes, d.density, left=0.0, right=0.0)
    return normalize(GridDistribution(grid, dens, d.atoms, dict(d.info)))


def _escaping(d: GridDistribution, cells=ESCAPE_CELLS, tol=ESCAPE_TOL) -> bool:
    lo, hi = d.grid.domain
    x = d.grid.nodes
    if not math.isfinite(hi) and mass_in(d, float(x[-1 - cells]), float(x[-1])) > tol:
        return True
    return not math.isfinite(lo) and mass_in(d, float(x[0]), float(x[cells])) > tol


def default_snapshot(t: int) -> bool:
    """Every generation up to 10, then 20, 40, 80, ..."""
    if t <= 10:
        return True
    q, r = divmod(t, 10)
    return r == 0 and q & (q - 1) == 0


@dataclass
class Trajectory:
    snapshots: list
    growth_factors: list
    distances: list
    converged: bool
    stop_reason: StopReason
    collapse_at: tuple | None = None
    final: GridDistribution | None = None
    expansions: int = 0
    info: dict = field(default_factory=dict)

    @property
    def generations(self) -> int:
        return len(self.growth_factors)

    def snapshot(self, t: int) -> GridDistribution:
        for s, d in self.snapshots:
            if s == t:
                return d
        raise KeyError(f"no snapshot at t={t}")

    def summary(self) -> dict:
        final = self.final
        return {
            "generations": self.generations,
            "stop_reason": self.stop_reason.value,
            "converged": self.converged,
            "collapse_at": None if self.collapse_at is None
            else [{"location": s, "mass": w} for s, w in self.collapse_at],
            "growth_factors": list(self.growth_factors),
            "distances": list(self.distances),
            "grid_expansions": self.expansions,
            "final_atoms": [{"location": a, "mass": w} for a, w in final.atoms] if final else [],
            "snapshot_generations": [t for t, _ in self.snapshots],
            **self.info,
        }


def _sink_locations(tau, grid, sinks):
    if sinks is not None:
        return tuple(float(s) for s in sinks)
    try:
        found = find_fixed_points(tau, grid.domain)
    except NoFixedPoint:
        return ()
    lo, hi = grid.truncation
    return tuple(fp.location for fp in found.fixed_points if fp.kind is Kind.SINK and lo <= fp.location <= hi)


def _collapse(d, sinks, eps_of, delta):
    if not sinks:
        return None
    masses = [(s, mass_in(d, s - eps_of(s), s + eps_of(s))) for s in sinks]
    top = max(masses, key=lambda p: p[1])
    if top[1] >= 1.0 - delta:
        return (top,)
    held = [p for p in masses if p[1] > delta]
    if len(held) > 1 and sum(w for _, w in held) >= 1.0 - delta:
        return tuple(held)
    return None


def run(f0: GridDistribution, n, tau: FunctionSpec, max_gen: int = 200, tol: float = 1e-8,
        metric="Kolmogorov", *, interp=Interp.LINEAR, snapshot=None, sinks=None,
        absorb_sinks: bool = True, stop_on_collapse: bool = True,
        collapse_cells: int = COLLAPSE_CELLS, collapse_delta: float = COLLAPSE_DELTA,
        max_expansions: int = MAX_EXPANSIONS) -> Trajectory:
    """Iterate the population process from ``f0``.

    ``n`` is a fertility function or a callable ``t -> fertility``.
    Stops when successive snapshots are within ``tol`` in ``metric``, when
    the mass collapses onto sinks of ``tau``, or after ``max_gen`` steps.

    Density mass next to a sink whose point density is growing is moved
    into an atom at the sink after each step, so concentration below grid
    resolution is carried exactly.  Mass reaching the edge of an infinite
    truncation widens the grid; after ``max_expansions`` widenings the run
    raises ``TruncationEscape``.  ``info["full_support"]`` records whether
    the start has positive density at every interior node; long-run
    verdicts only speak to starts that do.
    """
    if max_gen < 1:
        raise ValueError("max_gen must be at least 1")
    metric = Metric.parse(metric)
    fert = (lambda t: n) if isinstance(n, FunctionSpec) else n
    keep = snapshot or default_snapshot
    if isinstance(keep, int):
        every = keep
        keep = lambda t: t % every == 0

    d = normalize(f0)
    full_support = bool(np.all(d.density[1:-1] > 0))
    sink_locs = _sink_locations(tau, d.grid, sinks)
    transfer = Transfer.build(d.grid, tau)
    snaps = [(0, d)]
    growth, dists = [], []
    reason, converged, collapse = StopReason.MAX_GENERATIONS, False, None
    expansions = 0

    for t in range(max_gen):
        while _escaping(d):
            if expansions >= max_expansions:
                raise TruncationEscape(
                    f"mass keeps reaching the truncation edge after {expansions} widenings "
                    f"(t={t}, truncation={d.grid.truncation})")
            d = _regrid(d, expand_grid(d.grid))
            transfer = Transfer.build(d.grid, tau)
            expansions += 1
        n_t = fert(t)
        nxt, g = advance(d, n_t, tau, interp, transfer)
        if absorb_sinks:
            for s in sink_locs:
                if float(n_t(s)) / float(tau.deriv(s)) > g:
                    nxt = absorb(nxt, s, collapse_cells * d.grid.spacing_near(s))
        growth.append(g)
        dist = distance(d, nxt, metric)
        dists.append(dist)
        d = nxt
        if keep(t + 1):
            snaps.append((t + 1, d))
        if dist < tol:
            reason, converged = StopReason.TOLERANCE, True
            break
        hit = _collapse(d, sink_locs, lambda s: collapse_cells * d.grid.spacing_near(s), collapse_delta)
        if hit and collapse is None:
            collapse = hit
            if stop_on_collapse:
                reason, converged = StopReason.ATOM_COLLAPSE, True
                break
    if snaps[-1][0] != len(growth):
        snaps.append((len(growth), d))
    if collapse is not None and reason is StopReason.MAX_GENERATIONS:
        reason = StopReason.ATOM_COLLAPSE
        collapse = _collapse(d, sink_locs, lambda s: collapse_cells * d.grid.spacing_near(s), 1.0) or collapse
    return Trajectory(snaps, growth, dists, converged, reason, collapse, d, expansions,
                      {"full_support": full_support})


def compare_trajectories(run_a: Trajectory, run_b: Trajectory, tol: float = 1e-9):
    """First-order dominance verdict of ``run_a`` over ``run_b`` per shared snapshot."""
    gens_a = [t for t, _ in run_a.snapshots]
    gens_b = [t for t, _ in run_b.snapshots]
    if gens_a != gens_b:
        raise GridMismatch("trajectories have different snapshot generations")
    return [check_fosd(a, b, tol) for (_, a), (_, b) in zip(run_a.snapshots, run_b.snapshots)]


def write_trajectory(traj: Trajectory, out_dir, prefix: str = "snapshot") -> list:
    """One CSV per snapshot plus ``summary.json``; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    width = max(3, len(str(traj.snapshots[-1][0])))
    paths = []
    for t, d in traj.snapshots:
        p = out / f"{prefix}_{t:0{width}d}.csv"
        with p.open("w", newline="") as fh:
            write_csv(d, fh)
        paths.append(p)
    p = out / "summary.json"
    p.write_text(json.dumps(traj.summary(), indent=2, sort_keys=True) + "\n")
    paths.append(p)
    return paths


__all__ = [
    "Interp", "StopReason", "Trajectory", "Transfer", "absorb", "advance", "compare_trajectories",
    "default_snapshot", "max_threads", "parallel_map", "push_density", "run", "step_atoms",
    "step_density", "write_trajectory",
]
