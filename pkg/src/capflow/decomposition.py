"""Evolve the population interval by interval and stitch it back together.

Capital never crosses a fixed point, so the mass between two adjacent
fixed points evolves on its own.  Each interval carries a normalized
density, its own growth factors, and a weight; the global distribution is
the weighted union.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .distribution import Grid, GridDistribution, normalize, write_csv
from .dynamics import Interp, parallel_map, step_density
from .errors import EmptyIntervalMass
from .functions import FunctionSpec, IntervalDecomposition, find_fixed_points


@dataclass(frozen=True)
class IntervalProcess:
    """One interval's share of the population."""

    index: int
    interval: object
    mask: np.ndarray
    density: GridDistribution | None
    growth: tuple = ()
    weight: float = 0.0
    initial_mass: float = 0.0

    @property
    def active(self) -> bool:
        return self.density is not None


@dataclass(frozen=True)
class ParallelState:
    t: int
    grid: Grid
    decomp: IntervalDecomposition
    processes: tuple

    @property
    def weights(self):
        return np.array([p.weight for p in self.processes])

    def growth_at(self, t: int):
        """``E_{k,t}[n]`` per interval; ``nan`` for skipped intervals."""
        return np.array([p.growth[t] if p.active else math.nan for p in self.processes])

    def global_growth(self, t: int, weights=None) -> float:
        """``sum_k w_{k,t} E_{k,t}[n]`` using the weights in force at ``t``."""
        w = self.weights if weights is None else weights
        return float(sum(wk * p.growth[t] for wk, p in zip(w, self.processes) if p.active))


def _subgrid(grid: Grid, mask: np.ndarray, interval) -> Grid:
    nodes = grid.nodes[mask]
    ends = [b for b in grid.breakpoints if nodes[0] <= b <= nodes[-1]]
    return Grid(nodes, grid.scheme, (interval.left, interval.right), tuple(ends))


def split_initial(f0: GridDistribution, decomp: IntervalDecomposition | None = None, tau=None,
                  strict: bool = False) -> ParallelState:
    """Restrict ``f0`` to every nonempty interval.

    Fixed points must be grid nodes; the restriction masses are the initial
    weights.  Intervals without mass are skipped with weight zero, or raise
    ``EmptyIntervalMass`` when ``strict``.
    """
    if f0.has_atoms:
        raise ValueError("the interval split needs an atomless start")
    if decomp is None:
        decomp = find_fixed_points(tau, f0.grid.domain)
    grid = f0.grid
    f0 = normalize(f0)
    for s in decomp.locations:
        if grid.lo <= s <= grid.hi and grid.index_of(s) is None:
            raise ValueError(f"fixed point {s} is not a grid node; pass it as a breakpoint")
    procs = []
    for iv in decomp.intervals:
        mask = np.zeros(grid.size, dtype=bool) if iv.empty else np.asarray(iv.contains(grid.nodes), dtype=bool)
        if iv.empty or mask.sum() < 2:
            procs.append(IntervalProcess(iv.index, iv, mask, None))
            continue
        x, f = grid.nodes[mask], f0.density[mask]
        mass = float(np.trapezoid(f, x))
        if mass <= 0:
            if strict:
                raise EmptyIntervalMass(f"the start puts no mass on interval {iv.index}")
            procs.append(IntervalProcess(iv.index, iv, mask, None))
            continue
        sub = GridDistribution(_subgrid(grid, mask, iv), f / mass)
        procs.append(IntervalProcess(iv.index, iv, mask, sub, (), mass, mass))
    return ParallelState(0, grid, decomp, tuple(procs))


def step_parallel(state: ParallelState, n: FunctionSpec, tau: FunctionSpec,
                  interp=Interp.LINEAR) -> ParallelState:
    """Step every interval on its own, then update the weights.

    ``w_{k,t+1} = w_{k,t} E_{k,t} / sum_j w_{j,t} E_{j,t}``.
    """
    active = [p for p in state.processes if p.active]
    stepped = dict(zip((p.index for p in active),
                       parallel_map(lambda p: step_density(p.density, n, tau, interp), active)))
    total = sum(p.weight * stepped[p.index][1] for p in active)
    procs = []
    for p in state.processes:
        if not p.active:
            procs.append(p)
            continue
        dens, growth = stepped[p.index]
        procs.append(replace(p, density=dens, growth=p.growth + (growth,), weight=p.weight * growth / total))
    return ParallelState(state.t + 1, state.grid, state.decomp, tuple(procs))


def run_parallel(f0: GridDistribution, n: FunctionSpec, tau: FunctionSpec, steps: int,
                 decomp: IntervalDecomposition | None = None, interp=Interp.LINEAR, strict: bool = False):
    """States for ``t = 0..steps``."""
    states = [split_initial(f0, decomp, tau, strict)]
    for _ in range(steps):
        states.append(step_parallel(states[-1], n, tau, interp))
    return states


def reconstruct(state: ParallelState) -> GridDistribution:
    """Global density ``w_k f_k`` on each interval.

    Shared fixed-point nodes take the average of the two sides.
    """
    total = np.zeros(state.grid.size)
    hits = np.zeros(state.grid.size)
    for p in state.processes:
        if p.active:
            total[p.mask] += p.weight * p.density.density
            hits[p.mask] += 1
    dens = np.where(hits > 0, total / np.maximum(hits, 1), 0.0)
    return normalize(GridDistribution(state.grid, dens))


def normalized_growth_product(states, k: int, n: FunctionSpec, tau: FunctionSpec, s: float | None = None):
    """``(tau'(s)/n(s))**t * prod_{i<t} E_{k,i}[n]`` for ``t = 1..len(states)-1``.

    ``s`` defaults to the source at an end of interval ``k`` (the one with
    the larger ``n/tau'`` if both ends are sources).  Computed in logs.
    """
    proc = states[-1].processes[k]
    if not proc.active:
        raise ValueError(f"interval {k} carries no mass")
    if s is None:
        iv = proc.interval
        ends = [fp for fp in states[-1].decomp.sources() if fp.location in (iv.left, iv.right)]
        if not ends:
            raise ValueError(f"interval {k} has no source endpoint")
        s = max(ends, key=lambda fp: float(n(fp.location)) / fp.derivative_at).location
    log_rate = math.log(float(n(s)) / float(tau.deriv(s)))
    logs = np.cumsum(np.log(proc.growth)) - log_rate * np.arange(1, len(proc.growth) + 1)
    return np.exp(logs)


def write_parallel(states, out_dir) -> list:
    """``interval_<k>/<t>.csv`` per active interval and a ``weights.csv`` table."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    width = max(3, len(str(states[-1].t)))
    paths = []
    for st in states:
        for p in st.processes:
            if not p.active:
                continue
            d = out / f"interval_{p.index}"
            d.mkdir(exist_ok=True)
            path = d / f"{st.t:0{width}d}.csv"
            with path.open("w", newline="") as fh:
                write_csv(p.density, fh)
            paths.append(path)
    final = states[-1]
    K = len(final.processes)
    path = out / "weights.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"w_{k}" for k in range(K)] + [f"E_{k}" for k in range(K)])
        for st in states:
            growth = ["" if not p.active or st.t >= len(p.growth) else repr(p.growth[st.t])
                      for p in final.processes]
            w.writerow([st.t] + [repr(float(x)) for x in st.weights] + growth)
    paths.append(path)
    return paths
