import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from capflow.closed_form import exponential, gaussian
from capflow.distribution import (
    GridDistribution, Relation, build_grid, cdf, check_mlr, distance, from_pdf, mass_in, normalize,
)
from capflow.dynamics import (
    StopReason, Transfer, absorb, advance, compare_trajectories, default_snapshot, parallel_map, run,
    step_atoms, step_density, write_trajectory,
)
from capflow.errors import GridMismatch, TruncationEscape
from capflow.functions import (
    Affine, Composite, ExpDecay, Flat, GaussBump, SkewGaussBump, TanhShift,
)

HALF_LINE = (0.0, math.inf)
C_TANH = 1 - math.tanh(5) / 5
TANH = TanhShift(C_TANH, domain=(-5.0, 5.0))


def mixture(x):
    return 0.6 * stats.norm.pdf(x, 1.0, 0.7) + 0.4 * stats.norm.pdf(x, 4.0, 1.0)


def mixture_b(x):
    return 0.6 * stats.norm.pdf(x, -1.5, 1.0) + 0.4 * stats.norm.pdf(x, 2.0, 0.8)


@pytest.fixture(scope="module")
def exp_grid():
    return build_grid(HALF_LINE, 1024, reference=exponential(1.0), breakpoints=(0.0,))


@pytest.fixture(scope="module")
def wide_grid():
    # room for transients of tilted starts without widening the grid
    return build_grid(HALF_LINE, 1024, reference=exponential(1.0), tail_mass_tol=1e-10, breakpoints=(0.0,))


@pytest.fixture(scope="module")
def tanh_grid():
    return build_grid((-5.0, 5.0), 1024, breakpoints=(-5.0, 0.0, 5.0))


# -- single steps ---------------------------------------------------------------------

def test_flat_fertility_composes_cdf_with_inverse(tanh_grid):
    f = from_pdf(tanh_grid, mixture_b)
    nxt, growth = step_density(f, Flat(2.0), TANH, "cubic")
    rho = TANH.inverse(tanh_grid.nodes)
    assert growth == pytest.approx(2.0, rel=1e-5)
    assert np.max(np.abs(cdf(nxt, tanh_grid.nodes) - cdf(f, rho))) < 1e-4


def test_exponential_is_a_fixed_point(exp_grid):
    f = from_pdf(exp_grid, lambda x: np.exp(-x))
    nxt, growth = step_density(f, ExpDecay(0.5), Affine(1.5, domain=HALF_LINE), "cubic")
    assert distance(f, nxt, "L1Density") < 1e-6
    assert growth == pytest.approx(1 / 1.5, abs=1e-6)


def test_growth_factor_matches_quadrature(exp_grid):
    oracle, _ = integrate.quad(lambda x: np.exp(-x) * np.exp(-x), 0, math.inf)
    assert oracle == pytest.approx(0.5, abs=1e-12)
    f = from_pdf(exp_grid, lambda x: np.exp(-x))
    _, growth = step_density(f, ExpDecay(1.0), Affine(1.5, domain=HALF_LINE), "cubic")
    assert growth == pytest.approx(oracle, abs=1e-4)


def test_step_atoms_fixed_point():
    atoms, growth = step_atoms([(0.0, 1.0)], GaussBump(0.0, 1.0, 3.0), Affine(0.5))
    assert atoms == ((0.0, 1.0),)
    assert growth == 3.0


def test_step_atoms_contracting_map():
    atoms, _ = step_atoms([(4.0, 1.0)], Flat(1.0), Affine(0.5))
    assert atoms == ((2.0, 1.0),)


def test_step_atoms_reweights():
    atoms, growth = step_atoms([(1.0, 0.5), (2.0, 0.5)], Affine(1.0), Affine(1.0, 1.0))
    assert growth == pytest.approx(1.5)
    assert atoms[0] == pytest.approx((2.0, 1 / 3))
    assert atoms[1] == pytest.approx((3.0, 2 / 3))


def test_absorb_preserves_mass(tanh_grid):
    f = from_pdf(tanh_grid, mixture_b)
    g = absorb(f, 5.0, 0.05)
    assert g.atoms[0][0] == 5.0
    assert g.total_mass == pytest.approx(1.0, abs=1e-15)
    assert np.all(g.density[tanh_grid.nodes >= 4.95] == 0.0)


def test_advance_mixes_atoms_and_density(tanh_grid):
    f = from_pdf(tanh_grid, mixture_b)
    d = normalize(f.replace(density=f.density * 0.5, atoms=((5.0, 0.5),)))
    nxt, growth = advance(d, Flat(1.0), TANH)
    assert nxt.atoms == ((5.0, pytest.approx(0.5, rel=1e-4)),)
    assert nxt.total_mass == pytest.approx(1.0, abs=1e-14)


def test_step_refuses_atoms(tanh_grid):
    with pytest.raises(ValueError):
        step_density(GridDistribution(tanh_grid, np.zeros(tanh_grid.size), ((0.0, 1.0),)), Flat(1.0), TANH)


def test_transfer_keeps_fixed_points_exact(tanh_grid):
    tr = Transfer.build(tanh_grid, TANH)
    for s in (-5.0, 0.0, 5.0):
        i = tanh_grid.index_of(s)
        assert tr.rho[i] == s


# -- runs -------------------------------------------------------------------------

def test_example_a_converges_to_exponential(exp_grid):
    traj = run(from_pdf(exp_grid, mixture), ExpDecay(0.5), Affine(1.5, domain=HALF_LINE), 200)
    target = from_pdf(exp_grid, exponential(1.0).pdf)
    assert traj.stop_reason is StopReason.TOLERANCE
    assert distance(traj.final, target) < 1e-3
    assert traj.growth_factors[-1] == pytest.approx(1 / 1.5, abs=1e-4)


def test_example_a_contracting_collapses_at_zero():
    g = build_grid(HALF_LINE, 1024, breakpoints=(0.0,))
    traj = run(from_pdf(g, mixture), ExpDecay(0.5), Affine(0.5, domain=HALF_LINE), 200)
    assert traj.stop_reason is StopReason.ATOM_COLLAPSE
    assert traj.collapse_at[0][0] == 0.0
    assert mass_in(traj.final, -0.05, 0.05) >= 0.999


def test_flat_fertility_plateaus_around_source(tanh_grid):
    f0 = from_pdf(tanh_grid, mixture_b)
    traj = run(f0, Flat(1.0), TANH, 200, stop_on_collapse=False)
    F00 = cdf(f0, 0.0)
    inner = np.linspace(-4.5, 4.5, 7)
    assert np.allclose(cdf(traj.final, inner[inner < 0]), F00, atol=1e-3)
    assert np.allclose(cdf(traj.final, inner[inner > 0]), F00, atol=1e-3)


def test_explosive_run_fails_loudly(exp_grid):
    with pytest.raises(TruncationEscape):
        run(from_pdf(exp_grid, mixture), Flat(1.0), Affine(1.5, domain=HALF_LINE), 200)


def test_snapshot_cadence():
    kept = [t for t in range(200) if default_snapshot(t)]
    assert kept == list(range(11)) + [20, 40, 80, 160]


def test_trajectory_records_every_growth_factor(tanh_grid):
    traj = run(from_pdf(tanh_grid, mixture_b), Flat(1.0), TANH, 7, tol=0.0)
    assert traj.generations == 7 and len(traj.distances) == 7
    assert [t for t, _ in traj.snapshots] == list(range(8))
    assert traj.stop_reason is StopReason.MAX_GENERATIONS


def test_write_trajectory_is_deterministic(tmp_path, tanh_grid):
    f0 = from_pdf(tanh_grid, mixture_b)
    outputs = []
    for name in ("a", "b"):
        traj = run(f0, SkewGaussBump(0.0, 1.5, 1.0, 1.0, 0.02), TANH, 12, tol=0.0)
        paths = write_trajectory(traj, tmp_path / name)
        outputs.append({p.name: p.read_bytes() for p in paths})
    assert outputs[0] == outputs[1]
    summary = json.loads(outputs[0]["summary.json"])
    assert summary["stop_reason"] == "MaxGenerations"
    assert len(summary["growth_factors"]) == 12


def test_parallel_map_keeps_order(monkeypatch):
    monkeypatch.setenv("CAPFLOW_THREADS", "3")
    assert parallel_map(lambda v: v * v, range(10)) == [v * v for v in range(10)]


# -- comparative dynamics ---------------------------------------------------------------

def test_identical_runs_compare_equal(exp_grid):
    traj = run(from_pdf(exp_grid, mixture), ExpDecay(0.5), Affine(1.5, domain=HALF_LINE), 20, tol=0.0)
    verdicts = compare_trajectories(traj, traj)
    assert all(v.relation is Relation.EQUAL for v in verdicts)


def test_dominating_start_dominates_and_limits_agree(wide_grid):
    tau = Affine(1.5, domain=HALF_LINE)
    f0 = from_pdf(wide_grid, mixture)
    f0_hat = from_pdf(wide_grid, lambda x: mixture(x) * np.exp(0.4 * x))
    assert check_mlr(f0_hat, f0).relation is Relation.STRICT
    a = run(f0_hat, ExpDecay(0.5), tau, 120, tol=0.0, snapshot=1)
    b = run(f0, ExpDecay(0.5), tau, 120, tol=0.0, snapshot=1)
    kinds = [v.relation for v in compare_trajectories(a, b)]
    # strict while the runs differ, then equal to tolerance once both settle
    switch = kinds.index(Relation.EQUAL)
    assert switch > 20
    assert set(kinds[:switch]) == {Relation.STRICT}
    assert set(kinds[switch:]) == {Relation.EQUAL}
    assert distance(a.final, b.final) < 1e-6


def test_dominating_fertility_dominates_in_the_limit(wide_grid):
    tau = Affine(1.5, domain=HALF_LINE)
    f0 = from_pdf(wide_grid, mixture)
    a = run(f0, ExpDecay(0.4), tau, 60, tol=0.0)
    b = run(f0, ExpDecay(0.5), tau, 60, tol=0.0)
    verdicts = compare_trajectories(a, b)
    assert verdicts[0].relation is Relation.EQUAL
    assert all(v.relation is Relation.STRICT for v in verdicts[1:])


def test_compare_requires_matching_snapshots(wide_grid):
    tau = Affine(1.5, domain=HALF_LINE)
    f0 = from_pdf(wide_grid, mixture)
    with pytest.raises(GridMismatch):
        compare_trajectories(run(f0, ExpDecay(0.5), tau, 3, tol=0.0), run(f0, ExpDecay(0.5), tau, 4, tol=0.0))


# -- properties -------------------------------------------------------------------------

@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(0.05, 20.0), min_size=15, max_size=15))
def test_fertility_scale_leaves_snapshots_unchanged(scales):
    grid = build_grid((-5.0, 5.0), 256, breakpoints=(-5.0, 0.0, 5.0))
    n = SkewGaussBump(0.0, 1.5, 1.0, 1.0, 0.02)
    f0 = from_pdf(grid, mixture_b)
    base = run(f0, n, TANH, 15, tol=0.0, snapshot=1)
    scaled = run(f0, lambda t: Composite((Flat(scales[t]), n)), TANH, 15, tol=0.0, snapshot=1)
    for (_, a), (_, b) in zip(base.snapshots, scaled.snapshots):
        assert np.max(np.abs(a.density - b.density)) <= 1e-12 * max(1.0, np.max(a.density))
    ratio = np.array(scaled.growth_factors) / np.array(base.growth_factors)
    assert np.allclose(ratio, scales, rtol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(-3, 3), st.floats(0.3, 2.0), st.sampled_from([Flat(1.0), GaussBump(1.0, 4.0),
                                                              SkewGaussBump(-4.0, 3.0, 0.5, 1.0, 0.0)]))
def test_snapshots_keep_unit_mass(loc, width, n):
    grid = build_grid((-5.0, 5.0), 256, breakpoints=(-5.0, 0.0, 5.0))
    f0 = from_pdf(grid, lambda x: stats.norm.pdf(x, loc, width) + 1e-3)
    traj = run(f0, n, TANH, 40, tol=0.0, snapshot=1, stop_on_collapse=False)
    for _, d in traj.snapshots:
        assert abs(d.total_mass - 1.0) <= 1e-9
    assert all(0 < g < math.inf for g in traj.growth_factors)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 1.0), st.floats(0.0, 0.5), st.floats(0.0, 0.5), st.booleans())
def test_one_step_preserves_likelihood_ratio_order(m, tilt_f, tilt_n, strict_in_f):
    grid = build_grid(HALF_LINE, 512, reference=exponential(0.5), breakpoints=(0.0,))
    tau = Affine(1.5, domain=HALF_LINE)
    if strict_in_f:
        tilt_f = max(tilt_f, 0.05)
    else:
        tilt_n = max(tilt_n, 0.05)
    f = from_pdf(grid, mixture)
    f_hat = from_pdf(grid, lambda x: mixture(x) * np.exp(tilt_f * x))
    n, n_hat = ExpDecay(m), ExpDecay(m - tilt_n)
    nxt, _ = step_density(f, n, tau)
    nxt_hat, _ = step_density(f_hat, n_hat, tau)
    assert check_mlr(nxt_hat, nxt).relation is Relation.STRICT


@pytest.mark.parametrize("case", ["A", "E"])
def test_steady_growth_factor_is_fertility_over_slope(case):
    if case == "A":
        ref, n, tau, s = exponential(1.0), ExpDecay(0.5), Affine(1.5, domain=HALF_LINE), 0.0
        space = HALF_LINE
    else:
        ref, n, tau = gaussian(1.5, 1.25), GaussBump(0.0, 1.0), Affine(1.5, 0.5)
        s, space = -1.0, (-math.inf, math.inf)
    grid = build_grid(space, 1024, reference=ref, breakpoints=(s,) if space[0] < s else ())
    f = from_pdf(grid, ref.pdf)
    _, growth = step_density(f, n, tau, "cubic")
    assert growth == pytest.approx(n(s) / tau.deriv(s), abs=1e-6)


def test_partial_support_start_is_flagged(tanh_grid):
    full = run(from_pdf(tanh_grid, mixture_b), Flat(1.0), TANH, 3, tol=0.0)
    part = run(from_pdf(tanh_grid, lambda x: mixture_b(x) * (x < 0)), Flat(1.0), TANH, 3, tol=0.0)
    assert full.info["full_support"] and not part.info["full_support"]
    assert part.summary()["full_support"] is False
