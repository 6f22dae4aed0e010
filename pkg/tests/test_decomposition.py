import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from capflow.decomposition import (
    normalized_growth_product, reconstruct, run_parallel, split_initial, write_parallel,
)
from capflow.distribution import build_grid, distance, from_pdf, normalize
from capflow.dynamics import step_density
from capflow.errors import EmptyIntervalMass
from capflow.functions import (
    Affine, ExpDecay, Flat, SkewGaussBump, TanhShift, find_fixed_points,
)

TANH = TanhShift(1 - math.tanh(5) / 5, domain=(-5.0, 5.0))
B_FERTILITY = {
    "a": SkewGaussBump(0.0, 1.5, 1.0, 1.0, 0.02),
    "b": SkewGaussBump(-4.0, 3.0, 0.5, 1.0, 0.0),
    "c": Flat(1.0),
}


def gauss(x, mu, sd):
    return np.exp(-0.5 * ((x - mu) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))


def mixture_b(x):
    return 0.6 * gauss(x, -1.5, 1.0) + 0.4 * gauss(x, 2.0, 0.8)


@pytest.fixture(scope="module")
def grid():
    return build_grid((-5.0, 5.0), 1024, breakpoints=(-5.0, 0.0, 5.0))


@pytest.fixture(scope="module")
def f0(grid):
    return from_pdf(grid, mixture_b)


def direct_path(f, n, steps):
    out = [normalize(f)]
    for _ in range(steps):
        out.append(step_density(out[-1], n, TANH)[0])
    return out


def test_initial_weights_are_interval_masses(f0):
    st0 = split_initial(f0, tau=TANH)
    x, f = f0.grid.nodes, normalize(f0).density
    left = np.trapezoid(f[x <= 0], x[x <= 0])
    assert [p.active for p in st0.processes] == [False, True, True, False]
    assert st0.weights[1] == pytest.approx(left, abs=1e-14)
    assert st0.weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert distance(reconstruct(st0), f0, "L1Density") < 1e-10


def test_single_interval_matches_global_run():
    g = build_grid((0.0, math.inf), 512, breakpoints=(0.0,))
    f = from_pdf(g, lambda x: gauss(x, 2.0, 1.0))
    tau = Affine(1.5, domain=(0.0, math.inf))
    states = run_parallel(f, ExpDecay(0.5), tau, 20)
    direct = f
    for st in states[1:]:
        direct, growth = step_density(direct, ExpDecay(0.5), tau)
        assert st.global_growth(st.t - 1, states[st.t - 1].weights) == pytest.approx(growth, rel=1e-12)
        assert distance(reconstruct(st), direct, "L1Density") < 1e-12


def test_zero_mass_interval_is_skipped(grid):
    f = from_pdf(grid, lambda x: gauss(x, -2.0, 0.5) * (x < 0))
    st0 = split_initial(f, tau=TANH)
    assert not st0.processes[2].active and st0.weights[2] == 0.0
    with pytest.raises(EmptyIntervalMass):
        split_initial(f, tau=TANH, strict=True)
    states = run_parallel(f, B_FERTILITY["a"], TANH, 5)
    assert states[-1].weights[2] == 0.0
    assert math.isnan(states[-1].growth_at(0)[2])


def test_fixed_points_must_be_nodes():
    g = build_grid((-5.0, 5.0), 100)
    with pytest.raises(ValueError):
        split_initial(from_pdf(g, mixture_b), tau=TANH)


@pytest.mark.parametrize("case", ["a", "b", "c"])
def test_reconstruction_tracks_direct_run(case, f0):
    n = B_FERTILITY[case]
    states = run_parallel(f0, n, TANH, 50)
    direct = direct_path(f0, n, 50)
    for st in states:
        d = direct[st.t]
        assert distance(reconstruct(st), d, "L1Density") < 1e-6
        for p in st.processes:
            if p.active:
                outside = d.grid.nodes[~p.mask]
                assert p.density.grid.nodes.min() >= p.interval.left
                assert p.density.grid.nodes.max() <= p.interval.right
                assert outside.size == 0 or not np.any(p.interval.contains(outside) & (outside != p.interval.left)
                                                       & (outside != p.interval.right))
        if st.t:
            _, growth = step_density(direct[st.t - 1], n, TANH)
            assert st.global_growth(st.t - 1, states[st.t - 1].weights) == pytest.approx(growth, abs=1e-9)


def test_weights_follow_the_dominant_source(f0):
    states = run_parallel(f0, B_FERTILITY["b"], TANH, 200)
    w = states[-1].weights
    assert w[1] == pytest.approx(1.0, abs=1e-6) and w[2] == pytest.approx(0.0, abs=1e-6)
    # weights move monotonically toward the better interval
    assert np.all(np.diff([s.weights[1] for s in states]) >= -1e-15)


def test_equal_interval_growth_keeps_weights():
    # mirrored interval shapes with unequal masses grow at the same rate
    g = build_grid((-5.0, 5.0), 401, breakpoints=(-5.0, 0.0, 5.0))
    f = from_pdf(g, lambda x: 0.7 * gauss(x, -1.5, 1.0) * (x < 0) + 0.3 * gauss(x, 1.5, 1.0) * (x > 0))
    states = run_parallel(f, SkewGaussBump(0.0, 2.0), TANH, 30)
    w0 = states[0].weights
    assert w0[1] == pytest.approx(0.7, abs=1e-6)
    for st in states[1:]:
        assert st.growth_at(st.t - 1)[1] == pytest.approx(st.growth_at(st.t - 1)[2], rel=1e-12)
        assert np.allclose(st.weights, w0, atol=1e-12)


def test_normalized_growth_product_settles(f0):
    n = B_FERTILITY["a"]
    states = run_parallel(f0, n, TANH, 60)
    prod = normalized_growth_product(states, 2, n, TANH)
    tail = prod[19:]
    assert np.all(np.isfinite(tail)) and tail.min() > 0 and tail.max() < 10
    assert abs(tail[-1] - tail[-2]) < 1e-8 * tail[-1]
    assert np.ptp(tail[-10:]) < 1e-6


def test_normalized_growth_product_needs_a_source(f0):
    states = run_parallel(f0, B_FERTILITY["a"], TANH, 2)
    with pytest.raises(ValueError):
        normalized_growth_product(states, 0, B_FERTILITY["a"], TANH)


def test_write_parallel(tmp_path, f0):
    states = run_parallel(f0, B_FERTILITY["a"], TANH, 3)
    paths = write_parallel(states, tmp_path)
    assert (tmp_path / "interval_1" / "003.csv").exists()
    assert not (tmp_path / "interval_0").exists()
    rows = (tmp_path / "weights.csv").read_text().splitlines()
    assert rows[0] == "t,w_0,w_1,w_2,w_3,E_0,E_1,E_2,E_3"
    assert len(rows) == 5 and len(paths) == 9


@settings(max_examples=15, deadline=None)
@given(st.floats(0.5, 3.0), st.floats(0.5, 3.0))
def test_symmetric_split_gives_equal_halves(sd, bump):
    # mirror-symmetric start and fertility under an odd map
    g = build_grid((-5.0, 5.0), 401, breakpoints=(-5.0, 0.0, 5.0))
    f = from_pdf(g, lambda x: gauss(x, -1.5, sd) + gauss(x, 1.5, sd))
    n = SkewGaussBump(0.0, bump)
    states = run_parallel(f, n, TANH, 5)
    for st in states:
        assert st.weights[1] == pytest.approx(st.weights[2], abs=1e-10)
