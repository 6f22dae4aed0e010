import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from capflow.errors import ConfigError, DomainError, NoConvergence, NoFixedPoint
from capflow.functions import (
    Affine, Composite, ExpDecay, Flat, GaussBump, Kind, PolyExp, Power, PowerDecay,
    SkewGaussBump, Tabulated, TanhShift, check_transmission, derivative, evaluate,
    find_fixed_points, from_json, inverse, iterate_map,
)

C_TANH = 1 - math.tanh(5) / 5
TANH = TanhShift(C_TANH, domain=(-5.0, 5.0))


# -- point values -------------------------------------------------------------

def test_flat_value():
    assert evaluate(Flat(2.0), 7.0) == 2.0


def test_exp_decay_at_zero():
    assert evaluate(ExpDecay(0.5, 1.0), 0.0) == 1.0


def test_tanh_shift_origin_is_fixed():
    assert evaluate(TANH, 0.0) == 0.0


def test_outside_domain_raises():
    with pytest.raises(DomainError):
        Power(2.0)(0.5)
    with pytest.raises(DomainError):
        TANH(5.5)


def test_derivative_examples():
    assert derivative(Affine(1.5, 0.0), 3.0) == 1.5
    assert derivative(TANH, 0.0) == pytest.approx(C_TANH + 1.0, rel=1e-15)
    assert derivative(Power(2.0), 1.0) == 2.0


def test_inverse_examples():
    assert inverse(Affine(1.5, 0.0), 3.0) == 2.0
    assert inverse(Power(2.0), 16.0) == 4.0
    x = inverse(TANH, 0.0)
    assert abs(TANH(x)) <= 1e-12


def test_iterate_map_examples():
    assert iterate_map(Affine(1.5), 1.0, 3, "forward") == pytest.approx(3.375, rel=1e-15)
    assert iterate_map(Power(2.0), 16.0, 2, "inverse") == pytest.approx(2.0, rel=1e-15)
    assert iterate_map(Affine(1.5), 5.0, 0) == 5.0


def test_inverse_vectorized_matches_scalar():
    y = np.linspace(-4.9, 4.9, 37)
    xs = TANH.inverse(y)
    assert xs.shape == y.shape
    for yi, xi in zip(y, xs):
        assert TANH.inverse(float(yi)) == pytest.approx(xi, abs=1e-13)


def test_inverse_out_of_range_raises():
    with pytest.raises(DomainError):
        TANH.inverse(6.0)


def test_inverse_fails_loudly_for_flat_map():
    with pytest.raises((NoConvergence, DomainError)):
        Tabulated((0.0, 1.0, 2.0), (0.0, 0.0, 0.0)).inverse(0.5)


# -- fixed points ---------------------------------------------------------------

def test_affine_source_at_origin():
    d = find_fixed_points(Affine(1.5), (0.0, math.inf))
    assert [fp.location for fp in d.fixed_points] == [0.0]
    fp = d.fixed_points[0]
    assert fp.kind is Kind.SOURCE and fp.derivative_at == 1.5
    x0, x1 = d.intervals
    assert x0.empty and not x1.empty
    assert (x1.left, x1.right) == (0.0, math.inf)


def test_affine_sink_at_origin():
    d = find_fixed_points(Affine(0.5), (0.0, math.inf))
    assert d.fixed_points[0].kind is Kind.SINK
    assert d.fixed_points[0].derivative_at == 0.5


def test_tanh_shift_has_three_fixed_points():
    d = find_fixed_points(TANH)
    locs = [fp.location for fp in d.fixed_points]
    assert np.allclose(locs, [-5.0, 0.0, 5.0], atol=1e-9)
    assert [fp.kind for fp in d.fixed_points] == [Kind.SINK, Kind.SOURCE, Kind.SINK]
    flags = [iv.empty for iv in d.intervals]
    assert flags == [True, False, False, True]


def test_identity_map_reports_tangent():
    d = find_fixed_points(Power(1.0))
    assert d.has_tangent


def test_no_fixed_point_raises():
    with pytest.raises(NoFixedPoint):
        find_fixed_points(Affine(1.0, 1.0), (0.0, 10.0))


def test_interior_fixed_point_between_probes():
    tau = Affine(2.0, -1.2345678901)
    d = find_fixed_points(tau, (-10.0, 10.0))
    assert d.fixed_points[0].location == pytest.approx(1.2345678901, abs=1e-12)


def test_interval_containment_partitions_domain():
    d = find_fixed_points(TANH)
    x = np.linspace(-5, 5, 1001)
    count = sum(iv.contains(x).astype(int) for iv in d.intervals)
    # shared endpoints are counted twice, every other point once
    assert np.all(count[(x != 0.0)] == 1)
    assert count[x == 0.0].item() == 2


# -- serialization ------------------------------------------------------------------

@pytest.mark.parametrize("spec", [
    Affine(1.5, 0.5), Power(1.2), TANH, ExpDecay(0.5, 2.0), PowerDecay(1.0, 2.5),
    GaussBump(0.0, 1.0), SkewGaussBump(0.0, 1.5, 1.0, 1.0, 0.02, domain=(-5.0, 5.0)),
    PolyExp(1.0, 2.0, 0.5), Flat(3.0), Tabulated((0.0, 1.0, 2.0), (0.0, 1.5, 2.0)),
    Composite((Flat(3.0), ExpDecay(0.5)), "product"),
])
def test_json_round_trip(spec):
    again = from_json(spec.to_json())
    x = np.linspace(max(spec.domain[0], -4), min(spec.domain[1], 4), 9)
    assert np.array_equal(again(x), spec(x))
    assert again.to_json() == spec.to_json()


def test_json_infinite_bound_spelling():
    spec = from_json({"family": "ExpDecay", "params": {"m": 0.5}, "domain": [0, "inf"]})
    assert spec.domain == (0.0, math.inf)


def test_json_unknown_family():
    with pytest.raises(ConfigError):
        from_json({"family": "Spline", "params": {}})


def test_json_bad_param():
    with pytest.raises(ConfigError):
        from_json({"family": "Flat", "params": {"D": 1.0}})


def test_check_transmission_rejects_map_that_leaves_interval():
    with pytest.raises(ConfigError):
        check_transmission(Tabulated((0.0, 1.0, 2.0), (0.1, 1.0, 2.0)))
    check_transmission(TANH)


# -- composite ------------------------------------------------------------------------

def test_composite_product_derivatives():
    f = Composite((GaussBump(0.3, 2.0), ExpDecay(0.7, 1.0, domain=(-math.inf, math.inf))))
    x = np.linspace(-2, 2, 11)
    g = lambda v: np.exp(-(v - 0.3) ** 2 / 4.0) * np.exp(-0.7 * v)
    h = 1e-5
    assert np.allclose(f(x), g(x), rtol=1e-14)
    assert np.allclose(f.deriv(x), (g(x + h) - g(x - h)) / (2 * h), rtol=1e-8)
    assert np.allclose(f.deriv2(x), (g(x + h) - 2 * g(x) + g(x - h)) / h**2, rtol=1e-4, atol=1e-6)


def test_skew_bump_second_derivative_matches_differences():
    f = SkewGaussBump(-1.0, 2.0, 0.7, 1.3, 0.1)
    x = np.linspace(-5, 5, 21)
    h = 1e-5
    fd = (f.deriv(x + h) - f.deriv(x - h)) / (2 * h)
    assert np.allclose(f.deriv2(x), fd, rtol=1e-6, atol=1e-9)


# -- properties -------------------------------------------------------------------------

TRANSMISSIONS = [
    Affine(1.5, 0.0, domain=(0.0, math.inf)),
    Affine(0.5, 0.0, domain=(0.0, math.inf)),
    Affine(1.5, 0.5),
    Power(2.0),
    Power(1.2),
    TANH,
]

FERTILITIES = [
    ExpDecay(0.5, 1.0),
    PowerDecay(1.0, 2.5),
    GaussBump(0.0, 1.0, 1.0),
    SkewGaussBump(0.0, 1.5, 1.0, 1.0, 0.02),
    SkewGaussBump(-4.0, 3.0, 0.5, 1.0, 0.0),
    PolyExp(1.0, 2.0, 0.5),
]


def _interior(spec, u):
    lo, hi = spec.domain
    lo = lo if math.isfinite(lo) else -20.0
    hi = hi if math.isfinite(hi) else lo + 40.0
    return lo + (hi - lo) * (0.001 + 0.998 * u)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(TRANSMISSIONS), st.floats(0, 1), st.floats(0, 1))
def test_transmission_increasing_and_invertible(tau, u, v):
    x, y = sorted((_interior(tau, u), _interior(tau, v)))
    if y > x:
        assert tau(y) > tau(x)
    back = tau.inverse(tau(x))
    assert back == pytest.approx(x, rel=1e-10, abs=1e-10)


@pytest.mark.parametrize("spec", TRANSMISSIONS + FERTILITIES)
def test_derivative_matches_central_differences(spec):
    rng = np.random.default_rng(7)
    x = _interior(spec, rng.uniform(size=100))
    h = 1e-6 * np.maximum(1.0, np.abs(x))
    fd = (spec(x + h) - spec(x - h)) / (2 * h)
    scale = np.maximum(np.abs(fd), np.abs(spec(x)) * 1e-3)
    assert np.all(np.abs(spec.deriv(x) - fd) <= 1e-6 * np.maximum(scale, 1e-12) + 1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 0.99), st.sampled_from([0, 1]))
def test_inverse_iterates_move_monotonically_to_the_source(u, side):
    # inverse iterates of the tanh map retreat from the sinks toward the source at 0
    x = -5.0 + 5.0 * u if side == 0 else 5.0 * u
    seq = [x]
    for _ in range(40):
        seq.append(TANH.inverse(seq[-1]))
    diffs = np.diff(np.abs(seq))
    assert np.all(diffs <= 1e-15)
    assert abs(seq[-1]) < abs(seq[0])


@settings(max_examples=30, deadline=None)
@given(st.floats(1.05, 3.0), st.floats(-3.0, 3.0))
def test_affine_fixed_point_found(a, b):
    d = find_fixed_points(Affine(a, b), (-100.0, 100.0))
    assert d.fixed_points[0].location == pytest.approx(b / (1 - a), abs=1e-9)
    assert d.fixed_points[0].kind is Kind.SOURCE


def test_tabulated_derivative_uses_differences():
    xs = np.linspace(0, 2, 41)
    f = Tabulated(tuple(xs), tuple(xs**2))
    assert f.deriv(1.0) == pytest.approx(2.0, rel=1e-3)
    assert f.deriv(0.0) == pytest.approx(0.0, abs=1e-3)


def test_tail_limits():
    assert ExpDecay(0.5).limit("hi") == 0.0
    assert PowerDecay(0.5).limit("hi") == 0.0
    assert Flat(2.0).limit("hi") == 2.0
    assert SkewGaussBump(0.0, 1.0, 1.0, 1.0, 0.3).limit("lo") == 0.3
    assert TANH.limit("hi") == pytest.approx(5.0)
