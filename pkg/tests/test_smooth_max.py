import numpy as np
import pytest
from hypothesis import given, strategies as st

from convex_smooth.core import Domain, from_scalar
from convex_smooth.errors import DomainMismatch, EmptyList, InvalidEpsilon
from convex_smooth.smooth_max import (SmoothMaxParams, ThetaTable, load_table, make_theta,
                                      make_theta_heat, save_table, smooth_max2, smooth_max2_fn,
                                      smooth_max2_partials, smooth_max_n)
from convex_smooth.verify import second_differences

# adaptive quadrature of the convolution integrals (scipy.integrate.quad, 1e-14)
THETA_HALF_AT_0 = 0.16722699885498768
THETA_HALF_AT_03 = 0.30674064328623346
HEAT_04_AT_01 = 0.41570772088950547

eps_st = st.sampled_from([0.01, 0.1, 1.0])
val_st = st.floats(-10, 10, allow_nan=False)


def test_compact_theta_is_abs_outside_support():
    th = make_theta(0.5)
    assert th(0.7) == 0.7 and th(-0.5) == 0.5


def test_compact_theta_even_and_matches_quadrature():
    th = make_theta(0.5)
    assert th(-0.3) == th(0.3)
    assert abs(th(0.0) - THETA_HALF_AT_0) <= 1e-10 * 0.5
    assert abs(th(0.3) - THETA_HALF_AT_03) <= 1e-10 * 0.5
    assert 0 < th(0.0) < 0.5


def test_compact_theta_slope_below_one_only_inside():
    th = make_theta(0.5)
    # 1 - |theta'| = 2 T(|t| / eps) is positive inside; in double precision it
    # rounds to 0 once T drops below 1e-17, so |theta'| < 1 is checked on |t| <= 0.8 eps
    assert np.all(th.table.tail(np.linspace(0, 0.99, 991)) > 0)
    t = np.linspace(-0.4, 0.4, 801)
    assert np.all(np.abs(th.deriv(t)) < 1)
    assert np.all(np.abs(th.deriv(np.array([0.5, 0.7, -3.0]))) == 1)


@given(st.floats(0.01, 2.0), st.floats(-5, 5), st.floats(-5, 5))
def test_theta_convex_lipschitz_even(eps, s, t):
    for th in (make_theta(eps), make_theta_heat(eps)):
        assert abs(th(t) - th(s)) <= abs(t - s) + 1e-12
        assert th(-t) == th(t)
        h = 1e-3
        assert th(t + h) - 2 * th(t) + th(t - h) >= -1e-12


def test_heat_theta_values():
    th = make_theta_heat(0.4)
    r = np.pi * 0.4 ** 2 / 16
    assert th(0.0) == pytest.approx(0.4, abs=1e-15)
    assert th.deriv2(0.0) == pytest.approx(2 / np.sqrt(4 * np.pi * r), rel=1e-14)
    assert th(0.1) == pytest.approx(HEAT_04_AT_01, abs=1e-13)
    assert 0.2 <= th.excess(10.0) <= 0.4


@given(st.floats(0.01, 2.0), st.floats(-20, 20))
def test_heat_theta_band_and_positive_curvature(eps, t):
    th = make_theta_heat(eps)
    assert abs(t) <= th(t) <= abs(t) + eps + 1e-15
    assert th.log_deriv2(t) > -np.inf


def test_invalid_epsilon():
    for bad in (0.0, -1.0, float("nan")):
        with pytest.raises(InvalidEpsilon):
            make_theta(bad)
        with pytest.raises(InvalidEpsilon):
            make_theta_heat(bad)


def test_smooth_max_examples():
    assert smooth_max2(SmoothMaxParams.compact(0.2), 5.0, 1.0) == 5.0
    assert 0 < smooth_max2(SmoothMaxParams.compact(1.0), 0.0, 0.0) <= 0.5
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=(2, 100))
    for p in (SmoothMaxParams.compact(0.3), SmoothMaxParams.heat(0.3)):
        assert np.array_equal(smooth_max2(p, x, y), smooth_max2(p, y, x))


@given(val_st, val_st, val_st, val_st, eps_st)
def test_smooth_max_properties(x, y, u, v, eps):
    p = SmoothMaxParams.compact(eps)
    M = lambda a, b: smooth_max2(p, a, b)  # noqa: E731
    m = max(x, y)
    # convexity (midpoint) in (x, y)
    assert M((x + u) / 2, (y + v) / 2) <= (M(x, y) + M(u, v)) / 2 + 1e-12 * (1 + abs(m))
    # sandwich
    assert m <= M(x, y) <= m + eps / 2 + 1e-15
    # exact max away from the diagonal
    if abs(x - y) >= eps:
        assert M(x, y) == m
    # symmetry
    assert M(x, y) == M(y, x)
    # 1-Lipschitz in the sup norm
    assert abs(M(x, y) - M(u, v)) <= max(abs(x - u), abs(y - v)) + 1e-12 * (1 + abs(m))
    # monotone in each argument, jointly
    if u >= x and v >= y:
        assert M(u, v) >= M(x, y) - 1e-15 * (1 + abs(m))


@given(val_st, val_st, eps_st)
def test_smooth_max_strictly_increasing_where_argument_matters(x, y, eps):
    p = SmoothMaxParams.compact(eps)
    th = p.theta
    d = 1e-6
    # strict increase in x where x > y - eps, in y where y > x - eps
    if x - y > -eps + d and abs(x) < 1e3:
        assert smooth_max2(p, x + d, y) > smooth_max2(p, x, y)
    if y - x > -eps + d and abs(y) < 1e3:
        assert smooth_max2(p, x, y + d) > smooth_max2(p, x, y)
    assert th.epsilon == eps


@given(val_st, val_st, eps_st)
def test_partial_derivatives_match_finite_differences(x, y, eps):
    p = SmoothMaxParams.compact(eps)
    a, b = smooth_max2_partials(p, x, y)
    assert 0 <= a <= 1 and 0 <= b <= 1 and a + b == pytest.approx(1.0)
    h = 1e-7 * max(eps, 1e-3)
    fd = (smooth_max2(p, x + h, y) - smooth_max2(p, x - h, y)) / (2 * h)
    assert abs(fd - a) <= 1e-6 + 1e-8 * abs(x) / h


def test_smooth_max_of_functions():
    f = from_scalar(lambda x: x, lambda x: np.ones_like(x), smoothness="Cinf")
    zero = from_scalar(lambda x: 0 * x, lambda x: 0 * x, smoothness="Cinf")
    M = smooth_max2_fn(SmoothMaxParams.compact(0.2), f, zero)
    assert M(1.0) == 1.0
    x = np.linspace(-3, 3, 601)
    th0 = make_theta(0.2)(0.0)
    assert np.array_equal(smooth_max2_fn(SmoothMaxParams.compact(0.2), f, f)(x), x + 0.5 * th0)
    sq = from_scalar(lambda x: x * x, lambda x: 2 * x, smoothness="Cinf")
    lin = from_scalar(lambda x: 1 - x, lambda x: -np.ones_like(x), smoothness="Cinf")
    M = smooth_max2_fn(SmoothMaxParams.compact(0.1), sq, lin)
    mx = np.maximum(x * x, 1 - x)
    assert np.all(M(x) >= mx) and np.all(M(x) <= mx + 0.05)


def test_smooth_max_domain_mismatch():
    f = from_scalar(np.abs)
    g = from_scalar(np.abs, domain=Domain.interval(-1, 1))
    with pytest.raises(DomainMismatch):
        smooth_max2_fn(SmoothMaxParams.compact(0.1), f, g)


def test_heat_max_keeps_half_the_curvature():
    # f'' = 2, g'' = 6: sampled second differences of the heat max stay above min/2 = 1
    f = from_scalar(lambda x: x * x, lambda x: 2 * x, smoothness="Cinf")
    g = from_scalar(lambda x: 3 * (x - 0.5) ** 2 - 0.2, lambda x: 6 * (x - 0.5), smoothness="Cinf")
    M = smooth_max2_fn(SmoothMaxParams.heat(0.3), f, g)
    sd = second_differences(M, np.linspace(-3, 3, 601).reshape(-1, 1), 1e-3)
    assert np.min(sd) >= 1.0 - 1e-4


def test_nested_max():
    f = from_scalar(lambda x: x, lambda x: np.ones_like(x), smoothness="Cinf")
    assert smooth_max_n(0.1, [f]) is f
    g = from_scalar(lambda x: -x, lambda x: -np.ones_like(x), smoothness="Cinf")
    assert smooth_max_n(0.4, [f, g])(3.0) == 3.0
    with pytest.raises(EmptyList):
        smooth_max_n(0.1, [])
    # tangents of x^2 - 0.1 at -1, 0, 1
    pts = [-1.0, 0.0, 1.0]
    tangents = [from_scalar(lambda x, a=a: a * a - 0.1 + 2 * a * (x - a),
                            lambda x, a=a: 2 * a + 0 * x, smoothness="Cinf") for a in pts]
    G = smooth_max_n(0.1, tangents)
    x = np.linspace(-1, 1, 1001)
    assert np.all(G(x) <= x * x - 0.05 + 1e-15)


def test_table_cache_round_trip(tmp_path):
    path = tmp_path / "theta.bin"
    save_table(path)
    t = load_table(path)
    ref = ThetaTable.compute()
    tau = np.linspace(0, 1, 777)
    assert np.array_equal(t.excess(tau), ref.excess(tau))
    raw = path.read_bytes()
    with pytest.raises(ValueError):
        ThetaTable.from_bytes(b"XXXXXXXX" + raw[8:])
    with pytest.raises(ValueError):
        ThetaTable.from_bytes(raw[:-8])
