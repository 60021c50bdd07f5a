import numpy as np
import pytest
from hypothesis import given, strategies as st

from convex_smooth.core import Domain, affine, from_scalar
from convex_smooth.errors import DomainTooSmall, InvalidEpsilon, LipschitzTooSmall
from convex_smooth.fixtures import power
from convex_smooth.regularizers import (MollifierParams, MoreauParams, heat_smooth_relu,
                                        lipschitz_extend, mollify, moreau)
from convex_smooth.verify import check_convex_midpoint, estimate_lipschitz

# int |s| bump_{0.3}(s) ds by adaptive quadrature (0.3 * 0.33445399770997536)
MOLLIFIED_ABS_AT_0 = 0.10033619931299261
# int_0^inf s H(s) ds with variance 2 eps = 1/(2 pi), i.e. 1/(2 pi)
HEAT_RELU_AT_0 = 0.15915494309189535


def test_mollified_abs_values(absval):
    m = mollify(absval, MollifierParams(0.3))
    assert m(1.0) == 1.0
    assert m(-0.3) == 0.3
    assert m(0.0) == pytest.approx(MOLLIFIED_ABS_AT_0, abs=1e-12)
    assert 0 < m(0.0) <= 0.3


def test_mollify_fixes_affine_functions():
    f = affine([2.5], -1.0)
    m = mollify(f, MollifierParams(0.2))
    x = np.linspace(-5, 5, 101)
    assert np.allclose(m(x), f(x), rtol=0, atol=1e-13)
    f2 = affine([1.0, -2.0], 0.5)
    m2 = mollify(f2, MollifierParams(0.2, 4))
    X = np.random.default_rng(0).normal(size=(30, 2))
    assert np.allclose(m2(X), f2(X), atol=1e-13)


def test_mollify_is_convex_lipschitz_and_above(absval):
    m = mollify(absval, MollifierParams(0.3))
    x = np.linspace(-2, 2, 2001)
    assert check_convex_midpoint(m, x.reshape(-1, 1), tol=1e-9)["count"] == 0
    assert estimate_lipschitz(m, x.reshape(-1, 1)) == pytest.approx(1.0, abs=1e-9)
    assert np.all(m(x) >= np.abs(x)) and np.all(m(x) <= np.abs(x) + 0.3)


def test_mollify_preserves_order(square):
    upper = from_scalar(lambda x: x * x + np.abs(x))
    p = MollifierParams(0.25)
    x = np.linspace(-3, 3, 1201)
    assert np.all(mollify(square, p)(x) <= mollify(upper, p)(x))


def test_mollified_gradients_converge(square):
    x = np.linspace(-2, 2, 401)
    errs = [np.max(np.abs(mollify(power(4), MollifierParams(e)).gradient(x) - 4 * x ** 3))
            for e in (0.1, 0.01)]
    assert errs[1] < errs[0]


def test_mollify_in_two_dimensions_stays_in_band():
    f = from_scalar(np.abs)
    g = power(2, dim=2)
    m = mollify(g, MollifierParams(0.1, 4))
    X = np.random.default_rng(2).uniform(-2, 2, (200, 2))
    d = m(X) - g(X)
    assert np.all(d >= -1e-12) and np.all(d <= 0.1 ** 2 * 2 + 1e-12)
    assert f.dim == 1


def test_mollify_near_domain_boundary_raises():
    f = from_scalar(lambda x: x * x, domain=Domain.interval(-1, 1))
    m = mollify(f, MollifierParams(0.3))
    assert np.isfinite(m(0.5))
    with pytest.raises(DomainTooSmall):
        m(0.9)


def test_mollifier_params_validation():
    with pytest.raises(InvalidEpsilon):
        MollifierParams(0.0)
    with pytest.raises(ValueError):
        MollifierParams(0.1, slopes="other")


def test_heat_relu_values():
    h = heat_smooth_relu(1 / (4 * np.pi))
    assert h.deriv2(0.0) == pytest.approx(1.0, rel=1e-14)
    assert h(0.0) == pytest.approx(HEAT_RELU_AT_0, abs=1e-14)
    assert abs(heat_smooth_relu(0.01)(10.0) - 10.0) <= 1e-12
    with pytest.raises(InvalidEpsilon):
        heat_smooth_relu(-1.0)


@pytest.mark.parametrize("eps", [0.01, 1 / (4 * np.pi), 1.0])
def test_heat_relu_second_derivative_matches_differences(eps):
    h = heat_smooth_relu(eps)
    x = np.linspace(-1.5, 1.5, 301)
    step = 1e-4
    fd = (h(x + step) - 2 * h(x) + h(x - step)) / step ** 2
    exact = np.exp(-x * x / (4 * eps)) / np.sqrt(4 * np.pi * eps)
    assert np.max(np.abs(fd - exact)) <= 1e-4 * (1 + np.max(exact))
    assert np.all(h.deriv2(x) > 0)


def test_moreau_of_abs_is_huber(absval):
    m = moreau(absval, MoreauParams(1.0))
    assert m(0.5) == pytest.approx(0.125, abs=1e-10)
    assert m(2.0) == pytest.approx(1.5, abs=1e-10)
    assert m(0.0) == pytest.approx(0.0, abs=1e-10)


def test_moreau_increases_to_f_as_lambda_shrinks(absval):
    x = np.linspace(-3, 3, 61)
    prev = None
    for lam in (2.0, 1.0, 0.5, 0.1):
        v = moreau(absval, MoreauParams(lam))(x)
        assert np.all(v <= np.abs(x) + 1e-12)
        if prev is not None:
            assert np.all(v >= prev - 1e-10)
        prev = v


def test_moreau_in_two_dimensions_matches_separable_huber():
    f = from_scalar(np.abs)
    g = moreau(type(f)(lambda X: np.abs(X[:, 0]) + np.abs(X[:, 1]), 2), MoreauParams(1.0))
    X = np.array([[0.5, 2.0], [0.0, -0.25]])
    huber = lambda t: np.where(np.abs(t) <= 1, t * t / 2, np.abs(t) - 0.5)  # noqa: E731
    assert np.allclose(g(X), huber(X[:, 0]) + huber(X[:, 1]), atol=1e-8)


def test_lipschitz_extension_examples(square):
    g = lipschitz_extend(square, Domain.interval(-1, 1), 2.0)
    assert g(2.0) == 3.0 and g(0.5) == 0.25
    f = affine([1.5], 0.25)
    h = lipschitz_extend(f, Domain.interval(-1, 1), 2.0)
    x = np.linspace(-1, 1, 201)
    assert np.array_equal(h(x), f(x))
    # the infimum runs over B only, so away from B the extension grows at rate L
    assert h(3.0) == f(1.0) + 2.0 * 2.0
    with pytest.raises(LipschitzTooSmall):
        lipschitz_extend(square, Domain.interval(-1, 1), 1.0)


@given(st.floats(0.5, 4.0), st.floats(2.0, 8.0))
def test_lipschitz_extension_scales_with_function_and_constant(s, L):
    f = from_scalar(lambda x: x * x, lambda x: 2 * x)
    sf = from_scalar(lambda x: s * x * x, lambda x: 2 * s * x)
    B = Domain.interval(-1, 1)
    x = np.linspace(-4, 4, 81)
    g = lipschitz_extend(f, B, L)
    gs = lipschitz_extend(sf, B, s * L)
    assert np.allclose(gs(x), s * g(x), rtol=1e-12, atol=1e-12)
    assert estimate_lipschitz(g, x.reshape(-1, 1)) <= L * (1 + 1e-12)


def test_lipschitz_extension_in_two_dimensions():
    f = power(2, dim=2)
    B = Domain.ball([0.0, 0.0], 1.0)
    g = lipschitz_extend(f, B, 2.0)
    inside = np.array([[0.2, 0.3], [-0.5, 0.1]])
    assert np.allclose(g(inside), f(inside), atol=1e-9)
    assert g(np.array([2.0, 0.0])) == pytest.approx(3.0, abs=1e-6)
    X = np.random.default_rng(3).uniform(-3, 3, (60, 2))
    assert estimate_lipschitz(g, X) <= 2.0 + 1e-6
