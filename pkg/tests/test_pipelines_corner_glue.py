import numpy as np
import pytest

from convex_smooth.core import CornerFn, Domain, affine, build_exhaustion, from_scalar
from convex_smooth.dsl import parse_function
from convex_smooth.fixtures import power
from convex_smooth.pipelines import (corner_underapprox_on_compact, glue_global,
                                     global_underapprox, strongly_convex_approx_corner)
from convex_smooth.regularizers import heat_smooth_relu
from convex_smooth.verify import check_convex_triples, second_differences

from convex_smooth.core import sample_grid


def test_square_on_interval_needs_five_tangents(square):
    c = corner_underapprox_on_compact(square, Domain.interval(-1.0, 1.0), 0.1)
    assert c.m == 5
    x = np.linspace(-1, 1, 1001).reshape(-1, 1)
    gap = square.values(x) - c.values(x)
    # tangents of x^2 - eps at spacing 1/2 leave a gap of eps + 1/16
    assert np.max(gap) == pytest.approx(0.1 + 0.0625, abs=1e-12)
    assert np.all(gap >= 0.1 - 1e-12)


def test_affine_needs_one_tangent():
    f = from_scalar(lambda x: 2 * x + 1, lambda x: 2 + 0 * x)
    c = corner_underapprox_on_compact(f, Domain.interval(-1.0, 1.0), 0.1)
    assert c.m == 1 and c.residual == pytest.approx(0.0, abs=1e-12)
    x = np.linspace(-5, 5, 11).reshape(-1, 1)
    assert np.allclose(c.values(x), f.values(x) - 0.1)


def test_l1_norm_on_square():
    f = parse_function({"op": "sum", "of": [{"op": "abs", "of": {"op": "var", "index": 0}},
                                            {"op": "abs", "of": {"op": "var", "index": 1}}]}, 2)
    c = corner_underapprox_on_compact(f, Domain.box([-1, -1], [1, 1]), 0.2)
    X = sample_grid(Domain.whole(2), [[-1, 1], [-1, 1]], 41).points
    resid = f.values(X) - c.values(X)
    assert np.max(resid) <= 0.4 + 1e-12
    Y = np.random.default_rng(1).uniform(-5, 5, (1000, 2))
    assert np.all(c.values(Y) <= f.values(Y) - 0.2 + 1e-12)


def test_heat_corner_tail_in_one_dimension():
    G = strongly_convex_approx_corner(CornerFn([[0.0], [1.0]], [0.0, 0.0]), 0.05)
    assert 0.0 < G(10.0) - 10.0 <= 0.1


def test_heat_corner_second_differences_one_dimension():
    G = strongly_convex_approx_corner(CornerFn([[0.0], [1.0]], [0.0, 0.0]), 1.0)
    sec = second_differences(G, np.array([[-5.0], [0.0], [5.0]]), 1e-3)
    assert np.all(sec > 0)


def test_heat_relu_log_curvature_is_finite_where_it_underflows():
    alpha = heat_smooth_relu(np.pi * 0.05 ** 2)
    x = np.array([-5.0, 0.0, 5.0])
    assert alpha.deriv2(x)[0] == 0.0
    assert np.all(np.isfinite(alpha.log_deriv2(x)))


@pytest.fixture(scope="module")
def glued_quartic():
    f = power(4)
    return f, glue_global(f, build_exhaustion(Domain.whole(1), 5), 0.1)


def test_glue_sandwich_for_quartic(glued_quartic):
    f, g = glued_quartic
    x = np.linspace(-4.5, 4.5, 2001).reshape(-1, 1)
    gap = f.values(x) - g.values(x)
    assert np.min(gap) >= 0.0 and np.max(gap) <= 0.2


def test_glue_value_at_zero(glued_quartic):
    _, g = glued_quartic
    assert -0.2 <= g(0.0) <= 0.0


def test_glue_stages_stabilize_bitwise(glued_quartic):
    _, g = glued_quartic
    x = np.linspace(-4.5, 4.5, 2001).reshape(-1, 1)
    for n in range(1, 5):
        inside = x[g.exhaustion.sets[n - 1].contains(x)]
        assert np.array_equal(g.stage_values(inside, n), g.stage_values(inside, n + 1))


def test_global_underapprox_square(square):
    g = global_underapprox(square, eps=0.2, m_max=11)
    x = np.linspace(-10, 10, 2001).reshape(-1, 1)
    gap = square.values(x) - g.values(x)
    assert np.min(gap) >= 0.0 and np.max(gap) <= 0.2


def test_global_underapprox_abs_is_smooth_at_zero(absval):
    g = global_underapprox(absval, eps=0.1, m_max=4)
    x = np.linspace(-3.5, 3.5, 1401).reshape(-1, 1)
    gap = absval.values(x) - g.values(x)
    assert np.min(gap) >= 0.0 and np.max(gap) <= 0.1
    h = 1e-3
    sec = (g(h) - 2 * g(0.0) + g(-h)) / h ** 2
    assert np.isfinite(sec) and sec < 1e3


def test_global_underapprox_keeps_strict_convexity():
    g = global_underapprox(power(4), eps=0.1, m_max=3)
    X = sample_grid(Domain.whole(1), [[-2.5, 2.5]], 501)
    out = check_convex_triples(g, X, seed=4)
    assert out["count"] == 0
    rng = np.random.default_rng(5)
    a, b = rng.uniform(-2.5, 2.5, (2, 500))
    t = rng.uniform(0.1, 0.9, 500)
    gap = (1 - t) * g(a) + t * g(b) - g((1 - t) * a + t * b)
    assert np.all(gap[np.abs(a - b) > 0.1] > 0)


def test_global_underapprox_lipschitz_is_local(absval):
    g = global_underapprox(absval, eps=0.1, m_max=4)
    x = np.linspace(-2, 2, 4001)
    slopes = np.abs(np.diff(g(x)) / np.diff(x))
    assert np.max(slopes) <= 1.0 + 1e-9
