"""Cross-cutting properties checked on every pipeline output."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from convex_smooth.core import CornerFn, Domain, augmented_rank, build_exhaustion, sample_grid
from convex_smooth.fixtures import power
from convex_smooth.pipelines import (Body, fine_c0, fine_c1, glue_global, patch_sublevel,
                                     smooth_body_outer, strongly_convex_approx_corner)
from convex_smooth.structure import support_corner_at
from convex_smooth.verify import (check_convex_triples, estimate_strong_convexity, grad_error,
                                  sup_error)


def recip(scale):
    return lambda X: scale / (1.0 + np.sum(X * X, axis=1))


def _outputs():
    line = sample_grid(Domain.whole(1), [[-4, 4]], 801)
    plane = sample_grid(Domain.whole(2), [[-2, 2], [-2, 2]], 41)
    corner = CornerFn([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [0.0, 0.0, 0.0])
    return {
        "glue": (glue_global(power(4), build_exhaustion(Domain.whole(1), 4), 0.1), line),
        "fine_c0": (fine_c0(power(2), recip(1.0), window=[[-4.0, 4.0]], grid=1001), line),
        "fine_c1": (fine_c1(power(2), recip(0.5), window=[[-4.0, 4.0]], grid=1001), line),
        "corner": (strongly_convex_approx_corner(corner, 0.1), plane),
        "patch": (patch_sublevel(power(2, dim=2), 1.0, lambda X: np.full(X.shape[0], 0.01)), plane),
        "body": (smooth_body_outer(Body.polytope([[-1, -1], [1, -1], [1, 1], [-1, 1]]), 0.1).fn,
                 plane),
    }


@pytest.fixture(scope="module")
def outputs():
    return _outputs()


@pytest.mark.parametrize("name", ["glue", "fine_c0", "fine_c1", "corner", "patch", "body"])
def test_every_output_is_convex(outputs, name):
    g, grid = outputs[name]
    assert check_convex_triples(g, grid, tol=1e-9, triples=10000, seed=1)["count"] == 0


def test_fine_output_keeps_a_curvature_floor(outputs):
    g, _ = outputs["fine_c0"]
    x = np.linspace(-3.5, 3.5, 141).reshape(-1, 1)
    assert estimate_strong_convexity(g, x, 1e-3) > 0.1


def test_heat_corner_keeps_a_curvature_floor():
    # at eps = 1 the floor is well above finite-difference noise
    corner = CornerFn([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [0.0, 0.0, 0.0])
    g = strongly_convex_approx_corner(corner, 1.0)
    X = sample_grid(Domain.whole(2), [[-1, 1], [-1, 1]], 21)
    assert estimate_strong_convexity(g, X, 1e-3, directions=16) > 1e-2


@pytest.mark.parametrize("name", ["fine_c0", "fine_c1"])
def test_fine_region_certificates(outputs, name):
    g, _ = outputs[name]
    regions = [c for c in g.certificates if c.region.startswith("C")]
    assert len(regions) >= g.schedule.stages
    assert all(c.passed for c in g.certificates)
    if name == "fine_c1":
        value = {c.region: c.bound for c in regions if c.kind == "value"}
        grad = {c.region: c.bound for c in regions if c.kind == "gradient"}
        # interior regions carry 3 eps_n on values and 5 eps_n on gradients
        assert value.keys() == grad.keys()
        inner = sorted(value)[:-1]
        assert all(grad[k] == pytest.approx(value[k] * 5 / 3) for k in inner)


@given(st.integers(0, 10_000))
def test_supporting_corner_rank_and_domination(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((2, 2))
    Q = A @ A.T + 0.1 * np.eye(2)
    from convex_smooth.core import ConvexFn
    f = ConvexFn(lambda X: 0.5 * np.einsum("ni,ij,nj->n", X, Q, X), 2, grad=lambda X: X @ Q)
    c = support_corner_at(f, rng.standard_normal(2), rng.standard_normal((4, 2)))
    assert augmented_rank(c.slopes) == c.k_plus_1
    X = 3 * rng.standard_normal((300, 2))
    assert np.all(c.values(X) <= f.values(X) + 1e-9 * (1 + np.abs(f.values(X))))


def test_equal_values_give_small_gradient_error(square):
    grid = sample_grid(Domain.whole(1), [[-2, 2]], 101)
    twin = power(2)
    assert sup_error(square, twin, grid) == 0.0
    assert grad_error(square, twin, grid) <= 1e-5
