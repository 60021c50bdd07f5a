import json

import numpy as np
import pytest

from convex_smooth.core import ConvexFn, Domain, affine, from_scalar, sample_grid
from convex_smooth.regularizers import heat_smooth_relu
from convex_smooth.verify import (Report, check_convex_midpoint, check_convex_triples,
                                  check_smoothmax_derivative_bound, estimate_lipschitz,
                                  estimate_strong_convexity, grad_error, sup_error)


def line(lo, hi, n):
    return sample_grid(Domain.whole(1), [[lo, hi]], n)


def quadratic(Q, b, c=0.0):
    Q = np.asarray(Q, dtype=float)
    b = np.asarray(b, dtype=float)
    return ConvexFn(lambda X: 0.5 * np.einsum("ni,ij,nj->n", X, Q, X) + X @ b + c, len(b),
                    grad=lambda X: X @ Q.T + b, smoothness="Cinf")


def test_midpoint_check_accepts_convex_and_flags_concave(square):
    g = line(-2, 2, 401)
    assert check_convex_midpoint(square, g)["count"] == 0
    concave = from_scalar(lambda x: -x * x)
    report = check_convex_midpoint(concave, g)
    assert report["count"] > 0 and report["worst"] > 0
    assert check_convex_triples(square, g)["count"] == 0


def test_strong_convexity_of_square_is_two(square):
    assert estimate_strong_convexity(square, line(-3, 3, 61), 1e-3) == pytest.approx(2.0, abs=1e-6)


def test_quartic_is_not_strongly_convex_near_zero():
    quartic = from_scalar(lambda x: x ** 4)
    assert estimate_strong_convexity(quartic, line(-0.1, 0.1, 21), 1e-3) < 1e-5


def test_heat_relu_curvature_at_zero():
    f = heat_smooth_relu(1.0 / (4.0 * np.pi))
    assert estimate_strong_convexity(f, np.array([[0.0]]), 1e-3) == pytest.approx(1.0, abs=1e-4)


def test_sup_and_grad_error(square):
    g = line(-1, 1, 201)
    shifted = square.shifted(0.25)
    assert sup_error(square, shifted, g) == pytest.approx(0.25, abs=1e-15)
    assert grad_error(square, shifted, g) < 1e-8
    tilted = square.plus_linear([0.5])
    assert grad_error(square, tilted, g) == pytest.approx(0.5, abs=1e-8)


def test_derivative_bound_equal_arguments(square):
    out = check_smoothmax_derivative_bound(square, square, 0.3, line(-2, 2, 401))
    assert out["passed"] and out["worst_excess"] <= 1e-8


def test_derivative_bound_square_against_line(square):
    out = check_smoothmax_derivative_bound(square, from_scalar(lambda x: x), 0.3, line(-2, 3, 1001))
    assert out["passed"] and out["worst_ratio"] <= 1.0 + 1e-6


@pytest.mark.parametrize("variant", ["compact", "heat"])
def test_derivative_bound_random_quadratics(variant):
    rng = np.random.default_rng(7)
    grid = sample_grid(Domain.whole(2), [[-2, 2], [-2, 2]], 21)
    for _ in range(100):
        pair = []
        for _ in range(2):
            A = rng.standard_normal((2, 2))
            pair.append(quadratic(A @ A.T, rng.standard_normal(2), rng.standard_normal()))
        out = check_smoothmax_derivative_bound(pair[0], pair[1], 0.3, grid, variant=variant)
        assert out["passed"], out


def test_lipschitz_estimates(absval, square):
    assert estimate_lipschitz(absval, line(-1, 1, 201)) == pytest.approx(1.0)
    assert estimate_lipschitz(square, line(-1, 1, 201)) == pytest.approx(2.0 - 0.01)
    g = sample_grid(Domain.whole(2), [[-1, 1], [-1, 1]], 11)
    assert estimate_lipschitz(affine([3.0, 4.0]), g) == pytest.approx(5.0)


def test_report_json_is_deterministic():
    def build():
        r = Report(sup_error=0.125, seed=3, grid={"n": 5})
        r.add("B_1", 0.5, 0.25)
        r.add("B_2", 0.5, float(np.float64(0.75)))
        r.extra["array"] = np.arange(3.0)
        r.extra["nan"] = float("nan")
        return r
    a, b = build().to_json(), build().to_json()
    assert a == b
    doc = json.loads(a)
    assert doc["passed"] is False
    assert [c["passed"] for c in doc["certificates"]] == [True, False]
    assert doc["extra"] == {"array": [0.0, 1.0, 2.0], "nan": "nan"}
