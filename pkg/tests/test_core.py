import numpy as np
import pytest
from hypothesis import given, strategies as st

from convex_smooth.core import (ConvexFn, CornerFn, Domain, affine, build_exhaustion,
                                central_gradient, eval_corner, sample_grid)
from convex_smooth.errors import EmptyDomain, EmptyGrid, RankDeficient
from convex_smooth.fixtures import power
from convex_smooth.verify import check_convex_midpoint


def test_exhaustion_of_the_line_is_centered_balls():
    ex = build_exhaustion(Domain.whole(1), 3)
    assert [s.m for s in ex.sets] == [1, 2, 3]
    for m, s in zip((1, 2, 3), ex.sets):
        x = np.array([[-m + 1e-9], [m - 1e-9], [-m], [m]])
        assert s.contains(x).tolist() == [True, True, False, False]


def test_exhaustion_of_square_drops_empty_first_set():
    ex = build_exhaustion(Domain.box([-1, -1], [1, 1]), 2)
    assert len(ex) == 1 and ex.sets[0].m == 2
    # dist > 1/2 to the boundary of (-1, 1)^2 means the open square (-1/2, 1/2)^2
    assert ex.sets[0].contains(np.array([[0.49, -0.49], [0.51, 0.0]])).tolist() == [True, False]


def test_exhaustion_single_ball():
    ex = build_exhaustion(Domain.whole(2), 1)
    assert len(ex) == 1
    assert ex.sets[0].contains(np.array([[0.8, 0.8], [0.6, 0.6]])).tolist() == [False, True]


def test_exhaustion_is_nested():
    assert build_exhaustion(Domain.whole(2), 4).check_nested()
    assert build_exhaustion(Domain.ball([0.0, 0.0], 3.0), 4).check_nested()


def test_exhaustion_empty_domain_raises():
    with pytest.raises(EmptyDomain):
        build_exhaustion(Domain.box([0.0], [0.1]), 3)


def test_sample_grid_on_line():
    g = sample_grid(Domain.whole(1), [[-1, 1]], 5)
    assert g.points[:, 0].tolist() == [-1.0, -0.5, 0.0, 0.5, 1.0]


def test_sample_grid_clips_to_open_box():
    g = sample_grid(Domain.box([-1, -1], [1, 1]), [[-2, 2], [-2, 2]], 5)
    assert g.points.tolist() == [[0.0, 0.0]]


def test_sample_grid_clips_to_sublevel():
    sub = Domain.sublevel(power(2), 1.0)
    g = sample_grid(sub, [[-2, 2]], 9)
    assert g.points[:, 0].tolist() == [-0.5, 0.0, 0.5]


def test_sample_grid_empty_raises():
    with pytest.raises(EmptyGrid):
        sample_grid(Domain.box([5.0], [6.0]), [[-1, 1]], 3)


def test_corner_value_and_rank():
    c = CornerFn([[0.0], [2.0]], [0.0, -1.0])
    assert eval_corner(c, 3.0) == 5.0 and eval_corner(c, 0.0) == 0.0
    with pytest.raises(RankDeficient):
        CornerFn([[1.0], [1.0]], [0.0, 1.0])


@given(st.lists(st.floats(-3, 3), min_size=2, max_size=2), st.floats(0, 10),
       st.lists(st.floats(-5, 5), min_size=2, max_size=2))
def test_corner_with_zero_offsets_is_positively_homogeneous(s, lam, x):
    c = CornerFn([s, [0.0, 1.0], [1.0, -1.0]], [0.0, 0.0, 0.0], check_rank=False)
    x = np.array(x)
    assert np.isclose(c(lam * x), lam * c(x), rtol=1e-12, atol=1e-9)


def test_gradient_matches_central_differences():
    f = power(4, dim=2)
    X = np.random.default_rng(0).uniform(-2, 2, (50, 2))
    assert np.max(np.abs(f.gradients(X) - central_gradient(f.values, X))) < 1e-6


def test_affine_is_convex_and_has_constant_gradient():
    f = affine([1.0, -2.0], 3.0)
    X = np.random.default_rng(1).normal(size=(20, 2))
    assert check_convex_midpoint(f, X)["count"] == 0
    assert np.all(f.gradients(X) == [1.0, -2.0])


def test_single_point_and_batch_evaluation():
    f = ConvexFn(lambda X: np.sum(X * X, axis=1), 2)
    assert f([1.0, 2.0]) == 5.0
    assert f(np.array([[1.0, 0.0], [0.0, 3.0]])).tolist() == [1.0, 9.0]


def test_domain_distances():
    box = Domain.box([-1, -1], [1, 1])
    assert box.dist_to_boundary(np.array([[0.5, 0.0]]))[0] == 0.5
    ball = Domain.ball([0.0, 0.0], 2.0)
    assert ball.dist_to_boundary(np.array([[1.0, 0.0]]))[0] == 1.0
    poly = Domain.polytope([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]], [1, 1, 1, 1])
    assert np.isclose(poly.dist_to_boundary(np.array([[0.25, 0.0]]))[0], 0.75)
    lo, hi = poly.bounds()
    assert np.allclose(lo, -1) and np.allclose(hi, 1)
