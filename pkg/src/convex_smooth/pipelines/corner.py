"""Corner under-approximation and strongly convex smoothing of corners."""

from __future__ import annotations

import numpy as np

from ..core import ConvexFn, CornerFn, Domain, affine_values, lattice
from ..errors import BudgetExceeded, InvalidEpsilon, RankDeficient
from ..regularizers import heat_smooth_relu
from ..smooth_max import SmoothAbs, SmoothMaxParams, smooth_max2, smooth_max2_partials


def _check_eps(eps):
    if not np.isfinite(eps) or eps <= 0:
        raise InvalidEpsilon(f"epsilon must be positive, got {eps}")
    return float(eps)


def _as_region(K, dim):
    if isinstance(K, Domain) or hasattr(K, "contains"):
        return K
    arr = np.asarray(K, dtype=float)
    if dim == 1 and arr.shape == (2,):
        return Domain.interval(arr[0], arr[1])
    return Domain.box(arr[:, 0], arr[:, 1])


def smooth_corner(slopes, offsets, eps, variant="compact"):
    """Right-nested smooth maximum of the affine pieces, node parameter ``eps / (2m)``.

    The result lies between the corner and the corner plus ``eps / 2``.
    """
    slopes = np.atleast_2d(np.asarray(slopes, dtype=float))
    offsets = np.atleast_1d(np.asarray(offsets, dtype=float))
    m = slopes.shape[0]
    params = SmoothMaxParams(SmoothAbs(_check_eps(eps) / (2 * m), variant))

    def func(X):
        V = affine_values(X, slopes, offsets)
        acc = V[:, -1]
        for j in range(m - 2, -1, -1):
            acc = smooth_max2(params, V[:, j], acc)
        return acc

    def grad(X):
        V = affine_values(X, slopes, offsets)
        acc = V[:, -1]
        dacc = np.broadcast_to(slopes[-1], X.shape).copy()
        for j in range(m - 2, -1, -1):
            a, b = smooth_max2_partials(params, V[:, j], acc)
            dacc = a[:, None] * slopes[j][None, :] + b[:, None] * dacc
            acc = smooth_max2(params, V[:, j], acc)
        return dacc

    fn = ConvexFn(func, slopes.shape[1], grad=grad, smoothness="Cinf",
                  name=f"smooth_corner[{m}]")
    fn.slopes, fn.offsets, fn.epsilon = slopes, offsets, float(eps)
    return fn


def tangent_planes(f, points):
    G = f.gradients(points)
    return G, f.values(points) - np.sum(G * points, axis=1)


def corner_underapprox_on_compact(f, K, eps, max_points=4096, seed=0, check_points=1001):
    """Max of tangent planes of ``f - eps`` with ``f - 2 eps <= max h_j`` sampled on ``K``.

    In one dimension the tangency points are ``m`` equally spaced points of
    ``K`` (the midpoint when ``m = 1``) and ``m`` grows until the bound holds on
    ``check_points`` points. In higher dimension they are jittered lattice
    points of the bounding box of ``K``. Since tangent planes lie below a
    convex function, ``max h_j <= f - eps`` holds everywhere.

    The result is a :class:`CornerFn` without the rank requirement (it may
    have more pieces than ``d + 1``); ``m`` and ``residual`` are attached.

    Raises
    ------
    BudgetExceeded
        If more than ``max_points`` tangency points would be needed.
    """
    eps = _check_eps(eps)
    d = f.dim
    K = _as_region(K, d)
    lo, hi = K.bounds()
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    if d == 1:
        xs = np.linspace(lo[0], hi[0], check_points).reshape(-1, 1)
    else:
        per = max(3, int(round(check_points ** (1.0 / d))))
        xs, _ = lattice(lo, hi, per)
        xs = xs[K.contains(xs) | (np.abs(K.dist_to_boundary(xs)) < 1e-12)] if hasattr(K, "dist_to_boundary") else xs
    target = f.values(xs) - eps
    rng = np.random.default_rng(seed)
    m, residual = 1, np.inf
    while True:
        if d == 1:
            pts = np.array([[0.5 * (lo[0] + hi[0])]]) if m == 1 else np.linspace(lo[0], hi[0], m).reshape(-1, 1)
        else:
            q = m + 1
            pts, _ = lattice(lo, hi, q)
            pts = pts + rng.uniform(-0.01, 0.01, pts.shape) * (hi - lo) / (q - 1)
            pts = np.clip(pts, lo, hi)
            if not f.domain.is_whole:
                pts = pts[f.domain.contains(pts)]
        if pts.shape[0] > max_points:
            raise BudgetExceeded(f"more than {max_points} tangency points needed", residual=residual)
        slopes, offsets = tangent_planes(f, pts)
        offsets = offsets - eps
        corner = CornerFn(slopes, offsets, check_rank=False)
        residual = float(np.max(target - corner.values(xs)))
        if residual <= eps:
            corner.m = pts.shape[0]
            corner.residual = residual
            corner.tangency_points = pts
            return corner
        m = m + 1 if m < 64 else int(m * 1.25) + 1


def strongly_convex_approx_corner(corner, eps):
    """C^inf strongly convex ``G`` with ``corner <= G <= corner + eps + d eps / 2``.

    The ``d + 1`` pieces are normalized by the affine change of variables
    ``z_k = <l_k - l_0, x> + b_k - b_0`` so that
    ``corner = <l_0, x> + b_0 + max(0, z_1, ..., z_d)``. With ``alpha`` the heat
    smoothing of ``max(., 0)`` (width chosen so ``alpha <= max(., 0) + eps``) and
    ``M`` the heat smooth maximum with parameter ``eps``, the construction is
    ``G_0 = 0``, ``G_k = M(G_{k-1}, alpha(z_k))``.

    Raises
    ------
    RankDeficient
        If the normalization system is singular (condition number above 1e8).
    """
    eps = _check_eps(eps)
    slopes, offsets = corner.slopes, corner.offsets
    d = slopes.shape[1]
    if slopes.shape[0] != d + 1:
        raise RankDeficient(f"need {d + 1} pieces in dimension {d}, got {slopes.shape[0]}")
    Z = slopes[1:] - slopes[0]
    zoff = offsets[1:] - offsets[0]
    if np.linalg.cond(Z) > 1e8:
        raise RankDeficient("affine normalization of the corner is singular")
    alpha = heat_smooth_relu(np.pi * eps ** 2)
    params = SmoothMaxParams.heat(eps)

    def func(X):
        z = affine_values(X, Z, zoff)
        G = np.zeros(X.shape[0])
        for k in range(d):
            G = smooth_max2(params, G, alpha.scalar(z[:, k]))
        return G + affine_values(X, slopes[:1], offsets[:1])[:, 0]

    def grad(X):
        z = affine_values(X, Z, zoff)
        G = np.zeros(X.shape[0])
        dG = np.zeros(X.shape)
        for k in range(d):
            az = alpha.scalar(z[:, k])
            a, b = smooth_max2_partials(params, G, az)
            dG = a[:, None] * dG + (b * alpha.deriv(z[:, k]))[:, None] * Z[k][None, :]
            G = smooth_max2(params, G, az)
        return dG + slopes[0][None, :]

    fn = ConvexFn(func, d, grad=grad, smoothness="Cinf", name="strongly_convex_corner")
    fn.error_bound = eps + d * eps / 2.0
    fn.epsilon = eps
    return fn
