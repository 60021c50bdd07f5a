"""Outer smooth approximation of convex bodies.

For a body ``C`` with distance function ``dist_C``, the function
``g = dist_C * bump_{eps/6} - eps/2`` is convex, 1-Lipschitz and satisfies
``dist_C - 2 eps/3 <= g <= dist_C - eps/3``, so ``D = {g <= 0}`` contains
``C`` and lies inside ``C + eps B``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq
from scipy.spatial import ConvexHull

from ..core import ConvexFn, as_points, lattice
from ..errors import DegenerateBody, InvalidEpsilon
from ..regularizers import MollifierParams, mollify
from ..verify import Certificate


def _segment_nearest(X, A, B):
    """Nearest points of segments ``[A_j, B_j]`` to each row of ``X``; shape ``(n, m, d)``."""
    AB = B - A
    L2 = np.maximum(np.sum(AB * AB, axis=1), 1e-300)
    t = np.einsum("nmd,md->nm", X[:, None, :] - A[None, :, :], AB) / L2
    t = np.clip(t, 0.0, 1.0)
    return A[None, :, :] + t[:, :, None] * AB[None, :, :]


def polytope_projection(V, X):
    """Exact nearest points of ``conv(V)`` to ``X`` (dimension at most 3)."""
    V = np.atleast_2d(np.asarray(V, dtype=float))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    d = V.shape[1]
    if V.shape[0] == 1:
        return np.repeat(V, X.shape[0], axis=0)
    if d == 1:
        return np.clip(X, V.min(), V.max())
    hull = ConvexHull(V)
    H = hull.equations
    inside = np.all(X @ H[:, :-1].T + H[:, -1] <= 1e-12, axis=1)
    out = X.copy()
    Y = X[~inside]
    if Y.shape[0] == 0:
        return out
    if d == 2:
        edges = hull.simplices
    else:
        edges = np.unique(np.sort(np.vstack([hull.simplices[:, [0, 1]], hull.simplices[:, [1, 2]],
                                             hull.simplices[:, [0, 2]]]), axis=1), axis=0)
    cand = _segment_nearest(Y, V[edges[:, 0]], V[edges[:, 1]])
    dist = np.linalg.norm(cand - Y[:, None, :], axis=2)
    if d == 3:
        # projections onto facet interiors
        tri = V[hull.simplices]
        normal = H[:, :-1]
        h = Y @ normal.T + H[:, -1]
        proj = Y[:, None, :] - h[:, :, None] * normal[None, :, :]
        a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
        v0, v1 = b - a, c - a
        v2 = proj - a[None]
        d00 = np.sum(v0 * v0, 1)
        d01 = np.sum(v0 * v1, 1)
        d11 = np.sum(v1 * v1, 1)
        d20 = np.einsum("nmd,md->nm", v2, v0)
        d21 = np.einsum("nmd,md->nm", v2, v1)
        den = d00 * d11 - d01 * d01
        bv = (d11 * d20 - d01 * d21) / den
        bw = (d00 * d21 - d01 * d20) / den
        ok = (bv >= 0) & (bw >= 0) & (bv + bw <= 1) & (h > 0)
        fdist = np.where(ok, np.abs(h), np.inf)
        cand = np.concatenate([cand, proj], axis=1)
        dist = np.concatenate([dist, fdist], axis=1)
    j = np.argmin(dist, axis=1)
    out[~inside] = cand[np.arange(Y.shape[0]), j]
    return out


def parabola_projection(X):
    """Nearest points of the epigraph ``{y >= x^2}``, from the cubic normal equation."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = X.copy()
    for i, (x, y) in enumerate(X):
        if y >= x * x:
            continue
        # d/dt [(t - x)^2 + (t^2 - y)^2] / 2 = 2t^3 + (1 - 2y)t - x
        roots = np.roots([2.0, 0.0, 1.0 - 2.0 * y, -x])
        t = roots[np.abs(roots.imag) < 1e-9].real
        k = np.argmin((t - x) ** 2 + (t * t - y) ** 2)
        out[i] = (t[k], t[k] * t[k])
    return out


@dataclass
class Body:
    """Convex body as a polytope (vertices) or a sublevel set ``{fn <= level}``."""

    kind: str
    dim: int
    vertices: Optional[np.ndarray] = None
    fn: Optional[ConvexFn] = None
    level: float = 0.0
    projection: Optional[Callable] = None

    @classmethod
    def polytope(cls, vertices):
        V = np.atleast_2d(np.asarray(vertices, dtype=float))
        if V.size == 0 or not np.all(np.isfinite(V)):
            raise DegenerateBody("a polytope needs finitely many finite vertices")
        if V.shape[1] > 3:
            raise DegenerateBody("polytope distances are implemented up to dimension 3")
        return cls("polytope", V.shape[1], vertices=V,
                   projection=lambda X: polytope_projection(V, X))

    @classmethod
    def point(cls, p):
        return cls.polytope(np.atleast_2d(p))

    @classmethod
    def sublevel(cls, fn, level=0.0, projection=None):
        return cls("sublevel", fn.dim, fn=fn, level=float(level), projection=projection)

    def contains(self, X, tol=0.0):
        X = as_points(X, self.dim)[0]
        if self.kind == "sublevel":
            return self.fn.values(X) <= self.level + tol
        return self.distance().values(X) <= tol

    def distance(self):
        """``dist(., C)`` as a 1-Lipschitz convex function."""
        if self.projection is None:
            raise DegenerateBody("no projection available for this body")
        proj = self.projection

        def func(X):
            return np.linalg.norm(X - proj(X), axis=1)

        def grad(X):
            D = X - proj(X)
            n = np.linalg.norm(D, axis=1, keepdims=True)
            return np.where(n > 0, D / np.where(n > 0, n, 1.0), 0.0)

        return ConvexFn(func, self.dim, grad=grad, name=f"dist({self.kind})")


def parabola_epigraph():
    """The epigraph of ``x^2`` in the plane, with its exact projection."""
    fn = ConvexFn(lambda X: X[:, 0] ** 2 - X[:, 1], 2,
                  grad=lambda X: np.stack([2 * X[:, 0], -np.ones(X.shape[0])], axis=1),
                  smoothness="Cinf", name="x^2-y")
    return Body.sublevel(fn, 0.0, projection=parabola_projection)


def smooth_body_outer(C, eps, nodes=None):
    """Smooth convex body ``D = {g <= 0}`` with ``C`` inside ``D`` inside ``C + eps B``.

    ``g`` is the distance to ``C`` mollified at radius ``eps/6`` and lowered by
    ``eps/2``; it is 1-Lipschitz and lies between ``dist - 2 eps/3`` and
    ``dist - eps/3``.

    Returns
    -------
    Body
        A sublevel body with ``fn = g``, level 0, plus ``source`` and ``epsilon``.
    """
    if not np.isfinite(eps) or eps <= 0:
        raise InvalidEpsilon(f"epsilon must be positive, got {eps}")
    dist = C.distance()
    params = MollifierParams(eps / 6.0, nodes or (64 if C.dim == 1 else 4))
    g = mollify(dist, params).shifted(eps / 2.0)
    g.name = "smoothed_distance"
    D = Body.sublevel(g, 0.0)
    D.source = C
    D.epsilon = float(eps)
    D.distance_fn = dist
    return D


def zero_level_points(D, center, count=64, seed=0):
    """Points of ``{g = 0}`` along ``count`` rays from an interior ``center`` (brentq)."""
    d = D.dim
    center = np.asarray(center, dtype=float).reshape(d)
    if d == 1:
        V = np.array([[1.0], [-1.0]])
    else:
        ang = 2 * np.pi * np.arange(count) / count
        if d == 2:
            V = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        else:
            rng = np.random.default_rng(seed)
            V = rng.standard_normal((count, d))
            V /= np.linalg.norm(V, axis=1, keepdims=True)
    g = D.fn
    pts = []
    for v in V:
        def h(t):
            return g.values((center + t * v)[None, :])[0]
        hi = 1.0
        while h(hi) <= 0:
            hi *= 2.0
        t = brentq(h, 0.0, hi, xtol=1e-14, rtol=1e-15)
        pts.append(center + t * v)
    return np.array(pts)


def certify_body(D, grid_per_axis=200, boundary_points=64, box=None, seed=0):
    """Vertex containment, exclusion outside ``C + eps B`` and boundary gradient norms."""
    C, eps, g = D.source, D.epsilon, D.fn
    certs = []
    if C.kind == "polytope":
        gv = g.values(C.vertices)
        certs.append(Certificate("vertices inside D", 0.0, float(np.max(gv)), "containment"))
        center = C.vertices.mean(axis=0)
        if box is None:
            lo, hi = C.vertices.min(axis=0) - 1.0, C.vertices.max(axis=0) + 1.0
        else:
            lo, hi = np.asarray(box, dtype=float).T
    else:
        center = np.asarray(box, dtype=float).mean(axis=1) if box is not None else np.zeros(C.dim)
        lo, hi = np.asarray(box, dtype=float).T
    X, _ = lattice(lo, hi, grid_per_axis)
    far = D.distance_fn.values(X) >= eps
    if np.any(far):
        certs.append(Certificate("outside C+eps*B excluded", 0.0,
                                 float(-np.min(g.values(X[far]))), "exclusion"))
    P = zero_level_points(D, center, boundary_points, seed)
    gn = np.linalg.norm(g.gradients(P), axis=1)
    level = float(np.max(np.abs(g.values(P))))
    certs.append(Certificate("zero level located", 1e-6, level, "boundary"))
    certs.append(Certificate("boundary gradient norm", 0.1, float(1.0 - np.min(gn)), "boundary"))
    return certs
