"""Smooth convex patching inside a sublevel set with the outside left untouched."""

from __future__ import annotations

import numpy as np

from ..core import ConvexFn, Domain, affine_values, lattice
from ..errors import SublevelNotCompact
from ..verify import Certificate
from .fine import _argmin, _fine_core, sublevel_boundary


class PatchFn(ConvexFn):
    """``F = g`` on ``{c < b}`` and ``F = f`` elsewhere (bitwise)."""

    def __init__(self, f, c, level, inner):
        self.source = f
        self.c = c
        self.level = level
        self.inner = inner
        self.certificates = []
        super().__init__(self._values, f.dim, grad=self._grad, domain=f.domain,
                         smoothness="nonsmooth", name=f"patch({f.name})")

    def inside(self, X):
        return self.c.values(X) < self.level

    def _values(self, X):
        out = self.source.values(X)
        m = self.inside(X)
        if np.any(m):
            out[m] = self.inner.values(X[m])
        return out

    def _grad(self, X):
        out = self.source.gradients(X)
        m = self.inside(X)
        if np.any(m):
            out[m] = self.inner.gradients(X[m])
        return out

    @property
    def passed(self):
        return all(ct.passed for ct in self.certificates)


def _normals(c, P):
    G = c.gradients(P)
    return G / np.linalg.norm(G, axis=1, keepdims=True)


def patch_sublevel(f, b, efun, ell=None, grid=None, boundary_points=64, fd_step=1e-3,
                   seed=0, strict=True):
    """Replace ``f`` inside ``K = {c <= b}`` by a smooth convex approximation.

    Parameters
    ----------
    f : ConvexFn
        ``f = l + c`` on R^d with ``c`` proper.
    b : float
        Level of ``c`` bounding the patch.
    efun : callable
        Positive tolerance inside ``K``.
    ell : array_like, optional
        Linear part ``l`` (zero by default).
    fd_step : float
        Step of the one-sided differences used for the boundary certificates.

    The fine schedule runs on the interior with tolerance
    ``eta = min(efun, ((b - c) / G)^2)``, where ``G`` bounds ``|grad c|`` on
    ``K`` so that ``(b - c) / G`` is at most the distance to the boundary.
    Its levels approach ``b`` until every interior grid point and every
    boundary difference point is covered.

    Returns
    -------
    PatchFn
        With ``certificates``: pointwise ``|F - f| <= efun`` inside, ``F = f``
        outside, convexity along normal segments through the boundary and, for
        C^1 ``f``, the jump between the inner and outer one-sided normal
        derivatives.

    Raises
    ------
    SublevelNotCompact
        If the sublevel set looks unbounded.
    """
    d = f.dim
    ell = np.zeros(d) if ell is None else np.asarray(ell, dtype=float).reshape(d)
    c = f.plus_linear(-ell)
    probe, _ = lattice(np.full(d, -4.0), np.full(d, 4.0), 81 if d == 1 else 21)
    x0, a = _argmin(c, probe)
    if not b > a:
        raise SublevelNotCompact(f"level {b} does not exceed the minimum {a}")
    P = sublevel_boundary(c, b, x0, Domain.whole(d), boundary_points, seed)
    lo, hi = P.min(axis=0), P.max(axis=0)
    per_axis = grid or (2001 if d == 1 else 81)
    X, _ = lattice(lo, hi, per_axis)
    cX = c.values(X)
    W = X[cX < b]
    Gmax = float(np.max(np.linalg.norm(c.gradients(np.vstack([W, P])), axis=1)))
    N = _normals(c, P)
    inner_fd = np.vstack([P - fd_step * N, P - 2 * fd_step * N])
    inner_fd = inner_fd[c.values(inner_fd) < b]

    def eta(Y):
        dist = np.maximum(b - c.values(Y), 0.0) / Gmax
        return np.minimum(efun(Y), dist * dist)

    V, _ = lattice(lo, hi, 2 * per_axis - 1)
    V = V[c.values(V) < b]
    cover = np.vstack([W, V, inner_fd])
    g = _fine_core(f, eta, W, "c0", ell, b=b, cover=cover, seed=seed, strict=False,
                   verify=np.vstack([V, inner_fd]))
    F = PatchFn(f, c, b, g)
    F.certificates = certify_patch(F, f, efun, V, P, N, fd_step, X[cX >= b])
    F.certificates.extend(g.certificates)
    F.eta = eta
    if strict and not F.passed:
        from ..errors import StageFailure
        bad = [ct for ct in F.certificates if not ct.passed][0]
        raise StageFailure(f"certificate {bad.region} failed", stage=None,
                           residual=bad.measured - bad.bound)
    return F


def one_sided_normal_derivatives(F, P, N, h):
    """Second-order one-sided derivatives along ``N`` at ``P``: (inner, outer)."""
    f0 = F.values(P)
    inner = (3 * f0 - 4 * F.values(P - h * N) + F.values(P - 2 * h * N)) / (2 * h)
    outer = (-3 * f0 + 4 * F.values(P + h * N) - F.values(P + 2 * h * N)) / (2 * h)
    return inner, outer


def certify_patch(F, f, efun, V, P, N, h, outside):
    certs = []
    err = np.abs(F.values(V) - f.values(V)) - efun(V)
    certs.append(Certificate("inside pointwise", 0.0, float(np.max(err)), "value"))
    if outside.shape[0]:
        diff = float(np.max(np.abs(F.values(outside) - f.values(outside))))
        certs.append(Certificate("outside equality", 0.0, diff, "identity"))
    # convexity along normal segments through the boundary
    s = np.linspace(-0.25, 0.25, 101)
    worst = 0.0
    for p, n in zip(P, N):
        line = p[None, :] + s[:, None] * n[None, :]
        y = F.values(line)
        sec = y[2:] - 2 * y[1:-1] + y[:-2]
        worst = max(worst, float(np.max(-sec / (1.0 + np.abs(y[1:-1])))))
    certs.append(Certificate("transversal convexity", 1e-9, worst, "convexity"))
    inner, outer = one_sided_normal_derivatives(F, P, N, h)
    certs.append(Certificate("one-sided order", 1e-9, float(np.max(inner - outer)), "convexity"))
    if f.smoothness != "nonsmooth":
        certs.append(Certificate("gradient jump", 1e-4, float(np.max(np.abs(inner - outer))),
                                 "gradient"))
    return certs
