"""Convexity-preserving smoothing primitives.

* :func:`mollify` convolves with a normalized bump.
* :func:`heat_smooth_relu` is ``max(x, 0)`` convolved with a heat kernel.
* :func:`moreau` is the Moreau envelope (inf-convolution with a quadratic).
* :func:`lipschitz_extend` is the inf-convolution with ``L |.|`` over a set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .core import ConvexFn, Domain, lattice
from .errors import DomainTooSmall, InvalidEpsilon, LipschitzTooSmall, UnboundedBelow
from .smooth_max import bump, make_theta

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class MollifierParams:
    """Bump width ``epsilon`` and lattice nodes per ``epsilon`` (per axis).

    With ``slopes="gradient"`` the one-dimensional lattice slopes are taken
    from the gradient at cell midpoints instead of value differences. For C^1
    inputs this avoids cancellation when the lattice is fine.
    """

    epsilon: float
    nodes: int = 64
    slopes: str = "values"

    def __post_init__(self):
        if not np.isfinite(self.epsilon) or self.epsilon <= 0:
            raise InvalidEpsilon(f"epsilon must be positive, got {self.epsilon}")
        if self.nodes < 2:
            raise ValueError("need at least two nodes per epsilon")
        if self.slopes not in ("values", "gradient"):
            raise ValueError(f"unknown slope mode {self.slopes!r}")


@dataclass(frozen=True)
class MoreauParams:
    lam: float
    tol: float = 1e-10
    maxiter: int = 5000

    def __post_init__(self):
        if not self.lam > 0:
            raise InvalidEpsilon(f"lambda must be positive, got {self.lam}")


def _interval_of(domain):
    b = domain.bounds()
    if b is None:
        return -np.inf, np.inf
    return float(b[0][0]), float(b[1][0])


# --------------------------------------------------------------------------
# mollification

def _mollify_1d(f, p):
    eps = p.epsilon
    h = eps / p.nodes
    theta = make_theta(eps)
    K = 2 * p.nodes + 4
    offs = np.arange(K + 1)
    lo, hi = _interval_of(f.domain)
    margin = eps + 2.5 * h

    def parts(x):
        x = np.asarray(x, dtype=float)
        if np.any(x - margin <= lo) or np.any(x + margin >= hi):
            raise DomainTooSmall("mollification window leaves the domain of f")
        j0 = np.floor((x - eps) / h).astype(np.int64) - 1
        nodes = (j0[:, None] + offs[None, :]) * h
        if p.slopes == "gradient":
            vals = f.values(nodes[:, :1]).reshape(-1, 1)
            mid = 0.5 * (nodes[:, 1:] + nodes[:, :-1])
            slopes = f.gradients(mid.reshape(-1, 1)).reshape(mid.shape)
        else:
            vals = f.values(nodes.reshape(-1, 1)).reshape(nodes.shape)
            slopes = np.diff(vals, axis=1) / np.diff(nodes, axis=1)
        jumps = np.diff(slopes, axis=1)
        return nodes, vals, slopes, jumps

    def func(X):
        x = X[:, 0]
        nodes, vals, slopes, jumps = parts(x)
        base = vals[:, 0] + slopes[:, 0] * (x - nodes[:, 0])
        t = x[:, None] - nodes[:, 1:-1]
        ramp = 0.5 * (t + np.abs(t) + theta.excess(t))
        return base + np.sum(jumps * ramp, axis=1)

    def grad(X):
        x = X[:, 0]
        nodes, vals, slopes, jumps = parts(x)
        t = x[:, None] - nodes[:, 1:-1]
        dramp = 0.5 * (1.0 + theta.deriv(t))
        return (slopes[:, 0] + np.sum(jumps * dramp, axis=1)).reshape(-1, 1)

    domain = f.domain
    if np.isfinite(lo) or np.isfinite(hi):
        domain = Domain.interval(lo + margin, hi - margin)
    return ConvexFn(func, 1, grad=grad, domain=domain, smoothness="Cinf",
                    name=f"mollify({f.name})")


def bump_stencil(eps, dim, nodes):
    """Symmetric lattice offsets in the ``eps``-ball with normalized bump weights."""
    h = eps / nodes
    axis = np.arange(-nodes, nodes + 1) * h
    pts, _ = lattice(axis[0] * np.ones(dim), axis[-1] * np.ones(dim), 2 * nodes + 1)
    w = bump(np.linalg.norm(pts, axis=1) / eps)
    keep = w > 0
    pts, w = pts[keep], w[keep]
    return pts, w / np.sum(w)


def _mollify_nd(f, p):
    eps = p.epsilon
    offsets, weights = bump_stencil(eps, f.dim, p.nodes)

    def check(X):
        if f.domain.is_whole:
            return
        if np.any(f.domain.dist_to_boundary(X) <= eps):
            raise DomainTooSmall("mollification window leaves the domain of f")

    def func(X):
        check(X)
        acc = np.zeros(X.shape[0])
        for s, w in zip(offsets, weights):
            acc += w * f.values(X - s)
        return acc

    def grad(X):
        check(X)
        acc = np.zeros(X.shape)
        for s, w in zip(offsets, weights):
            acc += w * f.gradients(X - s)
        return acc

    return ConvexFn(func, f.dim, grad=grad, domain=f.domain, smoothness=f.smoothness,
                    name=f"mollify({f.name})")


def mollify(f, p):
    """Convolve ``f`` with a unit-mass bump of radius ``p.epsilon``.

    In one dimension ``f`` is first replaced by its piecewise linear interpolant
    on the lattice ``epsilon / p.nodes * Z``, whose convolution with the bump is
    evaluated in closed form through the compact smoothed absolute value. The
    result is C^inf, convex, at least ``f`` and at most ``f`` plus its
    oscillation over an ``epsilon``-window (plus interpolation error), with the
    same local Lipschitz constants. Convex piecewise linear functions with kinks
    on the lattice are convolved exactly.

    In higher dimension the bump is discretized on a symmetric lattice
    (``p.nodes`` points per ``epsilon`` and axis) and ``f`` is replaced by the
    weighted average of its translates. This keeps convexity, order, affine
    functions and Lipschitz constants, and ``f <= f_eps`` by Jensen's
    inequality, but does not add smoothness.

    Raises
    ------
    DomainTooSmall
        If an evaluation window leaves the domain of ``f``.
    """
    if not isinstance(p, MollifierParams):
        p = MollifierParams(float(p))
    if f.dim == 1:
        return _mollify_1d(f, p)
    return _mollify_nd(f, p)


# --------------------------------------------------------------------------
# heat smoothing of the positive part

def heat_smooth_relu(eps):
    """``max(x, 0)`` convolved with the heat kernel of variance ``2 eps``.

    ``f(x) = (x/2)(1 + erf(x / (2 sqrt(eps)))) + sqrt(eps/pi) exp(-x^2 / (4 eps))``
    with ``f''(x) = (4 pi eps)^{-1/2} exp(-x^2 / (4 eps)) > 0``.
    """
    eps = float(eps)
    if not np.isfinite(eps) or eps <= 0:
        raise InvalidEpsilon(f"epsilon must be positive, got {eps}")
    s = 2.0 * np.sqrt(eps)

    def value(x):
        return 0.5 * x * erfc(-x / s) + np.sqrt(eps / np.pi) * np.exp(-(x / s) ** 2)

    def deriv(x):
        return 0.5 * erfc(-x / s)

    def deriv2(x):
        return np.exp(-(x / s) ** 2) / np.sqrt(4.0 * np.pi * eps)

    fn = ConvexFn(lambda X: value(X[:, 0]), 1, grad=lambda X: deriv(X).reshape(-1, 1),
                  smoothness="Cinf", name=f"heat_relu({eps:g})")
    fn.scalar = value
    fn.deriv = deriv
    fn.deriv2 = deriv2
    fn.log_deriv2 = lambda x: -(np.asarray(x, dtype=float) / s) ** 2 - 0.5 * np.log(4.0 * np.pi * eps)
    fn.epsilon = eps
    return fn


# --------------------------------------------------------------------------
# Moreau envelope

def _moreau_1d(f, lam, tol, maxiter):
    lo, hi = _interval_of(f.domain)

    def prox(x):
        g = f.gradients(x.reshape(-1, 1))[:, 0]
        if not np.all(np.isfinite(g)):
            raise UnboundedBelow("subgradient estimate is not finite")
        pad = 1e-6 * (1.0 + np.abs(x)) + 1e-3 * lam * np.abs(g)
        a = np.minimum(x, x - lam * g) - pad
        b = np.maximum(x, x - lam * g) + pad
        a = np.maximum(a, lo + tol)
        b = np.minimum(b, hi - tol)

        def phi(y):
            return f.values(y.reshape(-1, 1)) + (x - y) ** 2 / (2.0 * lam)

        c = b - GOLDEN * (b - a)
        d = a + GOLDEN * (b - a)
        fc, fd = phi(c), phi(d)
        for _ in range(maxiter):
            if np.all(b - a <= tol * (1.0 + np.abs(x))):
                break
            left = fc < fd
            b = np.where(left, d, b)
            a = np.where(left, a, c)
            keep = np.where(left, c, d)
            fkeep = np.where(left, fc, fd)
            fresh = np.where(left, b - GOLDEN * (b - a), a + GOLDEN * (b - a))
            ffresh = phi(fresh)
            c = np.where(left, fresh, keep)
            d = np.where(left, keep, fresh)
            fc = np.where(left, ffresh, fkeep)
            fd = np.where(left, fkeep, ffresh)
        y = 0.5 * (a + b)
        val = phi(y)
        if not np.all(np.isfinite(val)):
            raise UnboundedBelow("inner minimization diverged")
        return y, val

    def func(X):
        return prox(X[:, 0])[1]

    def grad(X):
        x = X[:, 0]
        return ((x - prox(x)[0]) / lam).reshape(-1, 1)

    fn = ConvexFn(func, 1, grad=grad, domain=f.domain, smoothness="C1",
                  name=f"moreau({f.name})")
    fn.prox = lambda x: prox(np.atleast_1d(np.asarray(x, dtype=float)))[0]
    return fn


def _pattern_directions(d):
    E = np.eye(d)
    dirs = [E, -E]
    for i in range(d):
        for j in range(i + 1, d):
            for si in (1.0, -1.0):
                for sj in (1.0, -1.0):
                    v = si * E[i] + sj * E[j]
                    dirs.append((v / np.linalg.norm(v))[None, :])
    return np.vstack(dirs)


def _pattern_search(phi, Y, val, scale, tol):
    """Compass search along axes and axis diagonals, halving the mesh until ``tol``."""
    Y, val, h = Y.copy(), val.copy(), scale.copy()
    D = _pattern_directions(Y.shape[1])
    floor = tol * (1.0 + np.linalg.norm(Y, axis=1))
    while True:
        active = h > floor
        if not np.any(active):
            return Y, val
        idx = np.flatnonzero(active)
        improved = np.zeros(idx.shape[0], dtype=bool)
        for v in D:
            Yn = Y[idx] + h[idx, None] * v[None, :]
            vn = phi(Yn, idx)
            better = vn < val[idx]
            Y[idx[better]] = Yn[better]
            val[idx[better]] = vn[better]
            improved |= better
        h[idx[~improved]] *= 0.5


def _moreau_nd(f, lam, tol, maxiter):
    def prox(X):
        def phi(Y, rows=None):
            Xr = X if rows is None else X[rows]
            return f.values(Y) + np.sum((Xr - Y) ** 2, axis=1) / (2.0 * lam)

        def dphi(Y):
            return f.gradients(Y) + (Y - X) / lam

        Y = X.copy()
        Z = X.copy()
        tk = 1.0
        step = np.full(X.shape[0], lam)
        best_y, best = Y.copy(), phi(Y)
        for _ in range(maxiter):
            g = dphi(Z)
            fz = phi(Z)
            # let the step recover after backtracking near a kink
            step = np.minimum(2.0 * step, lam)
            while True:
                Yn = Z - step[:, None] * g
                ok = phi(Yn) <= fz - 0.5 * step * np.sum(g * g, axis=1) + 1e-15 * (1 + np.abs(fz))
                if np.all(ok) or np.min(step) < 1e-14 * lam:
                    break
                step = np.where(ok, step, 0.5 * step)
            if not np.all(np.isfinite(Yn)) or np.max(np.abs(Yn)) > 1e12:
                raise UnboundedBelow("inner minimization diverged")
            tn = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
            Z = Yn + ((tk - 1.0) / tn) * (Yn - Y)
            Y, tk = Yn, tn
            val = phi(Y)
            better = val < best
            best = np.where(better, val, best)
            best_y[better] = Y[better]
            if np.max(np.linalg.norm(g, axis=1) * step) < tol:
                break
        # gradient steps stall at kinks of a nonsmooth f; finish with a pattern search
        scale = np.maximum(np.linalg.norm(best_y - X, axis=1), lam) * 0.5
        return _pattern_search(phi, best_y, best, scale, tol)

    fn = ConvexFn(lambda X: prox(X)[1], f.dim, grad=lambda X: (X - prox(X)[0]) / lam,
                  domain=f.domain, smoothness="C1", name=f"moreau({f.name})")
    fn.prox = lambda x: prox(np.atleast_2d(np.asarray(x, dtype=float)))[0]
    return fn


def moreau(f, p):
    """Moreau envelope ``inf_y f(y) + |x - y|^2 / (2 lam)``.

    The inner problem is solved by golden-section search in one dimension and
    by accelerated gradient descent with backtracking, followed by a pattern
    search along coordinate and diagonal directions, otherwise. The returned
    function also exposes ``prox``.
    """
    if not isinstance(p, MoreauParams):
        p = MoreauParams(float(p))
    if f.dim == 1:
        return _moreau_1d(f, p.lam, p.tol, p.maxiter)
    return _moreau_nd(f, p.lam, p.tol, p.maxiter)


# --------------------------------------------------------------------------
# Lipschitz extension

def _as_set(B, dim):
    if isinstance(B, Domain):
        return B
    arr = np.asarray(B, dtype=float)
    if dim == 1 and arr.shape == (2,):
        return Domain.interval(arr[0], arr[1])
    return Domain.box(arr[:, 0], arr[:, 1])


def sampled_lipschitz(f, B, resolution=None):
    """Largest difference quotient of ``f`` over neighbouring points of a lattice on ``closure(B)``."""
    lo, hi = B.bounds()
    res = resolution or (2001 if B.dim == 1 else 61)
    pts, shape = lattice(lo, hi, res)
    inside = B.contains(pts) | np.isclose(B.dist_to_boundary(pts), 0.0)
    vals = np.where(inside, f.values(pts), np.nan).reshape(tuple(shape))
    best = 0.0
    for k in range(B.dim):
        h = (hi[k] - lo[k]) / (shape[k] - 1)
        q = np.abs(np.diff(vals, axis=k)) / h
        if np.any(np.isfinite(q)):
            best = max(best, float(np.nanmax(q)))
    return best


def _boundary_samples(B, count):
    if B.kind == "box":
        lo, hi = B.lo, B.hi
        per = max(3, int(round(count ** (1.0 / max(B.dim - 1, 1)))))
        pts, _ = lattice(lo, hi, per)
        faces = []
        for k in range(B.dim):
            for side in (lo[k], hi[k]):
                q = pts.copy()
                q[:, k] = side
                faces.append(q)
        return np.unique(np.vstack(faces), axis=0)
    if B.kind == "ball":
        rng = np.random.default_rng(0)
        v = rng.standard_normal((count, B.dim))
        return B.center + B.radius * v / np.linalg.norm(v, axis=1, keepdims=True)
    raise ValueError(f"unsupported set kind {B.kind!r} for extension")


def _project(B, Y):
    if B.kind == "box":
        return np.clip(Y, B.lo, B.hi)
    v = Y - B.center
    n = np.linalg.norm(v, axis=1, keepdims=True)
    return B.center + v * np.minimum(1.0, B.radius / np.maximum(n, 1e-300))


def lipschitz_extend(f, B, L, check=True):
    """``g(x) = inf_{y in closure(B)} f(y) + L |x - y|``.

    ``g`` is convex, ``L``-Lipschitz on R^d and equals ``f`` on ``B``. In one
    dimension the infimum is attained at the projection of ``x`` onto ``B``.
    Otherwise it is searched over boundary samples of ``B`` and refined by
    projected subgradient steps.

    Raises
    ------
    LipschitzTooSmall
        If ``L`` is below the sampled difference quotients of ``f`` on ``B``.
    """
    B = _as_set(B, f.dim)
    L = float(L)
    if check:
        est = sampled_lipschitz(f, B)
        if est > L * (1.0 + 1e-9):
            raise LipschitzTooSmall(f"L = {L:g} is below the sampled Lipschitz constant {est:g}")

    if f.dim == 1:
        a, b = float(B.bounds()[0][0]), float(B.bounds()[1][0])

        def func(X):
            x = X[:, 0]
            y = np.clip(x, a, b)
            return f.values(y.reshape(-1, 1)) + L * np.abs(x - y)

        def grad(X):
            x = X[:, 0]
            inner = f.gradients(np.clip(x, a, b).reshape(-1, 1))[:, 0]
            return np.where(x > b, L, np.where(x < a, -L, inner)).reshape(-1, 1)

        return ConvexFn(func, 1, grad=grad, smoothness="nonsmooth",
                        name=f"lipext({f.name})")

    cand = _boundary_samples(B, 400 if f.dim == 2 else 2000)
    fc = f.values(cand)

    def argmin(X):
        D = np.linalg.norm(X[:, None, :] - cand[None, :, :], axis=2)
        idx = np.argmin(fc[None, :] + L * D, axis=1)
        Y = cand[idx].copy()
        best = fc[idx] + L * D[np.arange(X.shape[0]), idx]
        step = 0.05 * np.max(B.bounds()[1] - B.bounds()[0])
        for _ in range(200):
            diff = Y - X
            nrm = np.linalg.norm(diff, axis=1, keepdims=True)
            g = f.gradients(Y) + L * diff / np.maximum(nrm, 1e-300)
            Yn = _project(B, Y - step * g / np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-300))
            val = f.values(Yn) + L * np.linalg.norm(Yn - X, axis=1)
            better = val < best
            Y[better] = Yn[better]
            best = np.where(better, val, best)
            step *= 0.97
        return Y, best

    def func(X):
        out = np.empty(X.shape[0])
        inside = B.contains(X)
        if np.any(inside):
            out[inside] = f.values(X[inside])
        if np.any(~inside):
            out[~inside] = argmin(X[~inside])[1]
        return out

    def grad(X):
        out = np.empty(X.shape)
        inside = B.contains(X)
        if np.any(inside):
            out[inside] = f.gradients(X[inside])
        if np.any(~inside):
            Xo = X[~inside]
            Y = argmin(Xo)[0]
            diff = Xo - Y
            out[~inside] = L * diff / np.maximum(np.linalg.norm(diff, axis=1, keepdims=True), 1e-300)
        return out

    return ConvexFn(func, f.dim, grad=grad, smoothness="nonsmooth", name=f"lipext({f.name})")
