"""Function handles, domains, grids and exhaustions shared by every pipeline.

Points are handled as ``(n, d)`` arrays internally. A :class:`ConvexFn` accepts
a single point (shape ``(d,)``, or a scalar when ``d == 1``) or a batch
(shape ``(n, d)``, or ``(n,)`` when ``d == 1``) and returns a float or an
``(n,)`` array accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import EmptyDomain, EmptyGrid, RankDeficient

RANK_TOL = 1e-8
SUBLEVEL_TOL = 1e-12
FD_REL_STEP = 1e-5


def as_points(x, dim):
    """Normalize ``x`` to an ``(n, dim)`` float array.

    Returns the array and a flag telling whether a single point was passed.
    """
    arr = np.asarray(x, dtype=float)
    if dim == 1:
        if arr.ndim == 0:
            return arr.reshape(1, 1), True
        if arr.ndim == 1:
            return arr.reshape(-1, 1), False
        if arr.ndim == 2 and arr.shape[1] == 1:
            return arr, False
    else:
        if arr.ndim == 1 and arr.shape[0] == dim:
            return arr.reshape(1, dim), True
        if arr.ndim == 2 and arr.shape[1] == dim:
            return arr, False
    raise ValueError(f"expected points of dimension {dim}, got shape {arr.shape}")


def affine_values(X, slopes, offsets):
    """Evaluate the affine maps ``x -> slopes[j] . x + offsets[j]`` on ``X``.

    The coordinate sum is unrolled so that every row is computed the same way
    regardless of batch size (bitwise reproducible evaluation).
    """
    slopes = np.atleast_2d(slopes)
    out = np.broadcast_to(np.asarray(offsets, dtype=float), (X.shape[0], slopes.shape[0])).copy()
    for k in range(X.shape[1]):
        out += X[:, k:k + 1] * slopes[:, k][None, :]
    return out


def fd_step(X):
    return FD_REL_STEP * (1.0 + np.linalg.norm(X, axis=1))


def central_gradient(values, X, h=None):
    """Central-difference gradient of a batch evaluator ``values`` at ``X``."""
    n, d = X.shape
    if h is None:
        h = fd_step(X)
    h = np.broadcast_to(np.asarray(h, dtype=float), (n,))
    G = np.empty((n, d))
    for k in range(d):
        E = np.zeros((n, d))
        E[:, k] = h
        G[:, k] = (values(X + E) - values(X - E)) / (2.0 * h)
    return G


class ConvexFn:
    """Evaluable convex function on (a subset of) R^d.

    Parameters
    ----------
    func : callable
        Batch evaluator mapping an ``(n, d)`` array to an ``(n,)`` array.
    dim : int
        Ambient dimension.
    grad : callable, optional
        Batch gradient mapping ``(n, d)`` to ``(n, d)``. When absent, central
        differences with step ``1e-5 * (1 + |x|)`` are used.
    domain : Domain, optional
        Where the function is defined; defaults to all of R^d.
    smoothness : {"nonsmooth", "C1", "C2", "Cinf"}
    """

    def __init__(self, func, dim, grad=None, domain=None, smoothness="nonsmooth", name=None):
        self.func = func
        self.dim = int(dim)
        self.grad = grad
        self.domain = domain if domain is not None else Domain.whole(self.dim)
        self.smoothness = smoothness
        self.name = name or getattr(func, "__name__", "f")

    def __repr__(self):
        return f"ConvexFn({self.name!r}, dim={self.dim}, smoothness={self.smoothness!r})"

    @property
    def has_grad(self):
        return self.grad is not None

    def values(self, X):
        return np.asarray(self.func(X), dtype=float).reshape(X.shape[0])

    def gradients(self, X):
        if self.grad is not None:
            return np.asarray(self.grad(X), dtype=float).reshape(X.shape)
        return central_gradient(self.values, X)

    def __call__(self, x):
        X, single = as_points(x, self.dim)
        v = self.values(X)
        return float(v[0]) if single else v

    def gradient(self, x):
        arr = np.asarray(x, dtype=float)
        X, single = as_points(arr, self.dim)
        G = self.gradients(X)
        if single:
            return G[0]
        if self.dim == 1 and arr.ndim == 1:
            return G[:, 0]
        return G

    def shifted(self, c):
        """Return ``f - c`` for a constant ``c``."""
        c = float(c)
        return ConvexFn(lambda X: self.values(X) - c, self.dim, grad=self.grad,
                        domain=self.domain, smoothness=self.smoothness,
                        name=f"{self.name}-{c:g}")

    def plus_linear(self, slope, offset=0.0):
        """Return ``f + <slope, x> + offset``."""
        slope = np.asarray(slope, dtype=float).reshape(self.dim)
        offset = float(offset)

        def func(X):
            return self.values(X) + affine_values(X, slope[None, :], [offset])[:, 0]

        def grad(X):
            return self.gradients(X) + slope[None, :]

        return ConvexFn(func, self.dim, grad=grad, domain=self.domain,
                        smoothness=self.smoothness, name=f"{self.name}+lin")


def affine(slope, offset=0.0):
    slope = np.atleast_1d(np.asarray(slope, dtype=float))
    d = slope.shape[0]
    return ConvexFn(lambda X: affine_values(X, slope[None, :], [offset])[:, 0], d,
                    grad=lambda X: np.broadcast_to(slope, X.shape).copy(),
                    smoothness="Cinf", name="affine")


def from_scalar(fun, dfun=None, smoothness="nonsmooth", domain=None, name=None):
    """Wrap a vectorized scalar function of one variable as a ConvexFn on R."""
    grad = None if dfun is None else (lambda X: dfun(X[:, 0]).reshape(-1, 1))
    return ConvexFn(lambda X: fun(X[:, 0]), 1, grad=grad, domain=domain,
                    smoothness=smoothness, name=name or getattr(fun, "__name__", "f"))


# --------------------------------------------------------------------------
# domains

@dataclass(frozen=True, eq=False)
class Domain:
    """Nonempty open convex subset of R^d.

    Build instances with :meth:`whole`, :meth:`box`, :meth:`ball`,
    :meth:`polytope` or :meth:`sublevel`.
    """

    kind: str
    dim: int
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None
    center: Optional[np.ndarray] = None
    radius: Optional[float] = None
    A: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None
    fn: Optional[ConvexFn] = field(default=None, compare=False)
    level: Optional[float] = None

    @classmethod
    def whole(cls, dim):
        return cls("all_of_Rd", int(dim))

    @classmethod
    def box(cls, lo, hi):
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if lo.shape != hi.shape or np.any(lo >= hi):
            raise EmptyDomain("box needs lo < hi on every axis")
        return cls("box", lo.shape[0], lo=lo, hi=hi)

    @classmethod
    def interval(cls, a, b):
        return cls.box([a], [b])

    @classmethod
    def ball(cls, center, radius):
        center = np.atleast_1d(np.asarray(center, dtype=float))
        if radius <= 0:
            raise EmptyDomain("ball radius must be positive")
        return cls("ball", center.shape[0], center=center, radius=float(radius))

    @classmethod
    def polytope(cls, A, b):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        return cls("polytope", A.shape[1], A=A, b=b)

    @classmethod
    def sublevel(cls, fn, level):
        return cls("sublevel", fn.dim, fn=fn, level=float(level))

    @property
    def is_whole(self):
        return self.kind == "all_of_Rd"

    def contains(self, X):
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        if self.kind == "all_of_Rd":
            return np.ones(X.shape[0], dtype=bool)
        if self.kind == "box":
            return np.all((X > self.lo) & (X < self.hi), axis=1)
        if self.kind == "ball":
            return np.linalg.norm(X - self.center, axis=1) < self.radius
        if self.kind == "polytope":
            return np.all(affine_values(X, self.A, -self.b) < 0, axis=1)
        return self.fn.values(X) < self.level - SUBLEVEL_TOL

    def dist_to_boundary(self, X):
        """Distance from interior points to the boundary (negative outside).

        Exact for box, ball and polytope; first-order estimate for sublevels.
        """
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        if self.kind == "all_of_Rd":
            return np.full(X.shape[0], np.inf)
        if self.kind == "box":
            inside = self.contains(X)
            d_in = np.min(np.minimum(X - self.lo, self.hi - X), axis=1)
            gap = np.maximum(np.maximum(self.lo - X, X - self.hi), 0.0)
            return np.where(inside, d_in, -np.linalg.norm(gap, axis=1))
        if self.kind == "ball":
            return self.radius - np.linalg.norm(X - self.center, axis=1)
        if self.kind == "polytope":
            norms = np.linalg.norm(self.A, axis=1)
            slack = -affine_values(X, self.A, -self.b) / norms[None, :]
            return np.min(slack, axis=1)
        gap = self.level - self.fn.values(X)
        gnorm = np.linalg.norm(self.fn.gradients(X), axis=1)
        return gap / np.maximum(gnorm, 1e-300)

    def bounds(self):
        """Axis-aligned bounding box ``(lo, hi)`` or ``None`` when unknown/unbounded."""
        if self.kind == "box":
            return self.lo.copy(), self.hi.copy()
        if self.kind == "ball":
            return self.center - self.radius, self.center + self.radius
        if self.kind == "polytope":
            from scipy.optimize import linprog
            lo = np.empty(self.dim)
            hi = np.empty(self.dim)
            for k in range(self.dim):
                c = np.zeros(self.dim)
                c[k] = 1.0
                r1 = linprog(c, A_ub=self.A, b_ub=self.b, bounds=[(None, None)] * self.dim)
                r2 = linprog(-c, A_ub=self.A, b_ub=self.b, bounds=[(None, None)] * self.dim)
                if r1.status != 0 or r2.status != 0:
                    return None
                lo[k], hi[k] = r1.fun, -r2.fun
            return lo, hi
        return None

    def same_as(self, other):
        """Structural equality (sublevel domains compare their function by identity)."""
        if self.kind != other.kind or self.dim != other.dim:
            return False
        if self.kind == "sublevel":
            return self.fn is other.fn and self.level == other.level
        return self.describe() == other.describe()

    def describe(self):
        out = {"kind": self.kind, "dim": self.dim}
        if self.kind == "box":
            out.update(lo=self.lo.tolist(), hi=self.hi.tolist())
        elif self.kind == "ball":
            out.update(center=self.center.tolist(), radius=self.radius)
        elif self.kind == "polytope":
            out.update(A=self.A.tolist(), b=self.b.tolist())
        elif self.kind == "sublevel":
            out.update(level=self.level, fn=self.fn.name)
        return out


# --------------------------------------------------------------------------
# grids

@dataclass
class Grid:
    points: np.ndarray
    spacing: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    resolution: tuple

    @property
    def dim(self):
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]

    def describe(self):
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist(),
                "resolution": list(self.resolution), "n_points": len(self)}


def lattice(lo, hi, resolution):
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    res = np.broadcast_to(np.asarray(resolution, dtype=int), lo.shape)
    axes = [np.linspace(lo[k], hi[k], res[k]) for k in range(lo.shape[0])]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1), res


def sample_grid(domain, box, resolution):
    """Uniform lattice over ``box`` (shape ``(d, 2)``) clipped to ``domain``."""
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    res = np.broadcast_to(np.asarray(resolution, dtype=int), (box.shape[0],))
    if np.any(res < 2):
        raise ValueError("resolution must be at least 2 per axis")
    pts, res = lattice(box[:, 0], box[:, 1], res)
    keep = domain.contains(pts)
    if not np.any(keep):
        raise EmptyGrid("no lattice point lies in the domain")
    spacing = (box[:, 1] - box[:, 0]) / (res - 1)
    return Grid(pts[keep], spacing, box[:, 0].copy(), box[:, 1].copy(), tuple(int(r) for r in res))


# --------------------------------------------------------------------------
# corner functions

def augmented_rank(slopes, tol=RANK_TOL):
    slopes = np.atleast_2d(slopes)
    L = np.hstack([-slopes, np.ones((slopes.shape[0], 1))])
    s = np.linalg.svd(L, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


class CornerFn(ConvexFn):
    """Maximum of affine pieces ``<slopes[j], x> + offsets[j]`` with independent lifts.

    The lifted functionals ``(x, t) -> t - <slopes[j], x>`` must be linearly
    independent; this is checked by SVD with relative threshold 1e-8.
    """

    def __init__(self, slopes, offsets, check_rank=True):
        slopes = np.atleast_2d(np.asarray(slopes, dtype=float))
        offsets = np.atleast_1d(np.asarray(offsets, dtype=float))
        if slopes.shape[0] != offsets.shape[0]:
            raise ValueError("one offset per piece is required")
        self.slopes = slopes
        self.offsets = offsets
        if check_rank and augmented_rank(slopes) != slopes.shape[0]:
            raise RankDeficient("corner pieces have linearly dependent lifts")
        super().__init__(self._values, slopes.shape[1], grad=self._grad,
                         smoothness="nonsmooth", name=f"corner[{slopes.shape[0]}]")

    @property
    def k_plus_1(self):
        return self.slopes.shape[0]

    def piece_values(self, X):
        return affine_values(X, self.slopes, self.offsets)

    def _values(self, X):
        return np.max(self.piece_values(X), axis=1)

    def _grad(self, X):
        return self.slopes[np.argmax(self.piece_values(X), axis=1)]


def eval_corner(corner, x):
    return corner(x)


# --------------------------------------------------------------------------
# exhaustions

class ExhaustionSet:
    """``{x in U : dist(x, dU) > 1/m, |x| < m}`` for a domain U."""

    def __init__(self, domain, m):
        self.domain = domain
        self.m = int(m)
        self.dim = domain.dim

    def contains(self, X):
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        inside = np.linalg.norm(X, axis=1) < self.m
        if not self.domain.is_whole:
            inside &= self.domain.contains(X) & (self.domain.dist_to_boundary(X) > 1.0 / self.m)
        return inside

    def bounds(self):
        lo = np.full(self.dim, -float(self.m))
        hi = np.full(self.dim, float(self.m))
        db = self.domain.bounds()
        if db is not None:
            lo = np.maximum(lo, db[0] + 1.0 / self.m)
            hi = np.minimum(hi, db[1] - 1.0 / self.m)
        return lo, hi

    def is_nonempty(self, resolution=41):
        lo, hi = self.bounds()
        if np.any(lo >= hi):
            return False
        d = self.domain
        if d.is_whole:
            return True
        if d.kind == "box":
            slo, shi = d.lo + 1.0 / self.m, d.hi - 1.0 / self.m
            if np.any(slo >= shi):
                return False
            return bool(np.linalg.norm(np.clip(0.0, slo, shi)) < self.m)
        if d.kind == "ball":
            r = d.radius - 1.0 / self.m
            return bool(r > 0 and np.linalg.norm(d.center) - r < self.m)
        pts, _ = lattice(lo, hi, resolution)
        return bool(np.any(self.contains(pts)))

    def describe(self):
        return {"m": self.m, "kind": "shrunk_domain_ball"}


class SublevelSet:
    """Open sublevel ``{fn < level}``, used as an exhaustion set."""

    def __init__(self, fn, level, bounds=None):
        self.fn = fn
        self.level = float(level)
        self.dim = fn.dim
        self._bounds = bounds

    def contains(self, X):
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        return self.fn.values(X) < self.level - SUBLEVEL_TOL

    def bounds(self):
        return self._bounds

    def describe(self):
        return {"kind": "sublevel", "level": self.level}


@dataclass
class Exhaustion:
    sets: list
    dist_gaps: list

    def __len__(self):
        return len(self.sets)

    def truncated(self, n):
        return Exhaustion(self.sets[:n], self.dist_gaps[:n])

    def check_nested(self, resolution=41, margin_frac=0.02):
        """Sampled check of closure(B_n) in B_{n+1}: points of B_n nudged outward stay inside."""
        for n in range(len(self.sets) - 1):
            b = self.sets[n].bounds()
            if b is None:
                continue
            pts, _ = lattice(b[0], b[1], resolution)
            inside = pts[self.sets[n].contains(pts)]
            if inside.size == 0:
                continue
            grown = inside * (1.0 + margin_frac)
            if not np.all(self.sets[n + 1].contains(inside)):
                return False
            if not np.all(self.sets[n + 1].contains(grown[self.sets[n].contains(grown)])):
                return False
        return True


def build_exhaustion(domain, m_max):
    """Nested bounded convex sets exhausting ``domain``.

    For box/ball/polytope/whole domains the sets are
    ``B_m = {x in U : dist(x, dU) > 1/m, |x| < m}``; empty leading sets are
    dropped. Sublevel domains ``{fn < level}`` are exhausted by the sublevels at
    ``a + (level - a) m / (m + 1)`` where ``a`` is the minimum of ``fn``.
    """
    if m_max < 1:
        raise ValueError("m_max must be at least 1")
    if domain.kind == "sublevel":
        from scipy.optimize import minimize
        fn = domain.fn
        res = minimize(lambda z: fn(z if fn.dim > 1 else z[0]), np.zeros(fn.dim), method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
        a = float(res.fun)
        if a >= domain.level:
            raise EmptyDomain("sublevel domain is empty")
        sets, gaps = [], []
        for m in range(1, m_max + 1):
            beta = a + (domain.level - a) * m / (m + 1.0)
            sets.append(SublevelSet(fn, beta))
            gaps.append(domain.level - beta)
        return Exhaustion(sets, gaps)
    sets, gaps = [], []
    for m in range(1, m_max + 1):
        s = ExhaustionSet(domain, m)
        if not s.is_nonempty():
            if sets:
                raise EmptyDomain("exhaustion sets must be nested")
            continue
        sets.append(s)
        gaps.append(float(m) if domain.is_whole else 1.0 / m)
    if not sets:
        raise EmptyDomain(f"no exhaustion set is nonempty for m <= {m_max}")
    return Exhaustion(sets, gaps)
