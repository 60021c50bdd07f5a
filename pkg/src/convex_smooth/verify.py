"""Sampling oracles and certificates.

Every oracle is deterministic given its points and seed. Derivatives are
central differences with step ``1e-5 * (1 + |x|)`` unless a step is given.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import Grid, as_points, central_gradient, fd_step
from .smooth_max import SmoothMaxParams, smooth_max2_fn

REPORT_SCHEMA = "convex_smooth.report/1"


def _points(grid, dim):
    pts = grid.points if isinstance(grid, Grid) else grid
    return as_points(pts, dim)[0]


def check_convex_midpoint(f, grid, tol=1e-9, pairs=1000, seed=0):
    """Count sampled pairs with ``f((x+y)/2) > (f(x)+f(y))/2 + tol * scale``.

    ``scale`` is ``1 + |f(x)| + |f(y)|``. Returns a dict with the count, the
    worst (scaled) violation and the number of pairs tested.
    """
    X = _points(grid, f.dim)
    rng = np.random.default_rng(seed)
    i = rng.integers(0, X.shape[0], pairs)
    j = rng.integers(0, X.shape[0], pairs)
    fx, fy = f.values(X[i]), f.values(X[j])
    fm = f.values(0.5 * (X[i] + X[j]))
    scale = 1.0 + np.abs(fx) + np.abs(fy)
    excess = (fm - 0.5 * (fx + fy)) / scale
    bad = excess > tol
    return {"pairs": int(pairs), "count": int(np.sum(bad)),
            "worst": float(max(0.0, np.max(excess))), "tol": tol, "seed": seed}


def check_convex_triples(f, grid, tol=1e-9, triples=10000, seed=0):
    """Random segment test ``f((1-t)x + t y) <= (1-t) f(x) + t f(y) + tol * scale``."""
    X = _points(grid, f.dim)
    rng = np.random.default_rng(seed)
    i = rng.integers(0, X.shape[0], triples)
    j = rng.integers(0, X.shape[0], triples)
    t = rng.random(triples)
    fx, fy = f.values(X[i]), f.values(X[j])
    ft = f.values((1 - t)[:, None] * X[i] + t[:, None] * X[j])
    scale = 1.0 + np.abs(fx) + np.abs(fy)
    excess = (ft - ((1 - t) * fx + t * fy)) / scale
    return {"triples": int(triples), "count": int(np.sum(excess > tol)),
            "worst": float(max(0.0, np.max(excess))), "tol": tol, "seed": seed}


def _directions(dim, count, seed):
    if dim == 1:
        return np.array([[1.0]])
    rng = np.random.default_rng(seed)
    V = rng.standard_normal((count, dim))
    V = np.vstack([np.eye(dim), V])
    return V / np.linalg.norm(V, axis=1, keepdims=True)


def second_differences(f, grid, h, directions=8, seed=0):
    """Directional second differences ``f(x+hv) - 2f(x) + f(x-hv)`` divided by ``h^2``.

    Returns an array of shape ``(n_points, n_directions)``.
    """
    X = _points(grid, f.dim)
    V = _directions(f.dim, directions, seed)
    f0 = f.values(X)
    out = np.empty((X.shape[0], V.shape[0]))
    for k, v in enumerate(V):
        out[:, k] = (f.values(X + h * v) - 2.0 * f0 + f.values(X - h * v)) / (h * h)
    return out


def estimate_strong_convexity(f, grid, h, directions=8, seed=0):
    """Minimum sampled directional second difference over ``h^2``."""
    return float(np.min(second_differences(f, grid, h, directions, seed)))


def sup_error(f, g, grid):
    X = _points(grid, f.dim)
    return float(np.max(np.abs(f.values(X) - g.values(X))))


def grad_error(f, g, grid, h=None):
    """Largest norm of the difference of central-difference gradients."""
    X = _points(grid, f.dim)
    step = fd_step(X) if h is None else h
    Gf = central_gradient(f.values, X, step)
    Gg = central_gradient(g.values, X, step)
    return float(np.max(np.linalg.norm(Gf - Gg, axis=1)))


def check_smoothmax_derivative_bound(phi, psi, eps, grid, tol=1e-6, h=None, variant="compact"):
    """Check ``|DM(phi, psi) - (Dphi + Dpsi)/2| <= |Dphi - Dpsi| / 2`` by finite differences.

    The worst ratio is taken over points where the right side exceeds 1e-4;
    elsewhere the absolute excess must stay below the finite-difference noise
    floor ``1e-8``.
    """
    params = SmoothMaxParams.compact(eps) if variant == "compact" else SmoothMaxParams.heat(eps)
    M = smooth_max2_fn(params, phi, psi)
    X = _points(grid, phi.dim)
    step = fd_step(X) if h is None else h
    DM = central_gradient(M.values, X, step)
    Dp = central_gradient(phi.values, X, step)
    Dq = central_gradient(psi.values, X, step)
    lhs = np.linalg.norm(DM - 0.5 * (Dp + Dq), axis=1)
    rhs = 0.5 * np.linalg.norm(Dp - Dq, axis=1)
    big = rhs > 1e-4
    worst_ratio = float(np.max(lhs[big] / rhs[big])) if np.any(big) else 0.0
    worst_excess = float(np.max(lhs - rhs))
    passed = worst_ratio <= 1.0 + tol and bool(np.all(lhs[~big] <= rhs[~big] + 1e-8))
    return {"passed": bool(passed), "worst_ratio": worst_ratio,
            "worst_excess": worst_excess, "points": int(X.shape[0])}


def estimate_lipschitz(f, grid, pairs=200000, seed=0):
    """Largest difference quotient over sampled pairs.

    In one dimension adjacent sorted points suffice (and give the exact
    maximum over all pairs). Otherwise all pairs are used for small grids and
    random pairs for large ones.
    """
    X = _points(grid, f.dim)
    v = f.values(X)
    if f.dim == 1:
        order = np.argsort(X[:, 0])
        x, y = X[order, 0], v[order]
        dx = np.diff(x)
        ok = dx > 0
        return float(np.max(np.abs(np.diff(y))[ok] / dx[ok]))
    n = X.shape[0]
    if n * (n - 1) // 2 <= pairs:
        i, j = np.triu_indices(n, 1)
    else:
        rng = np.random.default_rng(seed)
        i = rng.integers(0, n, pairs)
        j = rng.integers(0, n, pairs)
    d = np.linalg.norm(X[i] - X[j], axis=1)
    ok = d > 0
    return float(np.max(np.abs(v[i] - v[j])[ok] / d[ok]))


# --------------------------------------------------------------------------
# reports

@dataclass
class Certificate:
    region: str
    bound: float
    measured: float
    kind: str = "value"

    @property
    def passed(self):
        return bool(self.measured <= self.bound)

    def to_dict(self):
        out = asdict(self)
        out["passed"] = self.passed
        return out


@dataclass
class Report:
    sup_error: float = float("nan")
    grad_sup_error: float | None = None
    convexity_violations: dict = field(default_factory=dict)
    min_second_difference: float | None = None
    lipschitz_estimate: float | None = None
    certificates: list = field(default_factory=list)
    grid: dict = field(default_factory=dict)
    seed: int = 0
    fd_step: str = "1e-5*(1+|x|)"
    extra: dict = field(default_factory=dict)
    verdict: dict | None = None

    def add(self, region, bound, measured, kind="value"):
        self.certificates.append(Certificate(region, float(bound), float(measured), kind))

    @property
    def passed(self):
        ok = all(c.passed for c in self.certificates)
        if self.convexity_violations:
            ok = ok and self.convexity_violations.get("count", 0) == 0
        return ok

    def to_dict(self):
        return {
            "schema": REPORT_SCHEMA,
            "sup_error": self.sup_error,
            "grad_sup_error": self.grad_sup_error,
            "convexity_violations": self.convexity_violations,
            "min_second_difference": self.min_second_difference,
            "lipschitz_estimate": self.lipschitz_estimate,
            "certificates": [c.to_dict() for c in self.certificates],
            "grid": self.grid,
            "seed": self.seed,
            "fd_step": self.fd_step,
            "passed": self.passed,
            "extra": self.extra,
            "verdict": self.verdict,
        }

    def to_json(self):
        return json.dumps(_jsonable(self.to_dict()), sort_keys=True, indent=2)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if np.isnan(x):
            return "nan"
        if np.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj
