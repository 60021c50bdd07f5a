"""Gluing local under-approximations into a global one.

Stage ``n`` works with ``f_n = f - c_n`` where ``c_1 = 0`` and
``c_n = c_{n-1} + eps / 2^(n-2)``. A local approximant ``h_n`` satisfies
``f_n - eps/2^(n-1) <= h_n`` on ``B_n`` and ``h_n <= f_n - eps/2^n`` everywhere,
and ``g_n = M_{eps/10^n}(g_{n-1}, h_n)`` with the compact smooth maximum.
Because ``g_{n-1} >= h_n + eps/4`` on ``B_{n-1}``, stage ``n`` leaves ``g_{n-1}``
untouched there (bitwise), and ``f - 2 eps <= g <= f`` on every ``B_n``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import ConvexFn, Domain, build_exhaustion, lattice
from ..errors import InvalidEpsilon, StageFailure
from ..regularizers import MollifierParams, mollify
from ..smooth_max import SmoothMaxParams, smooth_max2, smooth_max2_partials
from .corner import corner_underapprox_on_compact, smooth_corner


@dataclass(frozen=True)
class GlueSchedule:
    epsilon: float
    stages: int

    def offset(self, n):
        """``c_n`` with ``f_n = f - c_n``."""
        if n == 1:
            return 0.0
        return sum(self.epsilon / 2 ** (k - 2) for k in range(2, n + 1))

    def lower_slack(self, n):
        return self.epsilon / 2 ** (n - 1)

    def upper_slack(self, n):
        return self.epsilon / 2 ** n

    def smoothing(self, n):
        return self.epsilon / 10 ** n

    def lower_total(self):
        return sum(self.lower_slack(n) for n in range(1, self.stages + 1))

    def smoothing_total(self):
        return sum(self.smoothing(n) for n in range(1, self.stages + 1))

    def describe(self):
        return {"epsilon": self.epsilon, "stages": self.stages,
                "offsets": [self.offset(n) for n in range(1, self.stages + 1)],
                "lower_slacks": [self.lower_slack(n) for n in range(1, self.stages + 1)],
                "upper_slacks": [self.upper_slack(n) for n in range(1, self.stages + 1)],
                "smoothing": [self.smoothing(n) for n in range(1, self.stages + 1)],
                "lower_total": self.lower_total(), "smoothing_total": self.smoothing_total()}


def tangent_extension_1d(f, a, b):
    """``f`` on ``[a, b]`` continued by its tangent lines at ``a`` and ``b``.

    The result is convex, Lipschitz with constant ``max(|f'(a)|, |f'(b)|)``,
    equal to ``f`` on ``[a, b]`` and below ``f`` wherever ``f`` is defined.
    """
    ga, gb = f.gradients(np.array([[a], [b]]))[:, 0]
    fa, fb = f.values(np.array([[a], [b]]))

    def func(X):
        x = X[:, 0]
        y = np.clip(x, a, b)
        out = f.values(y.reshape(-1, 1))
        out = np.where(x > b, fb + gb * (x - b), out)
        return np.where(x < a, fa + ga * (x - a), out)

    def grad(X):
        x = X[:, 0]
        inner = f.gradients(np.clip(x, a, b).reshape(-1, 1))[:, 0]
        return np.where(x > b, gb, np.where(x < a, ga, inner)).reshape(-1, 1)

    fn = ConvexFn(func, 1, grad=grad, smoothness="nonsmooth", name=f"tanext({f.name})")
    fn.lipschitz = float(max(abs(ga), abs(gb)))
    return fn


def _region_bounds(B, f):
    b = B.bounds()
    if b is None:
        raise StageFailure("exhaustion set has no bounding box")
    lo, hi = np.asarray(b[0], dtype=float), np.asarray(b[1], dtype=float)
    return lo, hi


def mollified_extension_local(fn, B, lower, upper, margin=0.05):
    """Local approximant in one dimension: mollified tangent extension, shifted down.

    With ``g`` the tangent extension of ``fn`` from a slightly enlarged ``B``
    and ``L`` its Lipschitz constant, ``h = g * delta_t - upper - L t (1 + 1/128)``
    where ``L t (1 + 1/128) <= upper / 2``. Then ``h <= fn - upper`` everywhere
    and ``h >= fn - 3 upper / 2 >= fn - lower`` on ``B``.
    """
    lo, hi = _region_bounds(B, fn)
    a, b = lo[0] - margin, hi[0] + margin
    if not fn.domain.is_whole:
        dlo, dhi = fn.domain.bounds()
        a = max(a, 0.5 * (lo[0] + dlo[0]))
        b = min(b, 0.5 * (hi[0] + dhi[0]))
    ext = tangent_extension_1d(fn, a, b)
    nodes = 64
    L = max(ext.lipschitz, 1e-12)
    t = min(0.5 * upper / (L * (1.0 + 1.0 / (2 * nodes))), 0.5 * (b - a), margin)
    moll = mollify(ext, MollifierParams(t, nodes))
    shift = upper + L * t * (1.0 + 1.0 / (2 * nodes))
    h = moll.shifted(shift)
    h.domain = fn.domain
    return h


def corner_local(fn, B, lower, upper):
    """Local approximant via tangent planes: smooth max of a corner, shifted down.

    Tangents of ``fn`` at sample points of ``B`` with sampled gap at most
    ``upper / 2`` are combined with the compact smooth maximum at parameter
    ``upper / 2`` and shifted by ``upper + upper / 4``.
    """
    corner = corner_underapprox_on_compact(fn, B, upper / 2.0)
    # corner_underapprox subtracts its eps; restore the plain tangents
    sm = smooth_corner(corner.slopes, corner.offsets + upper / 2.0, upper / 2.0)
    h = sm.shifted(upper + upper / 4.0)
    h.domain = fn.domain
    return h


def default_local(fn, B, lower, upper):
    if fn.dim == 1:
        return mollified_extension_local(fn, B, lower, upper)
    return corner_local(fn, B, lower, upper)


def _check_grid(B, fn, per_axis):
    lo, hi = _region_bounds(B, fn)
    pts, _ = lattice(lo, hi, per_axis if fn.dim == 1 else max(11, int(per_axis ** (1.0 / fn.dim))))
    return pts[B.contains(pts)]


class GluedFn(ConvexFn):
    """Result of :func:`glue_global`; keeps its stages for partial evaluation."""

    def __init__(self, f, schedule, stages, exhaustion):
        self.schedule = schedule
        self.stages = stages
        self.exhaustion = exhaustion
        self.source = f
        super().__init__(self._values, f.dim, grad=self._grad, domain=f.domain,
                         smoothness=min((h.smoothness for h in stages), key=_rank),
                         name=f"glue({f.name})")

    def stage_values(self, X, n):
        """Evaluate ``g_n`` (the first ``n`` stages)."""
        g = self.stages[0].values(X)
        for k in range(2, n + 1):
            params = SmoothMaxParams.compact(self.schedule.smoothing(k))
            g = smooth_max2(params, g, self.stages[k - 1].values(X))
        return g

    def _values(self, X):
        return self.stage_values(X, len(self.stages))

    def _grad(self, X):
        g = self.stages[0].values(X)
        dg = self.stages[0].gradients(X)
        for k in range(2, len(self.stages) + 1):
            params = SmoothMaxParams.compact(self.schedule.smoothing(k))
            h = self.stages[k - 1].values(X)
            a, b = smooth_max2_partials(params, g, h)
            dg = a[:, None] * dg + b[:, None] * self.stages[k - 1].gradients(X)
            g = smooth_max2(params, g, h)
        return dg


def _rank(tag):
    return ["nonsmooth", "C1", "C2", "Cinf"].index(tag)


def glue_global(f, ex, eps, local=None, check_points=2001, verify=True):
    """Glue local under-approximants over the exhaustion ``ex``.

    Parameters
    ----------
    f : ConvexFn
    ex : Exhaustion
    eps : float
        The result satisfies ``f - 2 eps <= g <= f`` on the union of the sets.
    local : callable, optional
        ``local(fn, B, lower, upper)`` returning a convex ``h`` with
        ``fn - lower <= h`` on ``B`` and ``h <= fn - upper`` everywhere.
        Defaults to a mollified tangent extension in one dimension and a
        smoothed corner of tangent planes otherwise.

    Raises
    ------
    StageFailure
        If a local approximant misses its sandwich on the check grid.
    """
    if not np.isfinite(eps) or eps <= 0:
        raise InvalidEpsilon(f"epsilon must be positive, got {eps}")
    local = local or default_local
    schedule = GlueSchedule(float(eps), len(ex))
    last = ex.sets[-1]
    outer = _check_grid(last, f, check_points)
    stages = []
    for n, B in enumerate(ex.sets, start=1):
        fn = f.shifted(schedule.offset(n))
        lower, upper = schedule.lower_slack(n), schedule.upper_slack(n)
        h = local(fn, B, lower, upper)
        if verify:
            inner = _check_grid(B, f, check_points)
            low_res = float(np.max(fn.values(inner) - lower - h.values(inner)))
            up_res = float(np.max(h.values(outer) - (fn.values(outer) - upper)))
            if low_res > 0 or up_res > 0:
                raise StageFailure(f"stage {n} local approximant misses its sandwich",
                                   stage=n, residual=max(low_res, up_res))
        stages.append(h)
    return GluedFn(f, schedule, stages, ex)


def global_underapprox(f, U=None, eps=0.1, m_max=8, local=None):
    """Smooth convex ``g`` with ``f - eps <= g <= f`` on the exhaustion of ``U``.

    Gluing is run with budget ``eps / 2``; the default local approximants are
    mollified tangent extensions (one dimension) or smoothed tangent corners.
    """
    U = U if U is not None else f.domain
    ex = build_exhaustion(U, m_max)
    return glue_global(f, ex, eps / 2.0, local=local)
