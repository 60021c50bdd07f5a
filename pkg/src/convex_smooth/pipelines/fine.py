"""Fine approximation of properly convex functions.

Write ``f = l + c`` with ``l`` linear and ``c`` proper. Everything below is
driven by the values of ``c``: the sets ``B_n = {c < beta_n}`` for increasing
levels ``beta_n``, inner sets ``A_n``, collars ``N_n`` of their boundaries and
intermediate sets ``C_n`` are all sublevel sets of ``c``::

    A_n = {c < beta_n - 3 D_n / 4}
    N_n = {|c - (beta_n - 3 D_n / 4)| < D_n / 32}
    C_n = {c < beta_n + D_n / 8}

with ``D_n = beta_{n+1} - beta_n``. Stage ``n`` lifts ``c`` towards ``beta_n``,
``ft_n = (1 - r_n)(f_n - beta_n) + beta_n``, evaluated as ``f_n - r_n (f_n - beta_n)``, smooths it into ``phi_n`` with
``ft_n - e'_n <= phi_n <= ft_n``, and patches it in with the compact smooth
maximum outside ``A_{n-1}``. The result is ``l`` plus the patched function.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from ..core import ConvexFn, Domain, SublevelSet, as_points, lattice
from ..errors import (DegenerateSublevel, InvalidEpsilon, ScheduleInfeasible, StageFailure,
                      SublevelNotCompact)
from ..regularizers import MollifierParams, mollify
from ..smooth_max import SmoothMaxParams, smooth_max2, smooth_max2_partials
from ..verify import Certificate

A_FRAC = 3.0 / 4.0
COLLAR_FRAC = 1.0 / 32.0
C_FRAC = 1.0 / 8.0
MAX_HALVINGS = 60
MOLLIFIER_NODES = 64
MIN_WIDTH_ULPS = 8.0  # keeps mollifier nodes at least 2 ulp apart


@dataclass
class FineSchedule:
    """Levels and budgets of a fine approximation run.

    Arrays are indexed from stage 1: ``levels[n - 1]`` is ``beta_n``. ``delta``
    starts at stage 2 (``delta[0]`` is ``delta_2``).
    """

    a: float
    levels: np.ndarray
    stages: int
    eps: np.ndarray = field(default_factory=lambda: np.zeros(0))
    r: np.ndarray = field(default_factory=lambda: np.zeros(0))
    s: np.ndarray = field(default_factory=lambda: np.zeros(0))
    eps_prime: np.ndarray = field(default_factory=lambda: np.zeros(0))
    delta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lipschitz: np.ndarray = field(default_factory=lambda: np.zeros(0))
    widths: np.ndarray = field(default_factory=lambda: np.zeros(0))
    alpha: float = float("nan")
    ell: np.ndarray = field(default_factory=lambda: np.zeros(1))

    def beta(self, n):
        return float(self.levels[n - 1])

    def spacing(self, n):
        return float(self.levels[n] - self.levels[n - 1])

    def a_level(self, n):
        return self.beta(n) - A_FRAC * self.spacing(n)

    def c_level(self, n):
        return self.beta(n) + C_FRAC * self.spacing(n)

    def in_a_or_collar(self, cvals, n):
        return cvals < self.a_level(n) + COLLAR_FRAC * self.spacing(n)

    def region_index(self, cvals):
        """Stage ``n`` with ``x`` in ``C_n`` minus ``C_{n-1}`` (capped at the last stage)."""
        edges = np.array([self.c_level(n) for n in range(1, self.stages)])
        return np.searchsorted(edges, cvals, side="right") + 1

    def check_recurrences(self):
        """Exact check of the stored ``e'_n`` and ``delta_n`` recurrences."""
        ok = self.eps_prime[0] == 0.5 * min(self.eps[0], self.s[0])
        for n in range(2, self.stages + 1):
            ok &= self.eps_prime[n - 1] == 0.5 * min(self.eps[n - 1], self.s[n - 1], self.eps_prime[n - 2])
            ok &= self.delta[n - 2] == 0.5 * self.s[n - 2]
        return bool(ok)

    def check_nesting(self):
        """``A_n`` inside ``B_n`` inside ``C_n`` inside ``A_{n+1}``, by level margins."""
        ok = True
        for n in range(1, self.stages):
            ok &= self.a_level(n) + COLLAR_FRAC * self.spacing(n) < self.beta(n)
            ok &= self.beta(n) < self.c_level(n) < self.a_level(n + 1) - COLLAR_FRAC * self.spacing(n + 1)
        return bool(ok)

    def describe(self):
        return {"a": self.a, "stages": self.stages, "levels": self.levels.tolist(),
                "eps": self.eps.tolist(), "r": self.r.tolist(), "s": self.s.tolist(),
                "eps_prime": self.eps_prime.tolist(), "delta": self.delta.tolist(),
                "lipschitz": self.lipschitz.tolist(), "mollifier_widths": self.widths.tolist(),
                "alpha": self.alpha, "ell": np.atleast_1d(self.ell).tolist(),
                "recurrences_hold": self.check_recurrences() if self.eps_prime.size else None}


# --------------------------------------------------------------------------
# sublevel geometry

def _argmin(c, window):
    """Minimizer and minimum of ``c`` over the window grid, refined in one dimension."""
    X = window
    v = c.values(X)
    i = int(np.argmin(v))
    x0 = X[i].copy()
    if c.dim == 1 and X.shape[0] > 2:
        xs = np.sort(X[:, 0])
        j = int(np.searchsorted(xs, x0[0]))
        lo, hi = xs[max(j - 1, 0)], xs[min(j + 1, xs.size - 1)]
        if hi > lo:
            res = minimize_scalar(lambda t: c.values(np.array([[t]]))[0], bounds=(lo, hi),
                                  method="bounded", options={"xatol": 1e-12 * (1 + abs(x0[0]))})
            if res.fun < v[i]:
                x0 = np.array([res.x])
                return x0, float(res.fun)
    return x0, float(v[i])


def _ray_exit(c, x0, v, level, domain, r0=1.0, max_doublings=60):
    """Distance along ``v`` from ``x0`` to ``{c = level}``."""
    def g(t):
        return c.values((x0 + t * v)[None, :])[0] - level

    lo, hi = 0.0, r0
    for _ in range(4 * max_doublings):
        y = x0 + hi * v
        if not domain.contains(y[None, :])[0]:
            # stepped outside the domain: back off towards the last inside point
            hi = 0.5 * (lo + hi)
            if hi - lo <= 1e-14 * (1.0 + hi):
                raise SublevelNotCompact(f"sublevel set at {level} reaches the domain boundary")
            continue
        if g(hi) > 0:
            return brentq(g, lo, hi, xtol=1e-13 * (1 + hi), rtol=1e-15)
        lo, hi = hi, 2.0 * hi
    raise SublevelNotCompact(f"sublevel set at {level} looks unbounded")


def _directions(dim, count, seed):
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    rng = np.random.default_rng(seed)
    V = np.vstack([np.eye(dim), -np.eye(dim), rng.standard_normal((count, dim))])
    return V / np.linalg.norm(V, axis=1, keepdims=True)


def sublevel_boundary(c, level, x0, domain=None, directions=64, seed=0):
    """Boundary points of ``{c < level}`` along rays from an interior point ``x0``."""
    domain = domain or c.domain
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    V = _directions(c.dim, directions, seed)
    return np.array([x0 + _ray_exit(c, x0, v, level, domain) * v for v in V])


def _alpha_from(c, x0, a, beta1, domain, directions=64, seed=0):
    if not beta1 > a:
        raise DegenerateSublevel(f"level {beta1} does not exceed the minimum {a}")
    P = sublevel_boundary(c, beta1, x0, domain, directions, seed)
    diff = P[:, None, :] - P[None, :, :]
    diam = float(np.max(np.linalg.norm(diff, axis=2)))
    return (beta1 - a) / diam, P


def estimate_alpha(f, B1=None, a=None, beta1=None, x0=None, directions=64, seed=0):
    """Subgradient floor ``alpha = (beta_1 - a) / diam(B_1)`` of a sublevel set.

    Parameters
    ----------
    f : ConvexFn
    B1 : SublevelSet, optional
        ``{f < beta_1}``; built from ``beta1`` when omitted.
    a : float, optional
        ``min f``; taken from a lattice search when omitted.
    x0 : array_like, optional
        A point of ``B_1``; the lattice minimizer by default.

    The diameter is the largest distance between boundary points found along
    ``2d + directions`` rays from ``x0`` (exact in one dimension).

    Raises
    ------
    DegenerateSublevel
        If ``beta_1 <= a``.
    """
    if B1 is None:
        B1 = SublevelSet(f, beta1)
    beta1 = float(B1.level)
    d = f.dim
    if x0 is None or a is None:
        box = B1.bounds()
        lo, hi = (np.full(d, -10.0), np.full(d, 10.0)) if box is None else box
        pts, _ = lattice(lo, hi, 201 if d == 1 else 41)
        pts = pts[f.domain.contains(pts)]
        xm, am = _argmin(f, pts)
        x0 = xm if x0 is None else x0
        a = am if a is None else a
    alpha, _ = _alpha_from(f, np.asarray(x0, dtype=float).reshape(-1), float(a), beta1,
                           f.domain, directions, seed)
    return alpha


# --------------------------------------------------------------------------
# stage functions

def _extension_1d(c, u, v):
    """Convex extension of ``c`` from ``[u, v]`` by its tangent lines at ``u`` and ``v``.

    Lipschitz with constant ``L = max(|c'(u)|, |c'(v)|)``, below ``c`` everywhere
    and increasing as ``[u, v]`` grows.
    """
    gu, gv = c.gradients(np.array([[u], [v]]))[:, 0]
    L = float(max(abs(gu), abs(gv)))
    cu, cv = c.values(np.array([[u], [v]]))

    def func(X):
        x = X[:, 0]
        inner = c.values(np.clip(x, u, v).reshape(-1, 1))
        return inner + gu * np.minimum(x - u, 0.0) + gv * np.maximum(x - v, 0.0)

    def grad(X):
        x = X[:, 0]
        inner = c.gradients(np.clip(x, u, v).reshape(-1, 1))[:, 0]
        return np.where(x > v, gv, np.where(x < u, gu, inner)).reshape(-1, 1)

    fn = ConvexFn(func, 1, grad=grad, smoothness="nonsmooth", name=f"ext({c.name})")
    return fn, L


def _lifted(fn, r, beta):
    """``(1 - r)(fn - beta) + beta``."""
    def func(X):
        v = fn.values(X)
        return v - r * (v - beta)

    def grad(X):
        return (1.0 - r) * fn.gradients(X)

    return ConvexFn(func, fn.dim, grad=grad, smoothness=fn.smoothness, name=f"lift({fn.name})")


def _second_derivative_bound(c, G, h=1e-4):
    """Largest sampled ``|D(grad c)|`` along coordinate directions."""
    worst = 0.0
    for i in range(c.dim):
        e = np.zeros(c.dim)
        e[i] = h
        d = c.gradients(G + e) - c.gradients(G - e)
        worst = max(worst, float(np.max(np.linalg.norm(d, axis=1))) / (2 * h))
    return worst


class FineFn(ConvexFn):
    """Output of the fine schedule: ``l + g_K`` with its stages kept.

    ``stage_values(X, n)`` evaluates ``l + g_n``; on ``A_n`` it agrees bitwise
    with the full evaluation.
    """

    def __init__(self, f, c, ell, schedule, phis, mode):
        self.source = f
        self.c = c
        self.ell = np.asarray(ell, dtype=float).reshape(-1)
        self.schedule = schedule
        self.phis = phis
        self.mode = mode
        self.certificates = []
        smooth = "Cinf" if f.dim == 1 else f.smoothness
        super().__init__(self._values, f.dim, grad=self._grad, domain=f.domain,
                         smoothness=smooth, name=f"fine_{mode}({f.name})")

    def _stage(self, X, n, with_grad):
        sched = self.schedule
        cX = self.c.values(X)
        g = self.phis[0].values(X)
        dg = self.phis[0].gradients(X) if with_grad else None
        for k in range(2, n + 1):
            m = cX >= sched.a_level(k - 1)
            if not np.any(m):
                break
            params = SmoothMaxParams.compact(sched.delta[k - 2])
            Xm = X[m]
            p = self.phis[k - 1].values(Xm)
            if with_grad:
                wa, wb = smooth_max2_partials(params, g[m], p)
                dg[m] = wa[:, None] * dg[m] + wb[:, None] * self.phis[k - 1].gradients(Xm)
            g[m] = smooth_max2(params, g[m], p)
        return g, dg

    def stage_values(self, X, n):
        X = as_points(X, self.dim)[0]
        g, _ = self._stage(X, n, False)
        return g + X @ self.ell

    def _values(self, X):
        return self.stage_values(X, self.schedule.stages)

    def _grad(self, X):
        _, dg = self._stage(X, self.schedule.stages, True)
        return dg + self.ell[None, :]

    @property
    def passed(self):
        return all(c.passed for c in self.certificates)


def _levels(a, cmax, stages, b):
    if b is None:
        K = stages or 8
        step = 1.05 * (cmax - a) / K
        return K, a + step * np.arange(1, K + 4)
    n = np.arange(1, 200)
    beta = b - (b - a) * 0.5 ** n
    K = int(np.argmax(beta > cmax)) + 1
    K = max(K, stages or 1)
    if K + 3 > beta.size or not beta[K + 2] < b:
        raise ScheduleInfeasible("levels cannot approach the upper level in floating point",
                                 stage=K, inequality="levels")
    return K, beta[:K + 3]


def _construction_grid(c, x0, level, window, domain, resolution, seed):
    d = c.dim
    P = sublevel_boundary(c, level, x0, domain, 64, seed)
    lo = np.minimum(P.min(axis=0), window.min(axis=0))
    hi = np.maximum(P.max(axis=0), window.max(axis=0))
    if d > 1:
        pad = 0.05 * (hi - lo)
        lo, hi = lo - pad, hi + pad
    G, _ = lattice(lo, hi, resolution)
    G = np.vstack([G[domain.contains(G)], window])
    return G


def _fine_core(f, efun, window, mode, ell, b=None, cover=None, stages=None,
               resolution=None, seed=0, strict=True, verify=None):
    """Run the fine schedule on ``c = f - l``; see :func:`fine_c0`."""
    d = f.dim
    ell = np.asarray(ell, dtype=float).reshape(d)
    c = f.plus_linear(-ell)
    c.domain = f.domain
    domain = f.domain
    W = as_points(window, d)[0]
    cover = W if cover is None else as_points(cover, d)[0]
    efW = np.asarray(efun(W), dtype=float)
    if not np.all(np.isfinite(efW)) or np.any(efW <= 0):
        raise InvalidEpsilon("tolerance function must be positive on the evaluation grid")
    x0, a = _argmin(c, W)
    cW = c.values(W)
    cmax = float(np.max(c.values(cover)))
    K, levels = _levels(a, cmax, stages, b)
    sched = FineSchedule(a=a, levels=levels, stages=K, ell=ell)
    res = resolution or (4001 if d == 1 else 61)
    G = _construction_grid(c, x0, levels[K + 2], W, domain, res, seed)
    cG = c.values(G)
    extend = mode == "c0" and d == 1
    need_grad = mode == "c1" or not extend
    DcG = c.gradients(G) if need_grad else None
    gradnorm = np.linalg.norm(DcG, axis=1) if need_grad else None

    eps = np.array([np.min(efW[cW <= levels[n]]) / 6.0 for n in range(1, K + 2)])
    sched.eps = eps
    r = np.zeros(K + 1)
    s = np.zeros(K)
    lips = []
    bases = []
    prev = None
    for n in range(1, K + 2):
        beta = sched.beta(n)
        if extend:
            u_, v_ = [x0[0] + t * _ray_exit(c, x0, np.array([t]), levels[n + 1], domain)
                      for t in (-1.0, 1.0)]
            fn, L = _extension_1d(c, u_, v_)
            lips.append(L)
            fnG = fn.values(G)
        else:
            fn = c
            fnG = cG
        inB = cG < beta
        ring = (cG > beta) & (cG < levels[n])
        inB2 = cG < levels[n + 1]
        rr, failed = 0.5, None
        for _ in range(MAX_HALVINGS):
            failed = None
            ftG = fnG - rr * (fnG - beta)
            if np.any(inB) and not np.max(rr * (beta - cG[inB])) < eps[n - 1]:
                failed = "5a"
            elif np.any(ring) and not np.max(rr * (cG[ring] - beta)) < eps[n - 1]:
                failed = "5d"
            elif mode == "c1" and not rr * np.max(gradnorm[inB2]) <= eps[n - 1]:
                failed = "5c1"
            elif prev is not None:
                pr, pbeta, pfG = prev
                AN = sched.in_a_or_collar(cG, n - 1)
                out = cG >= sched.c_level(n - 1)
                # differences in cancelled form; f_{n-1} = f_n = c on A_{n-1} and its collar
                lift_prev = pr * (pfG[out] - pbeta)
                gaps = [pr * (pbeta - cG[AN]) - rr * (beta - cG[AN]), rr * (beta - cG[AN]),
                        np.minimum(lift_prev, fnG[out] - pfG[out] + lift_prev
                                   - rr * (fnG[out] - beta))]
                if not rr < pr:
                    failed = "monotone"
                elif min(gaps[0].min(), gaps[1].min()) <= 0:
                    failed = "6c"
                elif gaps[2].size and gaps[2].min() <= 0:
                    failed = "6a"
            if failed is None:
                break
            rr *= 0.5
        if failed is not None:
            raise ScheduleInfeasible(f"no shrink factor satisfies inequality {failed}",
                                     stage=n, inequality=failed)
        r[n - 1] = rr
        if prev is not None:
            s[n - 2] = 0.5 * min(float(np.min(g)) for g in gaps if g.size)
        prev = (rr, beta, fnG)
        if n <= K:
            bases.append(fn)
    sched.r, sched.s = r, s
    sched.lipschitz = np.array(lips)

    ep = np.zeros(K)
    ep[0] = 0.5 * min(eps[0], s[0])
    for n in range(2, K + 1):
        ep[n - 1] = 0.5 * min(eps[n - 1], s[n - 1], ep[n - 2])
    sched.eps_prime = ep
    sched.delta = np.array([0.5 * s[n - 2] for n in range(2, K + 1)])
    sched.alpha = _alpha_from(c, x0, a, sched.beta(1), domain, seed=seed)[0]

    phis, widths = [], []
    K2 = _second_derivative_bound(c, G) if mode == "c1" else None
    xscale = float(np.max(np.abs(G))) + 1.0
    for n in range(1, K + 1):
        ft = _lifted(bases[n - 1], r[n - 1], sched.beta(n))
        phi, t = _smooth_stage(ft, ep[n - 1], G, cG, sched, n, mode, K2, xscale,
                               lips[n - 1] * (1 - r[n - 1]) if extend else None,
                               gradnorm)
        phis.append(phi)
        widths.append(t)
    sched.widths = np.array(widths)

    out = FineFn(f, c, ell, sched, phis, mode)
    V = W if verify is None else as_points(verify, d)[0]
    out.certificates = certify_fine(out, f, efun, V)
    if strict and not out.passed:
        bad = [ct for ct in out.certificates if not ct.passed]
        raise StageFailure(f"certificate {bad[0].region} failed", stage=None,
                           residual=bad[0].measured - bad[0].bound)
    return out


def _smooth_stage(ft, ep, G, cG, sched, n, mode, K2, xscale, L, gradnorm):
    """``phi_n = mollify(ft_n - ep/2)`` with ``ft_n - ep <= phi_n <= ft_n`` on the grid."""
    d = ft.dim
    base = ft.shifted(0.5 * ep)
    if L is None:
        L = (1.0 - sched.r[n - 1]) * float(np.max(gradnorm))
    L = max(L, 1e-300)
    ulp = np.spacing(xscale)
    nodes = MOLLIFIER_NODES if d == 1 else 2
    t = ep / (4.0 * L * (1.0 + 1.0 / (2 * nodes)))
    if mode == "c1":
        t = min(t, ep / (2.0 * max(K2, 1e-300) * (1.0 + 1.0 / nodes)))
    ftG = ft.values(G)
    near = cG <= sched.beta(n + 1)
    dev = np.zeros(1)
    for _ in range(30):
        if t < MIN_WIDTH_ULPS * ulp:
            break
        if d == 1:
            nodes = int(min(MOLLIFIER_NODES, max(4, t / (256.0 * ulp))))
        phi = mollify(base, MollifierParams(t, nodes, "gradient" if mode == "c1" and d == 1 else "values"))
        dev = ftG - phi.values(G)
        ok = np.min(dev) >= 0 and np.max(dev) <= ep
        if ok and mode == "c1":
            gd = np.linalg.norm(phi.gradients(G[near]) - ft.gradients(G[near]), axis=1)
            ok = np.max(gd) <= ep
        if ok:
            return phi, t
        t *= 0.5
    raise StageFailure(f"stage {n} smoothing misses its sandwich above rounding level",
                       stage=n, residual=float(max(-np.min(dev), np.max(dev) - ep)))


def certify_fine(g, f, efun, V):
    """Per-region and pointwise certificates of a fine approximant on points ``V``."""
    sched = g.schedule
    K = sched.stages
    V = as_points(V, f.dim)[0]
    cV = g.c.values(V)
    err = np.abs(g.values(V) - f.values(V))
    tol = np.asarray(efun(V), dtype=float)
    idx = sched.region_index(cV)
    certs = []
    grad = g.mode == "c1"
    if grad:
        gerr = np.linalg.norm(g.gradients(V) - f.gradients(V), axis=1)
    for n in range(1, K + 1):
        m = idx == n
        if not np.any(m):
            continue
        bound = 3 * sched.eps[n - 1] if n < K else 2 * sched.eps[K - 1]
        certs.append(Certificate(f"C{n}\\C{n - 1}", float(bound), float(np.max(err[m])), "value"))
        if grad:
            gb = 5 * sched.eps[n - 1] if n < K else 2 * sched.eps[K - 1]
            certs.append(Certificate(f"C{n}\\C{n - 1}", float(gb), float(np.max(gerr[m])), "gradient"))
    certs.append(Certificate("pointwise", 0.0, float(np.max(err - tol)), "value"))
    if grad:
        certs.append(Certificate("pointwise", 0.0, float(np.max(gerr - tol)), "gradient"))
    return certs


# --------------------------------------------------------------------------
# public entry points

def _end_limit(f, end, inner):
    """``"finite"`` or ``"infinite"``: behaviour of ``f`` towards an end of its interval."""
    if np.isfinite(end):
        gap = end - inner
        probes = end - gap * 10.0 ** -np.arange(2, 9)
    else:
        probes = inner + np.sign(end) * (1.0 + abs(inner)) * 10.0 ** np.arange(1, 5)
    with np.errstate(over="ignore", invalid="ignore"):
        v = f.values(probes.reshape(-1, 1))
    if not np.all(np.isfinite(v)):
        return "infinite", None
    tail = np.abs(np.diff(v[-3:]))
    if np.all(tail <= 1e-6 * (1.0 + np.abs(v[-1]))):
        return "finite", float(v[-1])
    return "infinite", None


def _window_points(window, dim, per_axis):
    box = np.asarray(window, dtype=float).reshape(dim, 2)
    pts, _ = lattice(box[:, 0], box[:, 1], per_axis)
    return pts, box


def _interval_window(domain, window, per_axis):
    if window is None:
        b = domain.bounds()
        if b is None:
            raise ValueError("a window is required on an unbounded domain")
        lo, hi = float(b[0][0]), float(b[1][0])
        x = np.linspace(lo, hi, per_axis + 2)[1:-1]
        return x.reshape(-1, 1), np.array([[lo, hi]])
    return _window_points(window, 1, per_axis)


def _refine(W, box, per_axis, dim, domain):
    V, _ = lattice(box[:, 0], box[:, 1], 2 * per_axis - 1)
    inside = domain.contains(V) if not domain.is_whole else np.ones(V.shape[0], bool)
    return V[inside]


def _prepare_1d(f, domain, W, box):
    """Linear part and upper level for a one-dimensional properly convex ``f``."""
    lo_end, hi_end = (-np.inf, np.inf) if domain.is_whole else map(float, (domain.bounds()[0][0],
                                                                          domain.bounds()[1][0]))
    mid = float(np.median(W[:, 0]))
    kinds = []
    for end in (lo_end, hi_end):
        kinds.append(_end_limit(f, end, mid) if np.isfinite(end) else ("slope", None))
    if any(k == "finite" for k, _ in kinds):
        if not all(k == "finite" for k, _ in kinds):
            raise_not_proper({"limits": [k for k, _ in kinds],
                              "reason": "one finite and one infinite end limit; use fine_c0_1d"})
        (_, fa), (_, fb) = kinds
        slope = (fb - fa) / (hi_end - lo_end)
        b = fa - slope * lo_end
        cW = f.values(W) - slope * W[:, 0]
        if np.max(cW) - np.min(cW) <= 1e-12 * (1.0 + np.max(np.abs(cW))):
            raise_not_proper({"limits": ["finite", "finite"], "reason": "affine"})
        return np.array([slope]), b
    ga, gb = f.gradients(np.array([[box[0, 0]], [box[0, 1]]]))[:, 0]
    if not ga < gb:
        raise_not_proper({"window_slopes": [float(ga), float(gb)], "reason": "affine on the window"})
    return np.array([0.5 * (ga + gb)]), None


def raise_not_proper(evidence):
    from ..errors import NotProperlyConvex
    raise NotProperlyConvex("function is not properly convex", evidence=evidence)


def _prepare(f, U, window, per_axis, seed):
    d = f.dim
    if d == 1:
        W, box = _interval_window(U, window, per_axis)
        ell, b = _prepare_1d(f, U, W, box)
        return W, box, ell, b
    from ..structure import classify_fine_approximability
    verdict = classify_fine_approximability(f, seed=seed)
    if verdict.tag != "properly_convex":
        raise_not_proper(verdict.to_dict())
    if not U.is_whole:
        raise NotImplementedError("fine approximation on a bounded domain in dimension >= 2 "
                                  "is available through patch_sublevel")
    if window is None:
        raise ValueError("a window is required on an unbounded domain")
    W, box = _window_points(window, d, per_axis)
    return W, box, np.asarray(verdict.evidence["ell"], dtype=float), None


def fine_c0(f, efun, U=None, window=None, grid=None, stages=None, resolution=None,
            seed=0, strict=True):
    """Smooth convex ``g`` with ``|g - f| <= efun`` pointwise.

    Parameters
    ----------
    f : ConvexFn
        Properly convex: ``f - l`` has compact sublevel sets (or, on a bounded
        interval with finite end limits, sublevel sets exhausting it).
    efun : callable
        Positive tolerance, evaluated on ``(n, d)`` point arrays.
    U : Domain, optional
        Defaults to ``f.domain``.
    window : array_like, optional
        Evaluation box, shape ``(d, 2)``; required on unbounded domains.
    grid : int, optional
        Window points per axis (default 10001 in one dimension, 41 otherwise).
        Certificates are checked on a grid twice as fine.
    stages : int, optional
        Number of stages (levels cover the window either way).

    Returns
    -------
    FineFn
        With ``schedule`` and ``certificates``.

    Raises
    ------
    NotProperlyConvex
        If the precondition fails; the evidence is attached.
    ScheduleInfeasible
        If no shrink factor satisfies a stage inequality on the grid.
    StageFailure
        If a certificate fails and ``strict`` is set.
    """
    return _fine(f, efun, U, window, grid, stages, resolution, seed, strict, "c0")


def fine_c1(f, efun, U=None, window=None, grid=None, stages=None, resolution=None,
            seed=0, strict=True):
    """Smooth convex ``g`` with ``|g - f| <= efun`` and ``|Dg - Df| <= efun`` pointwise.

    Same interface as :func:`fine_c0`; ``f`` must be C^1. Stage functions are
    ``f`` itself and the shrink factors also bound ``r_n |Df|`` on the next
    two sets.
    """
    if f.smoothness == "nonsmooth":
        from ..errors import GradientsUnavailable
        raise GradientsUnavailable("fine_c1 needs a C^1 function")
    return _fine(f, efun, U, window, grid, stages, resolution, seed, strict, "c1")


STAGE_COUNTS = (8, 6, 4, 3, 2, 1)


def _fine(f, efun, U, window, grid, stages, resolution, seed, strict, mode):
    U = U if U is not None else f.domain
    per_axis = grid or (10001 if f.dim == 1 else 41)
    W, box, ell, b = _prepare(f, U, window, per_axis, seed)
    V = _refine(W, box, per_axis, f.dim, U)
    kw = dict(resolution=resolution, seed=seed, strict=strict, verify=V)
    if b is not None:
        # levels must reach past every certified point
        kw.update(b=b, cover=np.vstack([W, V]))
        return _fine_core(f, efun, W, mode, ell, stages=stages, **kw)
    if stages is not None:
        return _fine_core(f, efun, W, mode, ell, stages=stages, **kw)
    # fewer stages shrink less, which keeps the stage gaps above rounding
    attempts = []
    for K in STAGE_COUNTS:
        try:
            out = _fine_core(f, efun, W, mode, ell, stages=K, **kw)
        except (ScheduleInfeasible, StageFailure) as exc:
            attempts.append({"stages": K, "error": str(exc)})
            if K == STAGE_COUNTS[-1]:
                raise
            continue
        out.attempts = attempts
        return out


def _tangent_split(f, d_pt):
    """``f1``: ``f`` left of ``d`` and its tangent right of it; ``f2``: the reverse."""
    fd = float(f.values(np.array([[d_pt]]))[0])
    gd = float(f.gradients(np.array([[d_pt]]))[0, 0])

    def tangent(x):
        return fd + gd * (x - d_pt)

    def make(left_is_f, name):
        def func(X):
            x = X[:, 0]
            return np.where((x <= d_pt) == left_is_f, f.values(X), tangent(x))

        def grad(X):
            x = X[:, 0]
            return np.where(((x <= d_pt) == left_is_f)[:, None], f.gradients(X), gd)

        return ConvexFn(func, 1, grad=grad, smoothness="nonsmooth", name=name)

    dom = f.domain
    f1, f2 = make(True, f"{f.name}_left"), make(False, f"{f.name}_right")
    f1.domain = dom
    lo = dom.bounds()
    f2.domain = Domain.whole(1) if lo is None or not np.isfinite(lo[1][0]) \
        else Domain.interval(-np.inf, float(lo[1][0]))
    return f1, f2, tangent


class SplitFn(ConvexFn):
    """``M_{eps'}(g1, g2)`` from the mixed-limit case, with its parts kept."""

    def __init__(self, f, g1, g2, eps_prime, x1, x2, reflect=False):
        self.parts = (g1, g2)
        self.eps_prime = eps_prime
        self.x1, self.x2 = x1, x2
        self.reflect = reflect
        self.params = SmoothMaxParams.compact(eps_prime)
        self.certificates = []
        super().__init__(self._values, 1, grad=self._grad, domain=f.domain, smoothness="Cinf",
                         name=f"fine_1d({f.name})")

    def _map(self, X):
        return -X if self.reflect else X

    def _values(self, X):
        Y = self._map(X)
        return smooth_max2(self.params, self.parts[0].values(Y), self.parts[1].values(Y))

    def _grad(self, X):
        Y = self._map(X)
        a, b = self.parts[0].values(Y), self.parts[1].values(Y)
        wa, wb = smooth_max2_partials(self.params, a, b)
        D = wa[:, None] * self.parts[0].gradients(Y) + wb[:, None] * self.parts[1].gradients(Y)
        return -D if self.reflect else D

    @property
    def passed(self):
        return all(c.passed for c in self.certificates)


def _reflected(f):
    dom = f.domain
    b = dom.bounds()
    rdom = dom if b is None else Domain.interval(-float(b[1][0]), -float(b[0][0]))
    fn = ConvexFn(lambda X: f.values(-X), 1, grad=lambda X: -f.gradients(-X), domain=rdom,
                  smoothness=f.smoothness, name=f"{f.name}(-x)")
    return fn


def _choose_split(f, efun, W, box, candidates=41):
    """Split ``c < d`` with ``f'(d) > f'(c)``, ``x1 = c``, ``x2 = 2d - c``, maximizing ``eps'``.

    Candidates are ``c`` on an even grid of the window and ``d - c`` in
    ``{1/16, 1/8, 1/4}`` of its length. Returns ``(x1, x2, d, delta, eps')``.
    """
    lo, hi = box[0]
    span = hi - lo
    x = W[:, 0]
    tol = np.asarray(efun(W), dtype=float)
    best = None
    for c_pt in np.linspace(lo + 0.05 * span, hi - 0.05 * span, candidates):
        for frac in (1.0 / 16, 1.0 / 8, 1.0 / 4):
            d_pt = c_pt + frac * span
            x2 = 2 * d_pt - c_pt
            if x2 > hi:
                continue
            pts = np.array([[c_pt], [d_pt], [x2]])
            v = f.values(pts)
            gv = f.gradients(pts)[:, 0]
            if not gv[1] > gv[0]:
                continue
            tangent = v[1] + gv[1] * (pts[[0, 2], 0] - d_pt)
            delta = 0.5 * float(np.min(v[[0, 2]] - tangent))
            inner = (x >= c_pt) & (x <= x2)
            if not delta > 0 or not np.any(inner):
                continue
            eps_p = 0.5 * min(delta, float(np.min(tol[inner])))
            if best is None or eps_p > best[4]:
                best = (float(c_pt), float(x2), float(d_pt), delta, eps_p)
    if best is None:
        raise ScheduleInfeasible("no split point with a larger slope", stage=0, inequality="split")
    return best


def fine_c0_1d(f, efun, U=None, window=None, grid=10001, resolution=None, seed=0, strict=True):
    """Fine approximation of a convex function on an interval, any end behaviour.

    The end limits of ``f`` decide the branch: both infinite, or both finite
    (after removing the chord slope), go straight to :func:`fine_c0`; a
    function that is constant on the window is returned unchanged. With one
    finite and one infinite limit, ``f`` is split at a point ``d`` into
    ``f1`` (``f`` then its tangent at ``d``) and ``f2`` (the tangent, then
    ``f``); each half is approximated within a modified tolerance and the two
    are joined by the compact smooth maximum with parameter ``eps'``, so that
    ``g = g1`` left of ``x1`` and ``g = g2`` right of ``x2`` exactly.

    Returns
    -------
    ConvexFn
        ``f`` itself, a :class:`FineFn`, or a :class:`SplitFn` with
        ``certificates``.
    """
    U = U if U is not None else f.domain
    W, box = _interval_window(U, window, grid)
    cW = f.values(W)
    if np.max(cW) - np.min(cW) <= 1e-12 * (1.0 + np.max(np.abs(cW))):
        return f
    b = U.bounds()
    ends = (-np.inf, np.inf) if b is None else (float(b[0][0]), float(b[1][0]))
    mid = float(np.median(W[:, 0]))
    kinds = [_end_limit(f, e, mid)[0] for e in ends]
    if kinds[0] == kinds[1]:
        return fine_c0(f, efun, U, window, grid, None, resolution, seed, strict)
    if kinds[0] == "infinite":
        rf = _reflected(f)
        rwin = None if window is None else [-box[0, 1], -box[0, 0]]
        out = fine_c0_1d(rf, lambda X: efun(-X), rf.domain, rwin, grid, resolution, seed, strict)
        out.reflect = True
        out.x1, out.x2 = -out.x1, -out.x2
        out.certificates = _certify_split(out, f, efun, _refine(W, box, grid, 1, U))
        return out

    x1, x2, d_pt, delta, eps_p = _choose_split(f, efun, W, box)
    f1, f2, _ = _tangent_split(f, d_pt)

    def eps1(X):
        return 0.5 * np.minimum(eps_p, efun(X))

    def eps2(X):
        x = X[:, 0]
        out = np.full(x.shape, 0.5 * eps_p)
        right = x >= x1
        if np.any(right):
            out[right] = 0.5 * np.minimum(eps_p, efun(X[right]))
        return out

    g1 = fine_c0(f1, eps1, f1.domain, box, grid, None, resolution, seed, strict)
    g2 = fine_c0(f2, eps2, f2.domain, box, grid, None, resolution, seed, strict)
    out = SplitFn(f, g1, g2, eps_p, x1, x2)
    out.delta = delta
    out.split_point = d_pt
    out.certificates = _certify_split(out, f, efun, _refine(W, box, grid, 1, U))
    if strict and not out.passed:
        bad = [ct for ct in out.certificates if not ct.passed][0]
        raise StageFailure(f"certificate {bad.region} failed", stage=None,
                           residual=bad.measured - bad.bound)
    return out


def _certify_split(g, f, efun, V):
    err = np.abs(g.values(V) - f.values(V)) - efun(V)
    x = V[:, 0]
    sign = -1.0 if g.reflect else 1.0
    Y = sign * V
    g1, g2 = (p.values(Y) for p in g.parts)
    full = g.values(V)
    left = sign * x <= sign * g.x1 if not g.reflect else -x <= -g.x1
    right = -x >= -g.x2 if g.reflect else x >= g.x2
    left_dev = float(np.max(np.abs(full[left] - g1[left]))) if np.any(left) else 0.0
    right_dev = float(np.max(np.abs(full[right] - g2[right]))) if np.any(right) else 0.0
    return [Certificate("pointwise", 0.0, float(np.max(err)), "value"),
            Certificate("g=g1 left of x1", 0.0, left_dev, "identity"),
            Certificate("g=g2 right of x2", 0.0, right_dev, "identity")]
