"""Supporting corners, reducibility and approximability classification.

A convex ``f`` on R^d is *reducible* when ``f = c(P x) + <l, x>`` for a linear
map ``P`` onto R^k with ``k < d``: it is then affine along ``ker P``. Reducible
functions cannot be approximated uniformly by strongly convex functions, and
on R^d (d >= 2) a convex function admits fine approximation exactly when it is
properly convex, i.e. ``f - l`` is coercive for some linear ``l``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import RANK_TOL, ConvexFn, CornerFn, affine_values, as_points, augmented_rank, lattice
from .errors import GradientsUnavailable, InconclusiveCoercivity, NoIndependentProbe

CONSTANCY_TOL = 1e-8


def _grads(f, X):
    G = f.gradients(X)
    if not np.all(np.isfinite(G)):
        raise GradientsUnavailable("gradient evaluation returned non-finite values")
    return G


def support_corner_at(f, x0, probes, max_pieces=None):
    """Corner made of tangent planes at ``x0`` and at selected probe points.

    Probes are taken greedily, in order, whenever their tangent plane raises
    the rank of the lifted slopes ``(-l_j, 1)``.

    Raises
    ------
    NoIndependentProbe
        If no probe gradient differs from the gradient at ``x0``.
    """
    d = f.dim
    x0 = as_points(x0, d)[0]
    P = as_points(probes, d)[0]
    pts = np.vstack([x0, P])
    G = _grads(f, pts)
    vals = f.values(pts)
    offsets = vals - np.sum(G * pts, axis=1)
    cap = max_pieces or d + 1
    chosen = [0]
    for i in range(1, pts.shape[0]):
        if len(chosen) >= cap:
            break
        if augmented_rank(G[chosen + [i]]) == len(chosen) + 1:
            chosen.append(i)
    if len(chosen) == 1:
        raise NoIndependentProbe("every probe gradient matches the gradient at x0")
    return CornerFn(G[chosen], offsets[chosen])


@dataclass
class Decomposition:
    """``f(x) = c(P x) + <ell, x> + offset`` with ``P`` of shape ``(k, d)``."""

    k: int
    P: np.ndarray
    ell: np.ndarray
    offset: float
    c: Optional[ConvexFn]
    kernel: np.ndarray
    residual: float = 0.0

    def reconstruct(self, X):
        X = np.atleast_2d(X)
        lin = affine_values(X, self.ell[None, :], [self.offset])[:, 0]
        if self.k == 0:
            return lin
        return self.c.values(X @ self.P.T) + lin

    def to_dict(self):
        return {"k": self.k, "P": self.P.tolist(), "ell": self.ell.tolist(),
                "offset": self.offset, "kernel": self.kernel.tolist(),
                "residual": self.residual}


def _sample_box(f, box, n, seed):
    rng = np.random.default_rng(seed)
    if box is None:
        b = f.domain.bounds()
        box = np.array([[-2.0, 2.0]] * f.dim) if b is None else np.stack(b, axis=1)
    box = np.asarray(box, dtype=float).reshape(f.dim, 2)
    mid = box.mean(axis=1)
    half = 0.5 * (box[:, 1] - box[:, 0])
    X = mid + half * (0.9 * (2 * rng.random((4 * n, f.dim)) - 1))
    X = X[f.domain.contains(X)]
    return X[:n], box


def detect_reducibility(f, budget=64, seed=0, box=None):
    """Detect ``f = c o P + l`` with ``k < d`` from sampled gradients.

    The span of ``grad f(x) - grad f(x0)`` is estimated by SVD. A singular
    value counts when it exceeds both ``1e-8 * sigma_1`` and an absolute floor
    ``1e-7 * (1 + max |grad f|)`` (finite-difference noise). The candidate is
    accepted only if ``f - l`` is constant along the kernel on fresh test
    segments (to 1e-8) and the reconstruction residual on fresh points is
    below 1e-8.

    Returns
    -------
    Decomposition or None
        ``None`` when the gradient differences span R^d or the constancy
        check fails.
    """
    d = f.dim
    X, box = _sample_box(f, box, budget, seed)
    G = _grads(f, X)
    D = G[1:] - G[0]
    if D.shape[0] == 0:
        raise GradientsUnavailable("not enough sample points in the domain")
    _, s, Vt = np.linalg.svd(D, full_matrices=True)
    floor = max(RANK_TOL * (s[0] if s.size else 0.0), 1e-7 * (1.0 + np.max(np.linalg.norm(G, axis=1))))
    k = int(np.sum(s > floor))
    if k >= d:
        return None
    P = Vt[:k]
    W = Vt[k:]
    ell = G[0].copy()

    def g(Y):
        return f.values(Y) - affine_values(Y, ell[None, :], [0.0])[:, 0]

    T, _ = _sample_box(f, box, 32, seed + 1)
    lo, hi = box[:, 0], box[:, 1]
    scale = 1.0 + np.max(np.abs(f.values(T)))
    worst = 0.0
    for w in W:
        for t in (-0.5, 0.25, 0.5):
            Y = T + t * np.min(hi - lo) * w
            ok = f.domain.contains(Y)
            if np.any(ok):
                worst = max(worst, float(np.max(np.abs(g(Y[ok]) - g(T[ok])))))
    if worst > CONSTANCY_TOL * scale:
        return None

    if k == 0:
        offset = float(np.mean(g(T)))
        c = None
    else:
        offset = 0.0

        def cfun(Z):
            Y = Z @ P
            return g(Y)

        c = ConvexFn(cfun, k, name=f"reduced({f.name})")
    dec = Decomposition(k, P, ell, offset, c, W)
    dec.residual = float(np.max(np.abs(dec.reconstruct(T) - f.values(T))))
    if dec.residual > CONSTANCY_TOL * scale:
        return None
    return dec


@dataclass
class Verdict:
    tag: str
    evidence: dict = field(default_factory=dict)
    decomposition: Optional[Decomposition] = None
    corner: Optional[CornerFn] = None

    def to_dict(self):
        out = {"tag": self.tag, "evidence": self.evidence}
        if self.decomposition is not None:
            out["decomposition"] = self.decomposition.to_dict()
        if self.corner is not None:
            out["corner"] = {"slopes": self.corner.slopes.tolist(),
                             "offsets": self.corner.offsets.tolist()}
        return out


def supporting_corner_witness(f, seed=0, budget=64):
    """Full ``(d+1)``-piece supporting corner at a random sample point."""
    X, _ = _sample_box(f, None, budget, seed)
    return support_corner_at(f, X[0], X[1:])


def classify_strong_approximability(f, budget=64, seed=0):
    """``reducible`` (not uniformly approximable by strongly convex functions)
    or ``corner_supported_everywhere`` with a witness corner."""
    dec = detect_reducibility(f, budget, seed)
    if dec is not None:
        return Verdict("reducible", {"k": dec.k, "residual": dec.residual,
                                     "strongly_approximable": False}, decomposition=dec)
    corner = supporting_corner_witness(f, seed, budget)
    return Verdict("corner_supported_everywhere",
                   {"pieces": corner.k_plus_1, "rank": augmented_rank(corner.slopes),
                    "strongly_approximable": True}, corner=corner)


def affine_chord_probe(f, resolution=11, samples=101, directions=4, seed=0, tol=1e-10):
    """Look for a chord of a bounded domain along which ``f`` is affine.

    Lines through lattice points of the domain, along the coordinate axes and
    a few random directions, are sampled across the whole domain; a line whose
    second differences all vanish (relative to ``tol``) is an obstruction to
    proper convexity. Returns the evidence dict of the first such chord, or
    ``None``.
    """
    dom = f.domain
    lo, hi = dom.bounds()
    d = f.dim
    rng = np.random.default_rng(seed)
    V = np.vstack([np.eye(d), rng.standard_normal((directions, d))])
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    pts, _ = lattice(lo, hi, resolution)
    pts = pts[dom.contains(pts)]
    span = float(np.max(hi - lo))
    tgrid = np.linspace(-span, span, 8 * samples + 1)
    for p in pts:
        for v in V:
            line = p + tgrid[:, None] * v
            inside = dom.contains(line) & (dom.dist_to_boundary(line) > 1e-6 * span)
            if np.sum(inside) < 5:
                continue
            ts = tgrid[inside]
            t = np.linspace(ts[0], ts[-1], samples)
            y = f.values(p + t[:, None] * v)
            sec = y[2:] - 2 * y[1:-1] + y[:-2]
            scale = 1.0 + np.max(np.abs(y))
            if np.max(np.abs(sec)) <= tol * scale:
                return {"point": p.tolist(), "direction": v.tolist(),
                        "chord": [float(t[0]), float(t[-1])],
                        "max_second_difference": float(np.max(np.abs(sec)))}
    return None


def probe_coercivity(f, ell, x0, seed=0, max_doublings=10, margin=1e-6):
    """Check that ``f - ell`` grows along ``2d + 2`` rays from ``x0``.

    Along each ray the radius doubles from 1 up to ``2^max_doublings`` until
    ``(f - ell)(x0 + R v)`` exceeds its value at ``x0`` by ``margin * (1 + R)``;
    convexity along the ray then forces linear growth beyond ``R``.
    """
    d = f.dim
    rng = np.random.default_rng(seed)
    V = np.vstack([np.eye(d), -np.eye(d), rng.standard_normal((2, d))])
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    ell = np.asarray(ell, dtype=float)

    def h(Y):
        return f.values(Y) - affine_values(Y, ell[None, :], [0.0])[:, 0]

    x0 = np.asarray(x0, dtype=float).reshape(1, d)
    h0 = h(x0)[0]
    rays = []
    for v in V:
        R, grew = 1.0, False
        for _ in range(max_doublings + 1):
            val = h(x0 + R * v)[0]
            if val - h0 > margin * (1.0 + R):
                grew = True
                break
            R *= 2.0
        rays.append({"direction": v.tolist(), "radius": R, "grew": grew,
                     "slope": float((val - h0) / R)})
    if not all(r["grew"] for r in rays):
        raise InconclusiveCoercivity("some ray neither grew within the radius budget")
    return rays


def classify_fine_approximability(f, budget=64, seed=0):
    """``properly_convex`` or ``not_properly_convex`` with sampled evidence.

    On R^d a reducible ``f`` is not properly convex; otherwise ``l`` is the
    mean slope of a supporting corner and ``f - l`` is probed for coercivity.
    On a bounded domain the function is probed for an affine chord instead,
    and the verdict records that the domain is outside the R^d setting.
    """
    if not f.domain.is_whole:
        evidence = {"domain": "out_of_scope", "domain_kind": f.domain.kind}
        if f.domain.bounds() is None:
            raise InconclusiveCoercivity("unbounded proper subdomain is not probed")
        chord = affine_chord_probe(f, seed=seed)
        if chord is not None:
            evidence["affine_chord"] = chord
            return Verdict("not_properly_convex", evidence)
        evidence["affine_chord"] = None
        return Verdict("properly_convex", evidence)
    dec = detect_reducibility(f, budget, seed)
    if dec is not None:
        return Verdict("not_properly_convex", {"reducible": True, "k": dec.k,
                                               "residual": dec.residual}, decomposition=dec)
    corner = supporting_corner_witness(f, seed, budget)
    ell = np.mean(corner.slopes, axis=0)
    X, _ = _sample_box(f, None, 1, seed)
    rays = probe_coercivity(f, ell, X[0], seed)
    return Verdict("properly_convex", {"reducible": False, "ell": ell.tolist(), "rays": rays},
                   corner=corner)
