"""Smoothed absolute values and the smooth maximum built on them.

Two smoothed absolute values are provided:

* ``compact``: ``|.|`` convolved with the standard C^inf bump supported on
  ``[-eps, eps]``. It coincides with ``|t|`` for ``|t| >= eps``.
* ``heat``: ``|.|`` convolved with a heat kernel of variance ``2r`` plus
  ``eps/2``, with ``r = pi eps^2 / 16``. It has strictly positive curvature
  everywhere and satisfies ``|t| <= theta(t) <= |t| + eps``.

The smooth maximum is ``M(x, y) = (x + y + theta(x - y)) / 2``. It is evaluated
as ``max(x, y) + (theta(x - y) - |x - y|) / 2`` so that, for the compact
variant, ``M(x, y)`` is bitwise equal to ``max(x, y)`` once ``|x - y| >= eps``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .core import ConvexFn
from .errors import DomainMismatch, EmptyList, InvalidEpsilon

TABLE_CELLS = 2048
TABLE_VERSION = 1
_MAGIC = b"CSTHETA1"

_table = None


def bump(u):
    """Unnormalized bump ``exp(-1 / (1 - u^2))`` on ``(-1, 1)``, zero outside."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    return out


class ThetaTable:
    """Unit-scale tables for the compact smoothed absolute value.

    On ``tau in [0, 1]`` stores ``E(tau) = 2 int_tau^1 (u - tau) b(u) du / Z`` and
    ``T(tau) = int_tau^1 b(u) du / Z``, with ``b`` the bump and ``Z`` its mass,
    so that ``theta_eps(t) = |t| + eps E(|t| / eps)`` and
    ``theta_eps'(t) = sign(t) (1 - 2 T(|t| / eps))``. Both are interpolated with
    cubic Hermite pieces using the exact derivatives ``E' = -2T`` and ``T' = -b/Z``.
    """

    def __init__(self, nodes, E, T, Z):
        self.nodes = np.asarray(nodes, dtype=float)
        self.E = np.asarray(E, dtype=float)
        self.T = np.asarray(T, dtype=float)
        self.Z = float(Z)
        self.h = self.nodes[1] - self.nodes[0]

    @classmethod
    def compute(cls, cells=TABLE_CELLS, order=12):
        nodes = np.linspace(0.0, 1.0, cells + 1)
        gx, gw = np.polynomial.legendre.leggauss(order)
        h = 1.0 / cells
        mid = 0.5 * (nodes[:-1] + nodes[1:])
        u = mid[:, None] + 0.5 * h * gx[None, :]
        w = 0.5 * h * gw[None, :]
        b = bump(u)
        m0 = np.sum(w * b, axis=1)
        m1 = np.sum(w * b * u, axis=1)
        # tail integrals from each node to 1
        t0 = np.concatenate([np.cumsum(m0[::-1])[::-1], [0.0]])
        t1 = np.concatenate([np.cumsum(m1[::-1])[::-1], [0.0]])
        Z = 2.0 * t0[0]
        T = t0 / Z
        E = 2.0 * (t1 - nodes * t0) / Z
        E[-1] = 0.0
        T[-1] = 0.0
        return cls(nodes, E, T, Z)

    def _hermite(self, tau, y, dy):
        tau = np.clip(tau, 0.0, 1.0)
        i = np.minimum((tau / self.h).astype(int), len(self.nodes) - 2)
        s = (tau - self.nodes[i]) / self.h
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        return (h00 * y[i] + h10 * self.h * dy[i] + h01 * y[i + 1] + h11 * self.h * dy[i + 1])

    def excess(self, tau):
        """``E(tau)``; zero for ``tau >= 1``."""
        tau = np.asarray(tau, dtype=float)
        out = self._hermite(tau, self.E, -2.0 * self.T)
        return np.where(tau >= 1.0, 0.0, out)

    def tail(self, tau):
        """``T(tau)``; zero for ``tau >= 1``."""
        tau = np.asarray(tau, dtype=float)
        out = self._hermite(tau, self.T, -bump(self.nodes) / self.Z)
        return np.where(tau >= 1.0, 0.0, out)

    def to_bytes(self):
        n = len(self.nodes)
        head = _MAGIC + struct.pack("<IId", TABLE_VERSION, n, self.Z)
        body = np.concatenate([self.E, self.T]).astype("<f8").tobytes()
        return head + body

    @classmethod
    def from_bytes(cls, data):
        if data[:8] != _MAGIC:
            raise ValueError("not a theta table cache")
        version, n, Z = struct.unpack("<IId", data[8:24])
        if version != TABLE_VERSION:
            raise ValueError(f"unsupported theta table version {version}")
        arr = np.frombuffer(data[24:], dtype="<f8")
        if arr.size != 2 * n:
            raise ValueError("truncated theta table cache")
        return cls(np.linspace(0.0, 1.0, n), arr[:n].copy(), arr[n:].copy(), Z)


def unit_table():
    global _table
    if _table is None:
        _table = ThetaTable.compute()
    return _table


def save_table(path, table=None):
    with open(path, "wb") as fh:
        fh.write((table or unit_table()).to_bytes())


def load_table(path):
    with open(path, "rb") as fh:
        return ThetaTable.from_bytes(fh.read())


def _check_eps(eps):
    eps = float(eps)
    if not np.isfinite(eps) or eps <= 0:
        raise InvalidEpsilon(f"epsilon must be positive, got {eps}")
    return eps


class SmoothAbs:
    """Smoothed absolute value ``theta`` with deviation parameter ``epsilon``.

    Use :func:`make_theta` or :func:`make_theta_heat` to build one. Calling the
    object evaluates ``theta``; :meth:`excess` returns ``theta(t) - |t|``.
    """

    def __init__(self, epsilon, variant, table=None):
        self.epsilon = _check_eps(epsilon)
        if variant not in ("compact", "heat"):
            raise ValueError(f"unknown variant {variant!r}")
        self.variant = variant
        self.table = table if table is not None else (unit_table() if variant == "compact" else None)
        self.r = np.pi * self.epsilon ** 2 / 16.0 if variant == "heat" else None

    def __repr__(self):
        return f"SmoothAbs(epsilon={self.epsilon!r}, variant={self.variant!r})"

    def excess(self, t):
        t = np.abs(np.asarray(t, dtype=float))
        eps = self.epsilon
        if self.variant == "compact":
            return eps * self.table.excess(t / eps)
        s = 2.0 * np.sqrt(self.r)
        return eps / 2 + s / np.sqrt(np.pi) * np.exp(-(t / s) ** 2) - t * erfc(t / s)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.abs(t) + self.excess(t)
        return float(out) if out.ndim == 0 else out

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        if self.variant == "compact":
            out = np.sign(t) * (1.0 - 2.0 * self.table.tail(np.abs(t) / self.epsilon))
        else:
            out = np.sign(t) * (1.0 - erfc(np.abs(t) / (2.0 * np.sqrt(self.r))))
        return float(out) if out.ndim == 0 else out

    def deriv2(self, t):
        t = np.asarray(t, dtype=float)
        if self.variant == "compact":
            out = 2.0 * bump(t / self.epsilon) / (self.table.Z * self.epsilon)
        else:
            out = 2.0 * np.exp(-t * t / (4.0 * self.r)) / np.sqrt(4.0 * np.pi * self.r)
        return float(out) if out.ndim == 0 else out

    def log_deriv2(self, t):
        """``log theta''(t)``; finite wherever the curvature is positive, even if it underflows."""
        t = np.asarray(t, dtype=float)
        if self.variant == "heat":
            return np.log(2.0 / np.sqrt(4.0 * np.pi * self.r)) - t * t / (4.0 * self.r)
        u = np.abs(t) / self.epsilon
        inside = u < 1.0
        out = np.full(u.shape, -np.inf)
        out[inside] = np.log(2.0 / (self.table.Z * self.epsilon)) - 1.0 / (1.0 - u[inside] ** 2)
        return out


def make_theta(eps):
    """Compact smoothed absolute value; equals ``|t|`` exactly for ``|t| >= eps``."""
    return SmoothAbs(eps, "compact")


def make_theta_heat(eps):
    """Heat-kernel smoothed absolute value with ``|t| <= theta(t) <= |t| + eps``."""
    return SmoothAbs(eps, "heat")


@dataclass(frozen=True)
class SmoothMaxParams:
    theta: SmoothAbs

    @classmethod
    def compact(cls, eps):
        return cls(make_theta(eps))

    @classmethod
    def heat(cls, eps):
        return cls(make_theta_heat(eps))

    @property
    def epsilon(self):
        return self.theta.epsilon


def _params(p):
    return p if isinstance(p, SmoothMaxParams) else SmoothMaxParams(p)


def smooth_max2(params, x, y):
    """``M(x, y) = (x + y + theta(x - y)) / 2`` evaluated elementwise."""
    theta = _params(params).theta
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.maximum(x, y) + 0.5 * theta.excess(x - y)
    return float(out) if out.ndim == 0 else out


def smooth_max2_partials(params, x, y):
    """Partial derivatives ``(dM/dx, dM/dy)``, each in ``[0, 1]`` and summing to one."""
    theta = _params(params).theta
    dt = theta.deriv(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    return 0.5 * (1.0 + dt), 0.5 * (1.0 - dt)


def _combined_smoothness(*fns):
    order = ["nonsmooth", "C1", "C2", "Cinf"]
    return order[min(order.index(f.smoothness) for f in fns)]


def smooth_max2_fn(params, f, g):
    """Pointwise smooth maximum of two convex functions on a common domain."""
    params = _params(params)
    if f.dim != g.dim or not f.domain.same_as(g.domain):
        raise DomainMismatch("smooth maximum needs functions on the same domain")

    def func(X):
        return smooth_max2(params, f.values(X), g.values(X))

    def grad(X):
        a, b = smooth_max2_partials(params, f.values(X), g.values(X))
        return a[:, None] * f.gradients(X) + b[:, None] * g.gradients(X)

    return ConvexFn(func, f.dim, grad=grad, domain=f.domain,
                    smoothness=_combined_smoothness(f, g),
                    name=f"M({f.name},{g.name})")


def smooth_max_n(eps, fns, variant="compact"):
    """Right-nested smooth maximum ``M(f1, M(f2, ... M(f_{m-1}, f_m)))``.

    Each node uses ``eps / (2m)``, so the result lies between ``max_j f_j`` and
    ``max_j f_j + eps / 2``.
    """
    fns = list(fns)
    if not fns:
        raise EmptyList("smooth_max_n needs at least one function")
    m = len(fns)
    if m == 1:
        return fns[0]
    theta = SmoothAbs(float(eps) / (2 * m), variant)
    params = SmoothMaxParams(theta)
    acc = fns[-1]
    for f in reversed(fns[:-1]):
        acc = smooth_max2_fn(params, f, acc)
    return acc
