"""Reference functions used by tests, demos and the acceptance suite."""

from __future__ import annotations

import numpy as np

from .core import ConvexFn, Domain


def power(p, dim=1):
    """``sum_k x_k^p`` for an even ``p``."""
    return ConvexFn(lambda X: np.sum(X ** p, axis=1), dim,
                    grad=lambda X: p * X ** (p - 1), smoothness="Cinf", name=f"x^{p}")


def abs_first(dim=2):
    """``|x_1|`` on R^d: affine along every direction orthogonal to ``e_1``."""
    e = np.zeros(dim)
    e[0] = 1.0
    return ConvexFn(lambda X: np.abs(X[:, 0]), dim,
                    grad=lambda X: np.sign(X[:, 0])[:, None] * e[None, :], name="|x1|")


def flat_strip(eps=0.25):
    """``phi(x) + psi(x + eps y) + psi(x - eps y)`` on the open square ``(-1, 1)^2``.

    ``phi(x) = x^2 + |x|^3`` is strongly convex but not C^3 at 0, and
    ``psi(t) = max(|t| - a, 0)^4`` with ``a = eps (1 + eps)`` vanishes on
    ``[-a, a]``. On the strip where both ``psi`` terms vanish the function
    depends on ``x`` only, so it is affine (constant) along vertical chords.
    """
    a = eps * (1.0 + eps)

    def psi(t):
        return np.maximum(np.abs(t) - a, 0.0) ** 4

    def dpsi(t):
        return 4.0 * np.sign(t) * np.maximum(np.abs(t) - a, 0.0) ** 3

    def func(X):
        x, y = X[:, 0], X[:, 1]
        return x * x + np.abs(x) ** 3 + psi(x + eps * y) + psi(x - eps * y)

    def grad(X):
        x, y = X[:, 0], X[:, 1]
        dp, dm = dpsi(x + eps * y), dpsi(x - eps * y)
        gx = 2 * x + 3 * x * np.abs(x) + dp + dm
        return np.stack([gx, eps * (dp - dm)], axis=1)

    return ConvexFn(func, 2, grad=grad, domain=Domain.box([-1.0, -1.0], [1.0, 1.0]),
                    smoothness="C2", name="flat_strip")
