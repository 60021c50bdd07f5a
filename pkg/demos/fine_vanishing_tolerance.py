"""Approximating x^2 within a tolerance that vanishes at infinity.

The tolerance is 1 / (1 + x^2). A uniform approximation cannot follow it, so
the construction builds a sequence of sublevel sets and tightens the budget
set by set.
"""

import numpy as np

from convex_smooth.fixtures import power
from convex_smooth.pipelines import fine_c0


def main():
    f = power(2)
    efun = lambda X: 1.0 / (1.0 + X[:, 0] ** 2)  # noqa: E731
    g = fine_c0(f, efun, window=[[-6.0, 6.0]], grid=4001)
    s = g.schedule
    print("stage  level      budget")
    for n in range(s.stages):
        print(f"{n + 1:>5}  {s.levels[n]:<9.4f}  {s.eps[n]:.5f}")
    for x in (0.0, 2.0, 4.0, 6.0):
        err = abs(g(x) - f(x))
        print(f"x = {x}: |g - f| = {err:.2e}  tolerance {1 / (1 + x * x):.2e}")
    print("certificates passed:", g.passed)


if __name__ == "__main__":
    main()
