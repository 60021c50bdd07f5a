"""Gluing local under-approximations of x^4 into one smooth function.

Five nested intervals, one local approximant each, joined by compact smooth
maxima whose widths shrink by 10 per stage. Inside the n-th interval the glued
function stops changing after stage n.
"""

import numpy as np

from convex_smooth.core import Domain, build_exhaustion
from convex_smooth.fixtures import power
from convex_smooth.pipelines import glue_global


def main():
    f = power(4)
    g = glue_global(f, build_exhaustion(Domain.whole(1), 5), 0.1)
    x = np.linspace(-4.9, 4.9, 4901).reshape(-1, 1)
    gap = f.values(x) - g.values(x)
    print(f"f - g ranges over [{gap.min():.4f}, {gap.max():.4f}] (allowed [0, 0.2])")
    for n in range(1, 5):
        inside = x[g.exhaustion.sets[n - 1].contains(x)]
        same = np.array_equal(g.stage_values(inside, n), g.values(inside))
        print(f"stage {n}: final value reached on B_{n}: {same}")


if __name__ == "__main__":
    main()
