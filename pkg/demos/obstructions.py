"""Functions that resist approximation, and how the library reports them.

|x1| on the plane is affine along x2, so no strongly convex function stays
uniformly close to it, and it cannot be approximated finely either. Any
smooth convex g below |x| with g(0) <= 0 keeps a gap at infinity.
"""

import numpy as np

from convex_smooth.core import from_scalar
from convex_smooth.errors import NotProperlyConvex
from convex_smooth.fixtures import abs_first, flat_strip, power
from convex_smooth.pipelines import fine_c0, global_underapprox
from convex_smooth.structure import classify_fine_approximability, classify_strong_approximability


def main():
    for name, f in (("|x1|", abs_first(2)), ("x1^2 + x2^2", power(2, dim=2))):
        strong = classify_strong_approximability(f).tag
        fine = classify_fine_approximability(f).tag
        print(f"{name:<12} strong: {strong:<28} fine: {fine}")

    try:
        fine_c0(flat_strip(), lambda X: np.full(X.shape[0], 0.1))
    except NotProperlyConvex as exc:
        chord = exc.evidence["evidence"]["affine_chord"]
        print("flat strip rejected; affine along", np.round(chord["direction"], 3))

    absval = from_scalar(np.abs, np.sign)
    for eps in (0.1, 0.2):
        g = global_underapprox(absval, eps=eps, m_max=4)
        print(f"eps = {eps}: |x| - g(x) at x = 1000 is {1000 - g(1000.0):.4f}")


if __name__ == "__main__":
    main()
