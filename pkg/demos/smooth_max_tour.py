"""Smooth maxima: where they agree with max, and what they cost.

Run with ``python3 demos/smooth_max_tour.py``.
"""

import numpy as np

from convex_smooth import SmoothMaxParams, make_theta, make_theta_heat, smooth_max2


def main():
    eps = 0.5
    compact, heat = make_theta(eps), make_theta_heat(eps)
    print("t      |t|     compact   heat")
    for t in (0.0, 0.1, 0.25, 0.49, 0.5, 1.0, 3.0):
        print(f"{t:<6} {abs(t):<7} {compact(t):.6f}  {heat(t):.6f}")

    # the compact maximum is exactly max once the arguments are eps apart
    p = SmoothMaxParams.compact(eps)
    x = np.linspace(-1, 1, 9)
    print("\nM(x, 0) - max(x, 0):", np.round(smooth_max2(p, x, 0.0) - np.maximum(x, 0.0), 6))

    # the heat maximum never touches max, but keeps strict curvature
    q = SmoothMaxParams.heat(eps)
    print("heat M(x, 0) - max(x, 0):", np.round(smooth_max2(q, x, 0.0) - np.maximum(x, 0.0), 6))


if __name__ == "__main__":
    main()
