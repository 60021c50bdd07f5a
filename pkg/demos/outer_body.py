"""A smooth convex body just outside a square.

The distance to the square is mollified and lowered, giving a body D with
C inside D inside C + eps B and a nonvanishing gradient on its boundary.
"""

from convex_smooth.pipelines import Body, certify_body, smooth_body_outer


def main():
    C = Body.polytope([[-1, -1], [1, -1], [1, 1], [-1, 1]])
    D = smooth_body_outer(C, 0.1)
    for c in certify_body(D, grid_per_axis=120):
        print(f"{c.region:<28} measured {c.measured:+.3e}  bound {c.bound:g}  passed {c.passed}")


if __name__ == "__main__":
    main()
