"""Approximation pipelines built on the core, smooth-max and regularizer layers."""

from .body import Body, certify_body, parabola_epigraph, smooth_body_outer, zero_level_points
from .corner import (corner_underapprox_on_compact, smooth_corner,
                     strongly_convex_approx_corner, tangent_planes)
from .fine import (FineFn, FineSchedule, SplitFn, certify_fine, estimate_alpha, fine_c0,
                   fine_c0_1d, fine_c1)
from .glue import GluedFn, GlueSchedule, glue_global, global_underapprox
from .patch import PatchFn, patch_sublevel

__all__ = [
    "Body", "certify_body", "parabola_epigraph", "smooth_body_outer", "zero_level_points",
    "corner_underapprox_on_compact", "smooth_corner", "strongly_convex_approx_corner",
    "tangent_planes", "FineFn", "FineSchedule", "SplitFn", "certify_fine", "estimate_alpha",
    "fine_c0", "fine_c0_1d", "fine_c1", "GluedFn", "GlueSchedule", "glue_global",
    "global_underapprox", "PatchFn", "patch_sublevel",
]
