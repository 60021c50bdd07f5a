"""Smooth and strongly convex approximation of convex functions, with certificates."""

from . import errors
from .core import (ConvexFn, CornerFn, Domain, Exhaustion, Grid, affine, build_exhaustion,
                   eval_corner, from_scalar, lattice, sample_grid)
from .regularizers import (MollifierParams, MoreauParams, heat_smooth_relu, lipschitz_extend,
                           mollify, moreau)
from .smooth_max import (SmoothMaxParams, make_theta, make_theta_heat, smooth_max2,
                         smooth_max2_fn, smooth_max_n)
from .structure import (classify_fine_approximability, classify_strong_approximability,
                        detect_reducibility, support_corner_at)
from .verify import Certificate, Report

__version__ = "0.1.0"

__all__ = [
    "errors", "ConvexFn", "CornerFn", "Domain", "Exhaustion", "Grid", "affine",
    "build_exhaustion", "eval_corner", "from_scalar", "lattice", "sample_grid",
    "MollifierParams", "MoreauParams", "heat_smooth_relu", "lipschitz_extend", "mollify",
    "moreau", "SmoothMaxParams", "make_theta", "make_theta_heat", "smooth_max2",
    "smooth_max2_fn", "smooth_max_n", "classify_fine_approximability",
    "classify_strong_approximability", "detect_reducibility", "support_corner_at",
    "Certificate", "Report",
]
