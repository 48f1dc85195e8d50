"""Shallow cuttings and static k-nearest-neighbor queries for general
distance surfaces (planes and additively weighted cones)."""

from .predicates import Tolerance, DEFAULT_TOL
from .surfaces import (
    Arc,
    Bbox,
    Surface,
    SurfaceSet,
    FAMILY_CONE,
    FAMILY_PLANE,
    InvalidK,
    OutOfDomain,
    DegenerateBisector,
    DegenerateTriple,
    bisector_arcs,
    below_point,
    eval_surface,
    jitter,
    lowest_k_along,
    rng_for,
    triple_points,
)

__all__ = [
    "Arc",
    "Bbox",
    "Surface",
    "SurfaceSet",
    "FAMILY_CONE",
    "FAMILY_PLANE",
    "Tolerance",
    "DEFAULT_TOL",
    "InvalidK",
    "OutOfDomain",
    "DegenerateBisector",
    "DegenerateTriple",
    "bisector_arcs",
    "below_point",
    "eval_surface",
    "jitter",
    "lowest_k_along",
    "rng_for",
    "triple_points",
]
