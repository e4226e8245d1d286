"""Gradient-like scalar ODEs on the circle: dichotomies, bunches, the
u-invariant, constructions and checks."""

from .bunch import ClassifyParams, EquippedSet, GradientLikeReport, check_assumptions, classify, equipped_set, find_bunches
from .construct import autonomize, field_from_zeros, glue, library, library_names
from .dichotomy import estimate_dichotomy, lyapunov, lyapunov_decay_check
from .equimorph import LinearSystem, SemiStrip, phi_map, verify_equimorphism
from .expr import differentiate, evaluate, parse
from .invariant import UInvariant, equivalent, word_of
from .ode import IntegralCurve, OdeSystem, integrate, solve
from .periodic import almost_periods, periodic_points, poincare_map, rotation_number

__all__ = [
    "ClassifyParams",
    "EquippedSet",
    "GradientLikeReport",
    "IntegralCurve",
    "LinearSystem",
    "OdeSystem",
    "SemiStrip",
    "UInvariant",
    "almost_periods",
    "autonomize",
    "check_assumptions",
    "classify",
    "differentiate",
    "equipped_set",
    "equivalent",
    "estimate_dichotomy",
    "evaluate",
    "field_from_zeros",
    "find_bunches",
    "glue",
    "integrate",
    "library",
    "library_names",
    "lyapunov",
    "lyapunov_decay_check",
    "parse",
    "periodic_points",
    "phi_map",
    "poincare_map",
    "rotation_number",
    "solve",
    "verify_equimorphism",
    "word_of",
]
