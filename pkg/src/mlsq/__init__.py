"""Numerical workbench for multilinear square functions.

Modules
-------
dyadic      cube geometry, the cube selector Q(x, t), Whitney decomposition
gridfn      sampled functions on dyadic grids, norms, averages, BMO
kernels     kernel families theta_t, bound verification, Theta_t application
sqfn        scale grids, the square function, truncations, bound ratios
avgops      A_t, P_t, Q_t, the error split, Calderon reproduction
accretive   pseudo-accretive systems and the compatibility conditions
stopping    stopping-time decomposition and its certified bounds
carleson    tent masses, Carleson norms, level sets, embedding check
paraproduct the symbol-carrying paraproduct and the Tb-condition evaluator
cli         configuration-driven experiment runner with JSON/CSV/PNG reports
"""

__version__ = "0.1.0"

from . import (  # noqa: F401
    accretive,
    avgops,
    carleson,
    dyadic,
    gridfn,
    kernels,
    paraproduct,
    sqfn,
    stopping,
)
