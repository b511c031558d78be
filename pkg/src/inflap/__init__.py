"""Numerical laboratory for ``Δ^γ_∞ u + q·∇u |∇u|^{2-γ}``."""

__version__ = "0.1.0"

from .core import Annulus, Ball, Box, DomainMask, Grid, Sampler, ScalarField, build_mask, sample  # noqa: E402
from .operator import CoefficientSet, DiscreteOperator, apply_L, directional_extremes, residual_semilinear  # noqa: E402
from .dirichlet import SolverConfig, SolveReport, monotone_iteration, relax_to_steady  # noqa: E402
from .eigen import EigenConfig, EigenResult, principal_eigenvalue  # noqa: E402

__all__ = [
    "Annulus", "Ball", "Box", "DomainMask", "Grid", "Sampler", "ScalarField", "build_mask", "sample",
    "CoefficientSet", "DiscreteOperator", "apply_L", "directional_extremes", "residual_semilinear",
    "SolverConfig", "SolveReport", "monotone_iteration", "relax_to_steady",
    "EigenConfig", "EigenResult", "principal_eigenvalue",
]
