"""Anisotropic total-variation minimization through exact level-set cuts."""

from .anisotropy import Anisotropy, AnisotropyError, CrystallineError
from .geom import (CurvatureProblem, CutResult, DirichletResult, curvature_energy,
                   dirichlet_decomposition, solve_curvature, solve_dirichlet_tv)
from .grid import (BinarySet, ScalarField, Stencil, cell_tv, crofton_weights, divergence,
                   forward_gradient, pairwise_perimeter, pairwise_tv)
from .rof import RofProblem, SolverReport, energy, solve

__all__ = [
    "Anisotropy", "AnisotropyError", "CrystallineError",
    "CurvatureProblem", "CutResult", "DirichletResult", "curvature_energy",
    "dirichlet_decomposition", "solve_curvature", "solve_dirichlet_tv",
    "BinarySet", "ScalarField", "Stencil", "cell_tv", "crofton_weights", "divergence",
    "forward_gradient", "pairwise_perimeter", "pairwise_tv",
    "RofProblem", "SolverReport", "energy", "solve",
]

__version__ = "0.1.0"
