"""Phase-field tumour growth with singular potentials: regularized potentials,
staggered-grid solvers for nutrient and flow, time stepping, steady states."""

__version__ = "0.1.0"

from .config import ConfigError, ModelParams, RunConfig, parse_config
from .evolution import SimState, Stepper, delta_continuation, run, step
from .flow import BrinkmanProblem, ViscosityProfile, divergence_lift, solve_brinkman, solve_darcy
from .grid import FaceField, Grid2D, div, grad, laplace
from .linsolve import SolverError, SparseSystem, solve_general, solve_spd
from .nutrient import NutrientProblem, solve_nutrient
from .potentials import PotentialSpec, beta, beta_hat, beta_prime, cutoff, cutoff_prime, psi
from .sources import SourceModel, build_example_model, gamma_phi, gamma_stationary, gamma_v
from .stationary import StationaryConfig, solve_stationary, stabilizer_F, stationary_residual

__all__ = [
    "ConfigError", "ModelParams", "RunConfig", "parse_config",
    "SimState", "Stepper", "delta_continuation", "run", "step",
    "BrinkmanProblem", "ViscosityProfile", "divergence_lift", "solve_brinkman", "solve_darcy",
    "FaceField", "Grid2D", "div", "grad", "laplace",
    "SolverError", "SparseSystem", "solve_general", "solve_spd",
    "NutrientProblem", "solve_nutrient",
    "PotentialSpec", "beta", "beta_hat", "beta_prime", "cutoff", "cutoff_prime", "psi",
    "SourceModel", "build_example_model", "gamma_phi", "gamma_stationary", "gamma_v",
    "StationaryConfig", "solve_stationary", "stabilizer_F", "stationary_residual",
]
