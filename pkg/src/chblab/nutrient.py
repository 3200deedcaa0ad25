"""Quasistatic nutrient: ``-lap(sigma) + h(phi) sigma = 0`` with Robin influx ``d_n sigma = K (1 - sigma)``."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .grid import SIDES, Grid2D, grad, laplace_matrix
from .linsolve import SparseSystem, solve_spd

__all__ = ["NutrientProblem", "default_consumption", "solve_nutrient", "nutrient_residual", "nutrient_energy_terms"]


def default_consumption(h0: float) -> Callable:
    """``h(r) = h0 (1 + clip(r, -1, 1)) / 2``: the tumour consumes, the host does not."""
    if h0 < 0:
        raise ValueError(f"nutrient.h0={h0} must be nonnegative")

    def h(r):
        return h0 * 0.5 * (1.0 + np.clip(r, -1.0, 1.0))

    return h


@dataclass
class NutrientProblem:
    grid: Grid2D
    phi: np.ndarray
    h: Callable = default_consumption(1.0)
    K: float = 1.0
    robin_sides: tuple = SIDES
    tol: float = 1e-12

    def __post_init__(self):
        self.grid.check(self.phi, "phi")
        if self.K <= 0:
            raise ValueError(f"nutrient.K={self.K} must be positive")

    def bc(self):
        return {s: (("robin", self.K) if s in self.robin_sides else "neumann") for s in SIDES}

    def consumption(self):
        h = np.asarray(self.h(self.phi), dtype=float) * np.ones(self.grid.shape)
        if np.any(h < 0) or not np.all(np.isfinite(h)):
            raise ValueError("consumption h(phi) must be finite and nonnegative")
        return h


def solve_nutrient(prob: NutrientProblem, guess=None) -> np.ndarray:
    """Cell-centred solution; a symmetric M-matrix system, so ``0 <= sigma <= 1``.

    ``guess`` (e.g. the previous time step's field) only warm-starts the iteration.
    """
    L, b = laplace_matrix(prob.grid, prob.bc())
    A = -L + sp.diags(prob.consumption().ravel())
    x0 = None if guess is None else np.asarray(guess, dtype=float).ravel()
    sigma = solve_spd(SparseSystem(A, b, tol=prob.tol), x0=x0)
    # the exact discrete solution obeys the bounds; only solver-level noise is projected away
    excess = max(float(np.max(sigma)) - 1.0, -float(np.min(sigma)), 0.0)
    if excess <= 100 * prob.tol:
        sigma = np.clip(sigma, 0.0, 1.0)
    return sigma.reshape(prob.grid.shape)


def nutrient_residual(prob: NutrientProblem, sigma) -> np.ndarray:
    L, b = laplace_matrix(prob.grid, prob.bc())
    return (L @ sigma.ravel() + b).reshape(prob.grid.shape) - prob.consumption() * sigma


def nutrient_energy_terms(prob: NutrientProblem, sigma):
    """Discrete pieces of the testing-by-sigma identity.

    Returns ``(grad_sq, boundary_sq, boundary_lin, consumption)`` with
    ``grad_sq = int |grad sigma|^2`` (including the half cells next to Robin
    faces), ``boundary_sq = K int_bdry sigma_face^2`` and
    ``boundary_lin = K int_bdry sigma_face``.  The solution satisfies
    ``grad_sq + consumption + boundary_sq = boundary_lin``.
    """
    g = prob.grid
    w = grad(g, sigma, prob.bc())
    A = g.cell_area
    grad_sq = A * (np.sum(w.u[1:-1] ** 2) + np.sum(w.v[:, 1:-1] ** 2))
    boundary_sq = 0.0
    boundary_lin = 0.0
    K = prob.K
    edges = {
        "left": (sigma[0], -w.u[0], g.hx, g.hy),
        "right": (sigma[-1], w.u[-1], g.hx, g.hy),
        "bottom": (sigma[:, 0], -w.v[:, 0], g.hy, g.hx),
        "top": (sigma[:, -1], w.v[:, -1], g.hy, g.hx),
    }
    for side, (sc, dn, hn, ht) in edges.items():
        if side not in prob.robin_sides:
            continue
        face = 1.0 - dn / K  # from d_n sigma = K (1 - sigma_face)
        grad_sq += np.sum(dn**2) * 0.5 * hn * ht
        boundary_sq += K * np.sum(face**2) * ht
        boundary_lin += K * np.sum(face) * ht
    consumption = g.integrate(prob.consumption() * sigma**2)
    return float(grad_sq), float(boundary_sq), float(boundary_lin), float(consumption)
