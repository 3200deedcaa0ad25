"""Velocity and pressure: Brinkman with traction boundary data, Darcy, and the divergence lift.

Brinkman problem on the MAC grid::

    -div(2 eta(c) Dv + lam(c) div(v) I - p I) + nu v = f,   div v = g,
    (2 eta Dv + lam div(v) I - p I) n = t   on the boundary.

The discretization is the stationarity system of the quadratic form

    a(v, v) = sum_cells A [2 eta (exx^2 + eyy^2) + lam (exx + eyy)^2]
            + sum_interior_nodes A 4 eta exy^2 + nu |v|^2_W

with normal strains at cell centres, shear strains at interior nodes and
``W`` the face control volumes (halved on the boundary).  Shear stresses
at boundary nodes and normal stresses on boundary faces are the traction
data themselves, which enter the right-hand side only, so the matrix is
symmetric for any traction.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import FaceField, Grid2D, div, div_matrix, face_average, face_weights, grad, inner, laplace_matrix, node_average
from .linsolve import SolverError, SparseSystem, solve_general, solve_spd

__all__ = [
    "ViscosityProfile",
    "BrinkmanProblem",
    "BrinkmanOperator",
    "solve_brinkman",
    "brinkman_energy_balance",
    "solve_darcy",
    "divergence_lift",
    "lift_h1_ratio",
    "capillary_force",
]


@dataclass(frozen=True)
class ViscosityProfile:
    """Shear viscosity ``eta`` between ``eta0`` and ``eta1`` and bulk viscosity ``lam = lambda0``.

    ``kind="constant"`` uses ``eta0`` everywhere; ``kind="linear"`` interpolates
    from ``eta0`` at ``c = -1`` to ``eta1`` at ``c = 1`` (clamped outside).
    """

    eta0: float = 1.0
    eta1: float = 1.0
    lambda0: float = 0.0
    kind: str = "constant"

    def __post_init__(self):
        if self.kind not in ("constant", "linear"):
            raise ValueError(f"flow.profile must be 'constant' or 'linear', got {self.kind!r}")
        if self.eta0 < 0 or self.eta1 < 0 or self.lambda0 < 0:
            raise ValueError("viscosities must be nonnegative")
        if self.kind == "linear" and self.eta1 < self.eta0:
            raise ValueError("flow.eta1 must be at least flow.eta0")

    def eta(self, c):
        c = np.asarray(c, dtype=float)
        if self.kind == "constant":
            return np.full_like(c, self.eta0)
        return self.eta0 + (self.eta1 - self.eta0) * 0.5 * (1.0 + np.clip(c, -1.0, 1.0))

    def lam(self, c):
        return np.full_like(np.asarray(c, dtype=float), self.lambda0)

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant" or self.eta0 == self.eta1


@dataclass
class BrinkmanProblem:
    grid: Grid2D
    c: np.ndarray
    f: FaceField
    g: np.ndarray
    nu: float = 1.0
    viscosity: ViscosityProfile = field(default_factory=ViscosityProfile)
    traction: Callable | None = None  # (x, y, nx, ny) -> (tx, ty)
    tol: float = 1e-10
    method: str = "direct"

    def __post_init__(self):
        self.grid.check(self.c, "c")
        self.grid.check(self.g, "g")
        if self.nu <= 0:
            raise ValueError(f"flow.nu={self.nu} must be positive")
        for arr in (self.c, self.g, self.f.u, self.f.v):
            if not np.all(np.isfinite(arr)):
                raise ValueError("Brinkman data must be finite")


def _node_diff(n, h):
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n)) / h


def _inner_select(n):
    return sp.identity(n + 1, format="csr")[1:n]


class BrinkmanOperator:
    """Assembled pieces of the discrete Brinkman saddle-point system."""

    def __init__(self, grid: Grid2D, c, nu: float, viscosity: ViscosityProfile):
        self.grid = grid
        A = grid.cell_area
        self.nu = nu
        self.B = div_matrix(grid)
        nu_ = (grid.nx + 1) * grid.ny
        nc, nv_ = grid.size, grid.nx * (grid.ny + 1)
        Bx = sp.hstack([self.B[:, :nu_], sp.csr_matrix((nc, nv_))]).tocsr()
        By = sp.hstack([sp.csr_matrix((nc, nu_)), self.B[:, nu_:]]).tocsr()
        self.nu_faces = nu_
        eta_c = viscosity.eta(c).ravel()
        lam_c = viscosity.lam(c).ravel()
        eta_n = viscosity.eta(node_average(grid, c))[1:-1, 1:-1].ravel()
        gy_u = sp.kron(_inner_select(grid.nx), _node_diff(grid.ny, grid.hy))
        gx_v = sp.kron(_node_diff(grid.nx, grid.hx), _inner_select(grid.ny))
        S = 0.5 * sp.hstack([gy_u, gx_v])
        wu, wv = face_weights(grid)
        self.W = np.concatenate([wu.ravel(), wv.ravel()])
        D = sp.diags
        self.K_eta = (
            Bx.T @ D(2 * A * eta_c) @ Bx + By.T @ D(2 * A * eta_c) @ By + S.T @ D(4 * A * eta_n) @ S
        )
        self.K_lam = self.B.T @ D(A * lam_c) @ self.B
        self.K = (self.K_eta + self.K_lam + D(nu * self.W)).tocsr()
        AB = A * self.B
        self.matrix = sp.bmat([[self.K, -AB.T], [-AB, None]], format="csc")
        self._lu = None

    def factor(self):
        if self._lu is None:
            self._lu = spla.splu(self.matrix)
        return self._lu

    def form(self, v: FaceField, w: FaceField, bulk: bool = True, friction: bool = True) -> float:
        """Bilinear form ``int 2 eta Dv:Dw [+ lam div v div w] [+ nu v.w]``."""
        x, y = v.flat(), w.flat()
        val = x @ (self.K_eta @ y)
        if bulk:
            val += x @ (self.K_lam @ y)
        if friction:
            val += self.nu * np.sum(self.W * x * y)
        return float(val)


def _traction_load(grid: Grid2D, traction) -> np.ndarray:
    """Right-hand-side contributions of prescribed boundary tractions (face-ordered)."""
    hx, hy = grid.hx, grid.hy
    nx, ny = grid.nx, grid.ny
    ru = np.zeros(grid.xface_shape)
    rv = np.zeros(grid.yface_shape)
    xs = (np.arange(nx) + 0.5) * hx
    ys = (np.arange(ny) + 0.5) * hy
    xn = np.arange(nx + 1) * hx
    yn = np.arange(ny + 1) * hy

    def t(x, y, n1, n2):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        tx, ty = traction(x, y, n1, n2)
        return np.broadcast_to(tx, x.shape).astype(float), np.broadcast_to(ty, x.shape).astype(float)

    # normal stresses on boundary faces
    sxx_left = -t(0.0, ys, -1.0, 0.0)[0]
    sxx_right = t(grid.lx, ys, 1.0, 0.0)[0]
    syy_bottom = -t(xs, 0.0, 0.0, -1.0)[1]
    syy_top = t(xs, grid.ly, 0.0, 1.0)[1]
    # shear stresses on boundary nodes (corner nodes averaged over the two sides)
    sxy_left = -t(0.0, yn, -1.0, 0.0)[1]
    sxy_right = t(grid.lx, yn, 1.0, 0.0)[1]
    sxy_bottom = -t(xn, 0.0, 0.0, -1.0)[0]
    sxy_top = t(xn, grid.ly, 0.0, 1.0)[0]
    for a, b, ia, ib in (
        (sxy_left, sxy_bottom, 0, 0),
        (sxy_left, sxy_top, -1, 0),
        (sxy_right, sxy_bottom, 0, -1),
        (sxy_right, sxy_top, -1, -1),
    ):
        m = 0.5 * (a[ia] + b[ib])
        a[ia] = m
        b[ib] = m

    ru[0] += -hy * sxx_left + 0.5 * hx * np.diff(sxy_left)
    ru[-1] += hy * sxx_right + 0.5 * hx * np.diff(sxy_right)
    rv[:, 0] += -hx * syy_bottom + 0.5 * hy * np.diff(sxy_bottom)
    rv[:, -1] += hx * syy_top + 0.5 * hy * np.diff(sxy_top)
    # tangential faces next to the walls see the boundary shear
    rv[0, 1:-1] += -hy * sxy_left[1:-1]
    rv[-1, 1:-1] += hy * sxy_right[1:-1]
    ru[1:-1, 0] += -hx * sxy_bottom[1:-1]
    ru[1:-1, -1] += hx * sxy_top[1:-1]
    return np.concatenate([ru.ravel(), rv.ravel()])


def solve_brinkman(prob: BrinkmanProblem, operator: BrinkmanOperator | None = None):
    """Return ``(v, p, operator)`` for the discrete Brinkman problem.

    ``operator`` may be passed back in to reuse the assembly and factorization
    when only ``f``, ``g`` or the traction changed.
    """
    g = prob.grid
    op = operator or BrinkmanOperator(g, prob.c, prob.nu, prob.viscosity)
    W = op.W
    rhs_v = W * prob.f.flat()
    if prob.traction is not None:
        rhs_v = rhs_v + _traction_load(g, prob.traction)
    rhs = np.concatenate([rhs_v, -g.cell_area * prob.g.ravel()])
    system = SparseSystem(op.matrix, rhs, tol=prob.tol)
    if prob.method == "direct":
        x = op.factor().solve(rhs)
        res = system.relative_residual(x)
        if not np.isfinite(res) or res > max(10 * prob.tol, 1e-12):
            raise SolverError("Brinkman saddle-point solve missed tolerance", res)
    else:
        x = solve_general(system, method=prob.method)
    nf = W.size
    v = FaceField.from_flat(g, x[:nf])
    p = x[nf:].reshape(g.shape)
    return v, p, op


def brinkman_energy_balance(prob: BrinkmanProblem, v: FaceField, p, op: BrinkmanOperator):
    """``(a(v, v), (f, v) + (p, g) + traction work)``; equal for the discrete solution."""
    lhs = op.form(v, v)
    rhs = inner(prob.f, v) + prob.grid.integrate(p * prob.g)
    if prob.traction is not None:
        rhs += float(_traction_load(prob.grid, prob.traction) @ v.flat())
    return lhs, rhs


def capillary_force(grid: Grid2D, potential, phi) -> FaceField:
    """Face force ``potential * grad(phi)`` with homogeneous Neumann data for ``phi``."""
    gp = grad(grid, phi)
    pa = face_average(grid, potential)
    return FaceField(grid, pa.u * gp.u, pa.v * gp.v)


def solve_darcy(grid: Grid2D, mu, sigma, phi, g, nu: float = 1.0, chi: float = 0.0, tol: float = 1e-12):
    """Darcy velocity ``v = -(grad p - (mu + chi sigma) grad phi) / nu`` with ``p = 0`` on the boundary.

    The pressure solves ``-(1/nu) lap p = g - (1/nu) div((mu + chi sigma) grad phi)``,
    so the reconstructed face velocity has ``div v = g`` to solver tolerance.
    """
    if nu <= 0:
        raise ValueError(f"flow.nu={nu} must be positive")
    F = capillary_force(grid, mu + chi * sigma, phi)
    L, _ = laplace_matrix(grid, "dirichlet")
    rhs = nu * g.ravel() - div(F).ravel()
    p = solve_spd(SparseSystem(-L, rhs, tol=tol)).reshape(grid.shape)
    gp = grad(grid, p, "dirichlet")
    v = (gp - F) * (-1.0 / nu)
    return v, p


def divergence_lift(grid: Grid2D, f, tol: float = 1e-12) -> FaceField:
    """Gradient field ``u = grad q`` with ``div u = f`` and uniform outward flux ``int f / |boundary|``."""
    grid.check(f, "f")
    flux = grid.integrate(f) / grid.perimeter
    wb = FaceField.zeros(grid)
    wb.u[0], wb.u[-1] = -flux, flux
    wb.v[:, 0], wb.v[:, -1] = -flux, flux
    L, _ = laplace_matrix(grid, "neumann")
    rhs = -(f - div(wb)).ravel()
    q = solve_spd(SparseSystem(-L, rhs, tol=tol), singular=True).reshape(grid.shape)
    return grad(grid, q) + wb


def lift_h1_ratio(grid: Grid2D, f, u: FaceField) -> float:
    """``||u||_{H^1} / ||f||_{L^2}`` on the grid (differences of face components)."""
    A = grid.cell_area
    du = np.sum(np.diff(u.u, axis=0) ** 2) / grid.hx**2 + np.sum(np.diff(u.u, axis=1) ** 2) / grid.hy**2
    dv = np.sum(np.diff(u.v, axis=0) ** 2) / grid.hx**2 + np.sum(np.diff(u.v, axis=1) ** 2) / grid.hy**2
    h1 = np.sqrt(inner(u, u) + A * (du + dv))
    fn = np.sqrt(grid.integrate(f * f))
    return float(h1 / fn) if fn > 0 else 0.0
