"""Sparse linear solvers.

``solve_spd`` is a Jacobi-preconditioned conjugate gradient that also copes
with the singular pure-Neumann case (compatible right-hand side, mean-zero
solution).  ``solve_general`` handles nonsymmetric and indefinite systems
with BiCGSTAB, restarted GMRES or a sparse direct factorization.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = ["SparseSystem", "SolverError", "solve_spd", "solve_general"]


class SolverError(RuntimeError):
    """Raised when a solve fails; carries the final residual (relative unless ``label`` says otherwise)."""

    def __init__(self, message, residual=float("nan"), label="relative residual"):
        super().__init__(f"{message} ({label} {residual:.3e})")
        self.residual = residual


@dataclass
class SparseSystem:
    matrix: sp.spmatrix
    rhs: np.ndarray
    tol: float = 1e-10
    max_iter: int | None = None

    def __post_init__(self):
        self.matrix = sp.csr_matrix(self.matrix)
        self.rhs = np.asarray(self.rhs, dtype=float).ravel()
        n, m = self.matrix.shape
        if n != m:
            raise ValueError(f"matrix must be square, got {self.matrix.shape}")
        if self.rhs.size != n:
            raise ValueError(f"rhs has length {self.rhs.size}, matrix has {n} rows")
        if self.max_iter is None:
            self.max_iter = 20 * n

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def relative_residual(self, x) -> float:
        b = np.linalg.norm(self.rhs)
        r = np.linalg.norm(self.rhs - self.matrix @ x)
        return float(r / b) if b > 0 else float(r)


def solve_spd(system: SparseSystem, singular: bool = False, x0=None) -> np.ndarray:
    """Preconditioned conjugate gradients.

    With ``singular=True`` the matrix is taken to have the constants as its
    null space: the right-hand side is projected onto mean zero before the
    iteration and the returned solution has zero mean.
    """
    A = system.matrix
    b = system.rhs.copy()
    if singular:
        b -= b.mean()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(system.n)
    d = A.diagonal()
    if np.any(d <= 0):
        raise SolverError("matrix diagonal is not positive", np.nan)
    minv = 1.0 / d

    x = np.zeros(system.n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    z = minv * r
    p = z.copy()
    rz = r @ z
    res = np.linalg.norm(r) / bnorm
    for _ in range(system.max_iter):
        if res <= system.tol:
            break
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise SolverError("conjugate gradients met a non-positive curvature direction", res)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if singular:
            r -= r.mean()
        res = np.linalg.norm(r) / bnorm
        z = minv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    else:
        if res > system.tol:
            raise SolverError("conjugate gradients did not converge", res)
    if singular:
        x -= x.mean()
    return x


def _bicgstab(system: SparseSystem, M, x0):
    A, b = system.matrix, system.rhs
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(system.n)
    x = np.zeros(system.n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    rhat = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros_like(b)
    p = np.zeros_like(b)
    res = np.linalg.norm(r) / bnorm
    for _ in range(system.max_iter):
        if res <= system.tol:
            return x
        rho_new = rhat @ r
        if rho_new == 0.0:
            raise SolverError("BiCGSTAB breakdown (rho = 0)", res)
        beta = (rho_new / rho) * (alpha / omega)
        p = r + beta * (p - omega * v)
        phat = M(p)
        v = A @ phat
        alpha = rho_new / (rhat @ v)
        s = r - alpha * v
        if np.linalg.norm(s) / bnorm <= system.tol:
            return x + alpha * phat
        shat = M(s)
        t = A @ shat
        tt = t @ t
        if tt == 0.0:
            raise SolverError("BiCGSTAB breakdown (t = 0)", res)
        omega = (t @ s) / tt
        x = x + alpha * phat + omega * shat
        r = s - omega * t
        rho = rho_new
        res = np.linalg.norm(r) / bnorm
        if omega == 0.0:
            raise SolverError("BiCGSTAB breakdown (omega = 0)", res)
    if res > system.tol:
        raise SolverError("BiCGSTAB did not converge", res)
    return x


def _ilu(A):
    try:
        ilu = spla.spilu(sp.csc_matrix(A), drop_tol=1e-5, fill_factor=20)
    except RuntimeError:
        return lambda x: x
    return ilu.solve


def solve_general(system: SparseSystem, method: str = "bicgstab", precondition: bool = True, x0=None):
    """Solve a general square system.

    Parameters
    ----------
    method : {"bicgstab", "gmres", "direct"}
        ``"direct"`` uses a sparse LU factorization; the Krylov methods use an
        incomplete LU preconditioner when ``precondition`` is set.
    """
    A, b = system.matrix, system.rhs
    if method == "direct":
        x = spla.spsolve(sp.csc_matrix(A), b)
        if not np.all(np.isfinite(x)):
            raise SolverError("sparse LU produced non-finite values", np.inf)
    else:
        M = _ilu(A) if precondition else (lambda y: y)
        if method == "bicgstab":
            x = _bicgstab(system, M, x0)
        elif method == "gmres":
            op = spla.LinearOperator(A.shape, matvec=M)
            x, info = spla.gmres(A, b, x0=x0, M=op, rtol=system.tol, atol=0.0, restart=50,
                                 maxiter=system.max_iter)
            if info != 0:
                raise SolverError("GMRES did not converge", system.relative_residual(x))
        else:
            raise ValueError(f"unknown method {method!r}")
    res = system.relative_residual(x)
    # Krylov stopping tests use recursive residuals; check the true one with some slack
    if res > max(10.0 * system.tol, 1e-13):
        raise SolverError(f"{method} solve missed tolerance", res)
    return x
