"""Staggered (MAC) grid on a rectangle, with difference operators.

Layout on ``[0, lx] x [0, ly]`` split into ``nx x ny`` cells:

* scalar fields live at cell centres, stored as arrays of shape ``(nx, ny)``
  (index ``[i, j]`` is the cell at ``x = (i + 1/2) hx, y = (j + 1/2) hy``);
* the x-component of a vector field lives on vertical faces, shape
  ``(nx + 1, ny)``; the y-component on horizontal faces, shape ``(nx, ny + 1)``.

Flattening is always C-order, so cell ``[i, j]`` has index ``i * ny + j``.

Boundary conditions for :func:`grad` / :func:`laplace` / :func:`laplace_matrix`
are given either as one condition applied to all four sides or as a dict
keyed by ``"left"``, ``"right"``, ``"bottom"``, ``"top"``.  A condition is one of
``"neumann"`` (zero normal derivative), ``"dirichlet"`` (zero boundary value)
or ``("robin", K)`` meaning ``d_n u = K (1 - u)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Grid2D",
    "FaceField",
    "grad",
    "div",
    "laplace",
    "laplace_matrix",
    "grad_matrix",
    "div_matrix",
    "face_average",
    "node_average",
    "face_weights",
    "inner",
    "l2_norm",
]

SIDES = ("left", "right", "bottom", "top")


@dataclass(frozen=True)
class Grid2D:
    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise ValueError(f"grid needs at least 4 cells per direction, got {self.nx}x{self.ny}")
        if self.lx <= 0 or self.ly <= 0:
            raise ValueError("grid extents must be positive")

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def h(self) -> float:
        return min(self.hx, self.hy)

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def area(self) -> float:
        return self.lx * self.ly

    @property
    def perimeter(self) -> float:
        return 2.0 * (self.lx + self.ly)

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def xface_shape(self):
        return (self.nx + 1, self.ny)

    @property
    def yface_shape(self):
        return (self.nx, self.ny + 1)

    def cell_centers(self):
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def xfaces(self):
        x = np.arange(self.nx + 1) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def yfaces(self):
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = np.arange(self.ny + 1) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def nodes(self):
        x = np.arange(self.nx + 1) * self.hx
        y = np.arange(self.ny + 1) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def integrate(self, f) -> float:
        return float(np.sum(f) * self.cell_area)

    def mean(self, f) -> float:
        return float(np.mean(f))

    def zeros(self):
        return np.zeros(self.shape)

    def check(self, f, name="field"):
        if np.shape(f) != self.shape:
            raise ValueError(f"{name} has shape {np.shape(f)}, grid expects {self.shape}")


@dataclass
class FaceField:
    """Vector field with components on the faces of a MAC grid."""

    grid: Grid2D
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        if self.u.shape != self.grid.xface_shape or self.v.shape != self.grid.yface_shape:
            raise ValueError(
                f"face components have shapes {self.u.shape}, {self.v.shape}; grid expects "
                f"{self.grid.xface_shape}, {self.grid.yface_shape}"
            )

    @classmethod
    def zeros(cls, grid: Grid2D) -> "FaceField":
        return cls(grid, np.zeros(grid.xface_shape), np.zeros(grid.yface_shape))

    @classmethod
    def from_function(cls, grid: Grid2D, fx, fy) -> "FaceField":
        """Sample ``fx`` on vertical faces and ``fy`` on horizontal faces."""
        return cls(grid, np.asarray(fx(*grid.xfaces()), float), np.asarray(fy(*grid.yfaces()), float))

    @classmethod
    def from_flat(cls, grid: Grid2D, w) -> "FaceField":
        nu = (grid.nx + 1) * grid.ny
        return cls(grid, w[:nu].reshape(grid.xface_shape).copy(), w[nu:].reshape(grid.yface_shape).copy())

    def flat(self) -> np.ndarray:
        return np.concatenate([self.u.ravel(), self.v.ravel()])

    def copy(self) -> "FaceField":
        return FaceField(self.grid, self.u.copy(), self.v.copy())

    def __add__(self, other):
        return FaceField(self.grid, self.u + other.u, self.v + other.v)

    def __sub__(self, other):
        return FaceField(self.grid, self.u - other.u, self.v - other.v)

    def __mul__(self, a):
        return FaceField(self.grid, self.u * a, self.v * a)

    __rmul__ = __mul__

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.u)), np.max(np.abs(self.v))))

    def cell_vectors(self):
        """Average both components to cell centres."""
        return 0.5 * (self.u[1:] + self.u[:-1]), 0.5 * (self.v[:, 1:] + self.v[:, :-1])

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v)))


# --- face weights and inner products ----------------------------------------


def face_weights(grid: Grid2D):
    """Control-volume areas of the faces (halved on the boundary)."""
    wu = np.full(grid.xface_shape, grid.cell_area)
    wu[0] *= 0.5
    wu[-1] *= 0.5
    wv = np.full(grid.yface_shape, grid.cell_area)
    wv[:, 0] *= 0.5
    wv[:, -1] *= 0.5
    return wu, wv


def inner(a: FaceField, b: FaceField) -> float:
    """Discrete L2 inner product of two face fields."""
    wu, wv = face_weights(a.grid)
    return float(np.sum(wu * a.u * b.u) + np.sum(wv * a.v * b.v))


def l2_norm(x, grid: Grid2D | None = None) -> float:
    """Discrete L2 norm of a cell field (needs ``grid``) or of a face field."""
    if isinstance(x, FaceField):
        return float(np.sqrt(inner(x, x)))
    return float(np.sqrt(np.sum(np.asarray(x) ** 2) * grid.cell_area))


# --- boundary conditions ----------------------------------------------------


def _sides(bc):
    if isinstance(bc, dict):
        missing = set(SIDES) - set(bc)
        if missing:
            raise ValueError(f"boundary conditions lack sides {sorted(missing)}")
        return {k: _norm_bc(bc[k]) for k in SIDES}
    one = _norm_bc(bc)
    return {k: one for k in SIDES}


def _norm_bc(b):
    if b in ("neumann", "dirichlet"):
        return (b, 0.0)
    if isinstance(b, tuple) and len(b) == 2 and b[0] == "robin":
        if b[1] <= 0:
            raise ValueError("Robin coefficient must be positive")
        return ("robin", float(b[1]))
    raise ValueError(f"unknown boundary condition {b!r}")


def _boundary_coeffs(kind, K, h):
    """Coefficients (a, b) with outward normal derivative ``a * (b - u_c)`` at a face.

    ``u_c`` is the adjacent cell value; Dirichlet uses a half-cell ghost,
    Robin eliminates the face value from ``d_n u = K (1 - u_face)``.
    """
    if kind == "neumann":
        return 0.0, 0.0
    if kind == "dirichlet":
        return 2.0 / h, 0.0
    return 2.0 * K / (2.0 + K * h), 1.0


# --- operators on arrays ------------------------------------------------------


def grad(grid: Grid2D, f, bc="neumann") -> FaceField:
    """Face-normal differences of a cell field, with boundary faces from ``bc``."""
    grid.check(f)
    s = _sides(bc)
    u = np.zeros(grid.xface_shape)
    v = np.zeros(grid.yface_shape)
    u[1:-1] = (f[1:] - f[:-1]) / grid.hx
    v[:, 1:-1] = (f[:, 1:] - f[:, :-1]) / grid.hy
    a, b = _boundary_coeffs(*s["left"], grid.hx)
    u[0] = -a * (b - f[0])
    a, b = _boundary_coeffs(*s["right"], grid.hx)
    u[-1] = a * (b - f[-1])
    a, b = _boundary_coeffs(*s["bottom"], grid.hy)
    v[:, 0] = -a * (b - f[:, 0])
    a, b = _boundary_coeffs(*s["top"], grid.hy)
    v[:, -1] = a * (b - f[:, -1])
    return FaceField(grid, u, v)


def div(w: FaceField):
    g = w.grid
    return (w.u[1:] - w.u[:-1]) / g.hx + (w.v[:, 1:] - w.v[:, :-1]) / g.hy


def laplace(grid: Grid2D, f, bc="neumann"):
    return div(grad(grid, f, bc))


def face_average(grid: Grid2D, f) -> FaceField:
    """Arithmetic mean of neighbouring cells; boundary faces copy the adjacent cell."""
    grid.check(f)
    u = np.empty(grid.xface_shape)
    v = np.empty(grid.yface_shape)
    u[1:-1] = 0.5 * (f[1:] + f[:-1])
    u[0], u[-1] = f[0], f[-1]
    v[:, 1:-1] = 0.5 * (f[:, 1:] + f[:, :-1])
    v[:, 0], v[:, -1] = f[:, 0], f[:, -1]
    return FaceField(grid, u, v)


def node_average(grid: Grid2D, f):
    """Average of a cell field to the grid nodes (edge/corner nodes use available cells)."""
    p = np.pad(f, 1, mode="edge")
    return 0.25 * (p[1:, 1:] + p[:-1, 1:] + p[1:, :-1] + p[:-1, :-1])


# --- sparse matrices -------------------------------------------------------------


def _second_diff_1d(n, h, lo, hi):
    main = np.full(n, -2.0)
    off = np.ones(n - 1)
    main[0] = -1.0 - _boundary_coeffs(*lo, h)[0] * h
    main[-1] = -1.0 - _boundary_coeffs(*hi, h)[0] * h
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / h**2


def laplace_matrix(grid: Grid2D, bc="neumann"):
    """Sparse 5-point Laplacian and the affine offset from Robin data.

    Returns ``(L, b)`` such that ``laplace(grid, f, bc).ravel() == L @ f.ravel() + b``.
    """
    s = _sides(bc)
    lx = _second_diff_1d(grid.nx, grid.hx, s["left"], s["right"])
    ly = _second_diff_1d(grid.ny, grid.hy, s["bottom"], s["top"])
    L = sp.kron(lx, sp.identity(grid.ny)) + sp.kron(sp.identity(grid.nx), ly)
    b = np.zeros(grid.shape)
    a, c = _boundary_coeffs(*s["left"], grid.hx)
    b[0] += a * c / grid.hx
    a, c = _boundary_coeffs(*s["right"], grid.hx)
    b[-1] += a * c / grid.hx
    a, c = _boundary_coeffs(*s["bottom"], grid.hy)
    b[:, 0] += a * c / grid.hy
    a, c = _boundary_coeffs(*s["top"], grid.hy)
    b[:, -1] += a * c / grid.hy
    return L.tocsr(), b.ravel()


def _diff_1d(n, h):
    """(n) x (n+1) forward difference: faces -> cells."""
    return sp.diags([-np.ones(n), np.ones(n)], [0, 1], shape=(n, n + 1)) / h


def div_matrix(grid: Grid2D):
    """Sparse divergence, faces (u then v, flattened) -> cells."""
    bx = sp.kron(_diff_1d(grid.nx, grid.hx), sp.identity(grid.ny))
    by = sp.kron(sp.identity(grid.nx), _diff_1d(grid.ny, grid.hy))
    return sp.hstack([bx, by]).tocsr()


def grad_matrix(grid: Grid2D):
    """Sparse gradient with zero boundary faces (homogeneous Neumann), cells -> faces."""
    gx = sp.lil_matrix(-_diff_1d(grid.nx, grid.hx).T)
    gx[0, :] = 0
    gx[-1, :] = 0
    gy = sp.lil_matrix(-_diff_1d(grid.ny, grid.hy).T)
    gy[0, :] = 0
    gy[-1, :] = 0
    Gx = sp.kron(gx.tocsr(), sp.identity(grid.ny))
    Gy = sp.kron(sp.identity(grid.nx), gy.tocsr())
    return sp.vstack([Gx, Gy]).tocsr()
