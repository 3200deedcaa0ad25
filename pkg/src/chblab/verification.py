"""Closed-form and manufactured problems used to verify the solvers.

Every study returns plain numbers so the CLI can tabulate them and the test
suite can assert on them.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .flow import (
    BrinkmanProblem,
    ViscosityProfile,
    capillary_force,
    divergence_lift,
    lift_h1_ratio,
    solve_brinkman,
    solve_darcy,
)
from .grid import FaceField, Grid2D, div, l2_norm
from .nutrient import NutrientProblem, solve_nutrient

__all__ = [
    "observed_orders",
    "nutrient_slab_error",
    "constant_divergence_error",
    "BrinkmanManufactured",
    "brinkman_manufactured_error",
    "darcy_manufactured_error",
    "darcy_limit_study",
    "lift_check",
    "convergence_study",
]


def observed_orders(errors) -> list:
    e = np.asarray(errors, dtype=float)
    return [float(x) for x in np.log2(e[:-1] / e[1:])]


def nutrient_slab_profile(x, length, c, K):
    """Exact ``sigma`` for ``sigma'' = c^2 sigma`` on ``[0, length]`` with Robin influx at both ends."""
    return np.cosh(c * (x - length / 2)) * K / (c * np.sinh(c * length / 2) + K * np.cosh(c * length / 2))


def nutrient_slab_error(nx: int, length: float = 1.0, c: float = 2.0, K: float = 1.5) -> float:
    """Max error against the slab profile; Robin on left/right, Neumann on a four-cell-high strip."""
    g = Grid2D(nx, 4, length, length * 4 / nx)
    prob = NutrientProblem(g, np.zeros(g.shape), h=lambda r: c * c + 0 * r, K=K, robin_sides=("left", "right"))
    sigma = solve_nutrient(prob)
    X, _ = g.cell_centers()
    return float(np.max(np.abs(sigma - nutrient_slab_profile(X, length, c, K))))


def constant_divergence_error(n: int = 64, eta: float = 0.7, lam: float = 0.3, nu: float = 2.0, g0: float = 1.3):
    """Relative errors ``(v, p)`` for the constant-divergence pair.

    ``v0 = (g0/2)(x - 1/2, y - 1/2)`` has divergence ``g0`` and zero traction
    with ``p0 = g0 (eta + lam)``; the body force ``nu v0`` balances friction.
    """
    g = Grid2D(n, n)
    vx = lambda x, y: 0.5 * g0 * (x - 0.5)  # noqa: E731
    vy = lambda x, y: 0.5 * g0 * (y - 0.5)  # noqa: E731
    force = FaceField.from_function(g, lambda x, y: nu * vx(x, y), lambda x, y: nu * vy(x, y))
    prob = BrinkmanProblem(g, np.zeros(g.shape), force, np.full(g.shape, g0), nu, ViscosityProfile(eta, eta, lam))
    v, p, _ = solve_brinkman(prob)
    exact = FaceField.from_function(g, vx, vy)
    p0 = g0 * (eta + lam)
    return float(l2_norm(v - exact) / l2_norm(exact)), float(np.max(np.abs(p - p0)) / p0)


class BrinkmanManufactured:
    """Smooth ``(v, p)`` with viscosity following ``c = 0.8 sin(2x + 1/2) cos y`` linearly.

    ``u = sin(pi x) cos y + x y``, ``w = cos(x + 2y) + x^2/3``, ``p = cos x e^y``;
    the forcing, divergence and boundary tractions are derived by hand.
    """

    def __init__(self, eta0=0.5, eta1=2.0, lam=0.4, nu=1.5):
        self.profile = ViscosityProfile(eta0, eta1, lam, "linear")
        self.lam, self.nu = lam, nu
        self.slope = 0.5 * (eta1 - eta0)
        self.eta0 = eta0

    @staticmethod
    def c(x, y):
        return 0.8 * np.sin(2 * x + 0.5) * np.cos(y)

    def eta(self, x, y):
        return self.eta0 + self.slope * (1.0 + self.c(x, y))

    def _parts(self, x, y):
        pi = np.pi
        sx, cx = np.sin(pi * x), np.cos(pi * x)
        s2, c2 = np.sin(x + 2 * y), np.cos(x + 2 * y)
        d = {
            "u": sx * np.cos(y) + x * y,
            "ux": pi * cx * np.cos(y) + y,
            "uy": -sx * np.sin(y) + x,
            "uxx": -pi * pi * sx * np.cos(y),
            "uxy": -pi * cx * np.sin(y) + 1.0,
            "uyy": -sx * np.cos(y),
            "w": c2 + x * x / 3,
            "wx": -s2 + 2 * x / 3,
            "wy": -2 * s2,
            "wxx": -c2 + 2.0 / 3,
            "wxy": -2 * c2,
            "wyy": -4 * c2,
            "p": np.cos(x) * np.exp(y),
            "px": -np.sin(x) * np.exp(y),
            "py": np.cos(x) * np.exp(y),
            "eta": self.eta(x, y),
            "etax": self.slope * 1.6 * np.cos(2 * x + 0.5) * np.cos(y),
            "etay": -self.slope * 0.8 * np.sin(2 * x + 0.5) * np.sin(y),
        }
        return d

    def velocity(self, x, y):
        d = self._parts(x, y)
        return d["u"], d["w"]

    def pressure(self, x, y):
        return np.cos(x) * np.exp(y)

    def divergence(self, x, y):
        d = self._parts(x, y)
        return d["ux"] + d["wy"]

    def stress(self, x, y):
        d = self._parts(x, y)
        dv = d["ux"] + d["wy"]
        sxx = 2 * d["eta"] * d["ux"] + self.lam * dv - d["p"]
        syy = 2 * d["eta"] * d["wy"] + self.lam * dv - d["p"]
        sxy = d["eta"] * (d["uy"] + d["wx"])
        return sxx, syy, sxy

    def force(self, x, y):
        d = self._parts(x, y)
        eta, ex, ey, lam = d["eta"], d["etax"], d["etay"], self.lam
        shear = d["uy"] + d["wx"]
        dx_div = d["uxx"] + d["wxy"]
        dy_div = d["uxy"] + d["wyy"]
        dsxx = 2 * ex * d["ux"] + 2 * eta * d["uxx"] + lam * dx_div - d["px"]
        dsxy_y = ey * shear + eta * (d["uyy"] + d["wxy"])
        dsxy_x = ex * shear + eta * (d["uxy"] + d["wxx"])
        dsyy = 2 * ey * d["wy"] + 2 * eta * d["wyy"] + lam * dy_div - d["py"]
        return -(dsxx + dsxy_y) + self.nu * d["u"], -(dsxy_x + dsyy) + self.nu * d["w"]

    def traction(self, x, y, n1, n2):
        sxx, syy, sxy = self.stress(x, y)
        return sxx * n1 + sxy * n2, sxy * n1 + syy * n2

    def solve(self, n: int):
        g = Grid2D(n, n)
        X, Y = g.cell_centers()
        force = FaceField.from_function(g, lambda x, y: self.force(x, y)[0], lambda x, y: self.force(x, y)[1])
        prob = BrinkmanProblem(g, self.c(X, Y), force, self.divergence(X, Y), self.nu, self.profile,
                               traction=self.traction)
        v, p, _ = solve_brinkman(prob)
        return g, v, p


def brinkman_manufactured_error(n: int, case: BrinkmanManufactured | None = None):
    """Discrete L2 errors ``(v, p)`` of the manufactured Brinkman solution on an ``n x n`` unit grid."""
    case = case or BrinkmanManufactured()
    g, v, p = case.solve(n)
    exact = FaceField.from_function(g, lambda x, y: case.velocity(x, y)[0], lambda x, y: case.velocity(x, y)[1])
    X, Y = g.cell_centers()
    return float(l2_norm(v - exact)), float(l2_norm(p - case.pressure(X, Y), g))


def darcy_manufactured_error(n: int, nu: float = 2.0) -> float:
    """Max pressure error for ``p = sin(pi x) sin(pi y)`` with a constant phase field."""
    g = Grid2D(n, n)
    X, Y = g.cell_centers()
    pe = np.sin(np.pi * X) * np.sin(np.pi * Y)
    zero = np.zeros(g.shape)
    _, p = solve_darcy(g, zero, zero, np.full(g.shape, 0.3), 2 * np.pi**2 * pe / nu, nu=nu)
    return float(np.max(np.abs(p - pe)))


def _darcy_snapshot(n: int):
    g = Grid2D(n, n)
    X, Y = g.cell_centers()
    phi = np.tanh((np.hypot(X - 0.5, Y - 0.5) - 0.25) / 0.1)
    return g, phi, np.sin(3 * X), np.cos(Y), np.sin(X * Y)


def darcy_limit_study(deltas=(1e-1, 1e-2, 1e-3), n: int = 32, nu: float = 1.0, chi: float = 0.5) -> list:
    """``||v_brinkman - v_darcy||`` with both viscosities set to each value in ``deltas``.

    The snapshot is a tanh interface with smooth ``mu``, ``sigma`` and divergence data.
    """
    g, phi, mu, sigma, gv = _darcy_snapshot(n)
    vd, pd = solve_darcy(g, mu, sigma, phi, gv, nu, chi)
    force = capillary_force(g, mu + chi * sigma, phi)
    rows = []
    for d in deltas:
        prob = BrinkmanProblem(g, phi, force, gv, nu, ViscosityProfile(d, d, d))
        vb, pb, _ = solve_brinkman(prob)
        rows.append({"viscosity": float(d), "velocity_gap": float(l2_norm(vb - vd)),
                     "pressure_gap": float(l2_norm(pb - pd, g))})
    return rows


def lift_check(grid: Grid2D, f) -> dict:
    """Divergence error, boundary flux error and ``H^1/L^2`` ratio of the lift of ``f``."""
    u = divergence_lift(grid, f)
    target = grid.integrate(f) / grid.perimeter
    flux = np.concatenate([-u.u[0], u.u[-1], -u.v[:, 0], u.v[:, -1]])
    return {
        "div_error": float(np.max(np.abs(div(u) - f))),
        "flux_error": float(np.max(np.abs(flux - target))),
        "h1_ratio": lift_h1_ratio(grid, f, u),
    }


def _level_errors(n: int) -> dict:
    bv, bp = brinkman_manufactured_error(n)
    return {
        "nutrient_slab": nutrient_slab_error(2 * n),
        "brinkman_velocity": bv,
        "brinkman_pressure": bp,
        "darcy_pressure": darcy_manufactured_error(n),
    }


def convergence_study(levels=(16, 32, 64), workers: int = 1) -> list:
    """Rows ``(study, n, error, order)`` for the nutrient slab, Brinkman and Darcy problems.

    The nutrient slab uses ``2 n`` cells along its length.  Levels run on a
    pool of ``workers`` threads.
    """
    levels = list(levels)
    with ThreadPoolExecutor(max_workers=max(1, min(workers, len(levels)))) as pool:
        per_level = list(pool.map(_level_errors, levels))
    rows = []
    for name in per_level[0]:
        errs = [e[name] for e in per_level]
        orders = [float("nan")] + observed_orders(errs)
        for n, e, o in zip(levels, errs, orders):
            rows.append({"study": name, "n": n, "error": e, "order": o})
    return rows
