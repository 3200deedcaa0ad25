"""Time stepping of the coupled phase-field / nutrient / flow system.

One step from ``(phi_n, mu_n)``:

1. nutrient ``sigma`` from ``phi_n``;
2. velocity and pressure with body force ``(mu_n + chi sigma) grad phi_n`` and
   divergence ``gamma_v(phi_n, sigma)`` (Brinkman, Darcy, or no flow);
3. the Cahn-Hilliard pair, convex part implicit and concave part explicit::

       (phi - phi_n)/dt + div(phi_n v) - lap mu = gamma_phi(phi_n, sigma)
       mu = beta(phi) - theta_cap phi_n - lap phi - chi sigma

   solved by Newton's method on the two-field block system.

Without sources, chemotaxis and flow the discrete energy
``sum A psi(phi) + 1/2 |grad phi|^2`` cannot increase from one step to the next.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .config import ModelParams, RunConfig
from .flow import BrinkmanProblem, capillary_force, divergence_lift, solve_brinkman, solve_darcy
from .grid import FaceField, Grid2D, div, face_average, grad, inner, laplace_matrix
from .linsolve import SolverError
from .nutrient import NutrientProblem, solve_nutrient
from .potentials import PotentialSpec, beta, beta_prime, psi
from .sources import SourceModel, gamma_phi, gamma_v

__all__ = [
    "SimState",
    "StepError",
    "CFLViolation",
    "Stepper",
    "step",
    "run",
    "RunResult",
    "energy",
    "mass_rate",
    "advection",
    "initial_phase",
    "initial_state",
    "delta_continuation",
    "holder_constant",
    "worker_count",
]

log = logging.getLogger(__name__)


class StepError(SolverError):
    """A time step could not be completed."""


class CFLViolation(StepError):
    """The flow solve produced a velocity too large for the configured step."""

    def __init__(self, message, vmax):
        super().__init__(message, vmax, "max |v|")
        self.vmax = vmax


@dataclass
class SimState:
    grid: Grid2D
    phi: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    p: np.ndarray
    v: FaceField
    t: float = 0.0
    delta: float = 0.1
    step_count: int = 0

    def overshoot(self) -> float:
        return float(np.max(np.maximum(np.abs(self.phi) - 1.0, 0.0)))

    def overshoot_sq(self) -> float:
        return self.grid.integrate(np.maximum(np.abs(self.phi) - 1.0, 0.0) ** 2)


def energy(grid: Grid2D, spec: PotentialSpec, phi) -> float:
    """``int psi(phi) + 1/2 |grad phi|^2`` with face differences (homogeneous Neumann)."""
    gp = grad(grid, phi)
    A = grid.cell_area
    return float(A * np.sum(psi(spec, phi)) + 0.5 * A * (np.sum(gp.u**2) + np.sum(gp.v**2)))


def advection(grid: Grid2D, phi, v: FaceField):
    """Cell values of ``v . grad phi`` from the product rule ``div(phi v) - phi div v``."""
    pf = face_average(grid, phi)
    return div(FaceField(grid, pf.u * v.u, pf.v * v.v)) - phi * div(v)


def _face_dot_to_cells(a: FaceField, b: FaceField):
    pu = a.u * b.u
    pv = a.v * b.v
    return 0.5 * (pu[1:] + pu[:-1]) + 0.5 * (pv[:, 1:] + pv[:, :-1])


def mass_rate(prev: SimState, state: SimState, model: SourceModel) -> dict:
    """Both sides of the mean-value balance across one step, and their difference.

    ``lhs`` is the difference quotient of the mean of ``phi``; ``rhs`` is
    ``mean(gamma_phi - phi gamma_v - v . grad phi)`` evaluated on ``state``.
    """
    g = state.grid
    dt = state.t - prev.t
    lhs = (np.mean(state.phi) - np.mean(prev.phi)) / dt if dt > 0 else 0.0
    phi, s = state.phi, state.sigma
    rhs = np.mean(gamma_phi(model, phi, s) - phi * gamma_v(model, phi, s) - advection(g, phi, state.v))
    return {"lhs": float(lhs), "rhs": float(rhs), "defect": float(abs(lhs - rhs))}


class Stepper:
    """Advances a :class:`SimState` by fixed steps, caching factorizations.

    The Cahn-Hilliard Jacobian is factored once for the flat part of the
    potential (``beta' == 0``) and reused whenever the current iterate has no
    cell where ``beta'`` is nonzero.  Otherwise the Newton update is solved on
    the system reduced to ``phi``, with the last factorization of that system
    as a GMRES preconditioner until it stops paying off.  With constant
    viscosities the Brinkman saddle-point factorization is reused as well.
    """

    def __init__(self, grid: Grid2D, dt: float, params: ModelParams, model: SourceModel, spec: PotentialSpec,
                 newton_tol: float = 1e-10, newton_max: int = 40, cfl: bool = True, energy_terms: bool = True):
        if dt <= 0:
            raise ValueError(f"time step must be positive, got {dt}")
        self.grid, self.dt, self.params, self.model, self.spec = grid, dt, params, model, spec
        self.newton_tol, self.newton_max, self.cfl = newton_tol, newton_max, cfl
        self.energy_terms = energy_terms
        n = grid.size
        self.L, _ = laplace_matrix(grid, "neumann")
        self.I = sp.identity(n, format="csr")
        self._flat_lu = None
        self._reduced_lu = None
        self._brinkman_op = None

    # --- subsystems -------------------------------------------------------------

    def nutrient(self, phi, guess=None):
        if self.params.h0 == 0.0:
            return np.ones(self.grid.shape)
        return solve_nutrient(NutrientProblem(self.grid, phi, self.params.consumption(), self.params.K), guess)

    def flow(self, phi, mu, sigma):
        g, prm = self.grid, self.params
        if prm.flow_mode == "none":
            return FaceField.zeros(g), np.zeros(g.shape), None
        gv = gamma_v(self.model, phi, sigma) * np.ones(g.shape)
        if prm.flow_mode == "darcy":
            v, p = solve_darcy(g, mu, sigma, phi, gv, prm.nu, prm.chi)
            return v, p, None
        force = capillary_force(g, mu + prm.chi * sigma, phi)
        prob = BrinkmanProblem(g, phi, force, gv, prm.nu, prm.viscosity)
        op = self._brinkman_op if prm.viscosity.is_constant else None
        v, p, op = solve_brinkman(prob, op)
        if prm.viscosity.is_constant:
            self._brinkman_op = op
        return v, p, op

    def _jacobian_solve(self, bp, rhs):
        if not np.any(bp):
            if self._flat_lu is None:
                J = sp.bmat([[self.I / self.dt, -self.L], [self.L, self.I]], format="csc")
                self._flat_lu = spla.splu(J)
            return self._flat_lu.solve(rhs)
        # eliminate the mu update: (I/dt + L (L - B)) dphi = r1 + L r2, dmu = r2 - (L - B) dphi
        n = self.grid.size
        K = self.L - sp.diags(bp)
        M = (self.I / self.dt + self.L @ K).tocsc()
        b = rhs[:n] + self.L @ rhs[n:]
        dphi = None
        if self._reduced_lu is not None:
            # the last factorization preconditions the slowly changing reduced matrix
            pc = spla.LinearOperator(M.shape, self._reduced_lu.solve)
            x, info = spla.gmres(M, b, M=pc, rtol=1e-12, atol=0.0, restart=20, maxiter=1)
            if info == 0 and np.linalg.norm(M @ x - b) <= 1e-12 * np.linalg.norm(b):
                dphi = x
        if dphi is None:
            self._reduced_lu = spla.splu(M, permc_spec="MMD_AT_PLUS_A")
            dphi = self._reduced_lu.solve(b)
        return np.concatenate([dphi, rhs[n:] - K @ dphi])

    def _residual(self, phi, mu, phi_old, S, sigma):
        dt, th, chi = self.dt, self.spec.theta_cap, self.params.chi
        r1 = (phi - phi_old) / dt - self.L @ mu - S
        r2 = mu - beta(self.spec, phi) + th * phi_old + self.L @ phi + chi * sigma
        return r1, r2

    def _merit(self, r1, r2, scale1, scale2):
        return max(np.max(np.abs(r1)) * self.dt / scale1, np.max(np.abs(r2)) / scale2)

    def cahn_hilliard(self, phi_old, mu_old, S, sigma):
        """Newton iteration for the implicit pair; returns ``(phi, mu, iterations, r1, r2)``."""
        n = self.grid.size
        po, s = phi_old.ravel(), S.ravel()
        sg = sigma.ravel()
        phi, mu = po.copy(), mu_old.ravel().copy()
        scale1 = 1.0 + np.max(np.abs(po)) + self.dt * np.max(np.abs(s))
        r1, r2 = self._residual(phi, mu, po, s, sg)
        scale2 = 1.0 + np.max(np.abs(self.L @ po)) + np.max(np.abs(mu))
        merit = self._merit(r1, r2, scale1, scale2)
        for it in range(1, self.newton_max + 1):
            bp = beta_prime(self.spec, phi)
            d = self._jacobian_solve(bp, -np.concatenate([r1, r2]))
            lam = 1.0
            for _ in range(12):
                phi_t, mu_t = phi + lam * d[:n], mu + lam * d[n:]
                r1t, r2t = self._residual(phi_t, mu_t, po, s, sg)
                merit_t = self._merit(r1t, r2t, scale1, scale2)
                if merit_t < merit or lam < 1e-3:
                    break
                lam *= 0.5
            phi, mu, r1, r2, merit = phi_t, mu_t, r1t, r2t, merit_t
            if merit <= self.newton_tol:
                return phi.reshape(self.grid.shape), mu.reshape(self.grid.shape), it, r1, r2
        raise StepError("Newton iteration for the Cahn-Hilliard block did not converge", merit, "scaled residual")

    # --- one step --------------------------------------------------------------------

    def step(self, state: SimState):
        """Return ``(new_state, info)``; ``info`` carries ledger quantities."""
        g, dt, model = self.grid, self.dt, self.model
        phi_n, mu_n = state.phi, state.mu
        sigma = self.nutrient(phi_n, state.sigma)
        v, p, op = self.flow(phi_n, mu_n, sigma)
        vmax = v.max_abs()
        if self.cfl and vmax > 0 and dt > g.h / (2.0 * vmax):
            raise CFLViolation(
                f"time step {dt:g} exceeds the advective limit h/(2 max|v|) = {g.h / (2 * vmax):g}", vmax
            )
        S = gamma_phi(model, phi_n, sigma) * np.ones(g.shape) - div(_times(face_average(g, phi_n), v))
        phi, mu, iters, r1, r2 = self.cahn_hilliard(phi_n, mu_n, S, sigma)
        new = SimState(g, phi, mu, sigma, p, v, state.t + dt, state.delta, state.step_count + 1)
        A = g.cell_area
        dphi = (phi - phi_n).ravel()
        allowance = dt * abs(A * np.dot(mu.ravel(), r1)) + abs(A * np.dot(r2, dphi))
        info = {"newton_iters": iters, "op": op, "energy_allowance": float(allowance)}
        return new, info

    def ledger_row(self, prev: SimState, state: SimState, info: dict, e_prev: float) -> dict:
        g, spec, prm, model = self.grid, self.spec, self.params, self.model
        A = g.cell_area
        e = energy(g, spec, state.phi)
        row = {
            "step": state.step_count,
            "t": state.t,
            "E": e,
        }
        if self.energy_terms:
            phi, mu, sigma, v = state.phi, state.mu, state.sigma, state.v
            gm = grad(g, mu)
            diss = A * (np.sum(gm.u**2) + np.sum(gm.v**2))
            op = info.get("op")
            if op is not None:
                diss += op.form(v, v, bulk=False)
            elif prm.flow_mode == "darcy":
                diss += prm.nu * inner(v, v)
            gs = grad(g, sigma)
            chemo = -prm.chi * A * (np.sum(gm.u[1:-1] * gs.u[1:-1]) + np.sum(gm.v[:, 1:-1] * gs.v[:, 1:-1]))
            lap_phi = (self.L @ phi.ravel()).reshape(g.shape)
            w = beta(spec, phi) - spec.theta_cap * phi - lap_phi
            gv = gamma_v(model, phi, sigma) * np.ones(g.shape)
            source = g.integrate((gamma_phi(model, phi, sigma) - phi * gv) * w)
            lift = 0.0
            if np.any(gv != 0.0):
                u = divergence_lift(g, gv)
                if op is not None:
                    lift += op.form(v, u, bulk=False)
                elif prm.flow_mode == "darcy":
                    lift += prm.nu * inner(v, u)
                lift -= g.integrate(w * _face_dot_to_cells(grad(g, phi), u))
            resid = (e - e_prev) / self.dt + diss - chemo - source - lift
            row.update(dissipation=diss, chemotaxis=chemo, source_work=source, lift_work=lift,
                       energy_residual=resid)
        m = mass_rate(prev, state, model)
        row.update(
            mass_lhs=m["lhs"],
            mass_rhs=m["rhs"],
            mass_defect=m["defect"],
            overshoot=state.overshoot(),
            overshoot_sq=state.overshoot_sq(),
            phi_mean=float(np.mean(state.phi)),
            phi_max_abs=float(np.max(np.abs(state.phi))),
            sigma_min=float(np.min(state.sigma)),
            sigma_max=float(np.max(state.sigma)),
            newton_iters=info["newton_iters"],
            energy_allowance=info["energy_allowance"],
        )
        return row


def _times(a: FaceField, b: FaceField) -> FaceField:
    return FaceField(a.grid, a.u * b.u, a.v * b.v)


def step(state: SimState, dt: float, params: ModelParams, model: SourceModel, spec: PotentialSpec) -> SimState:
    """One operator-split step without caching (see :class:`Stepper`)."""
    new, _ = Stepper(state.grid, dt, params, model, spec).step(state)
    return new


# --- initial data and driver -------------------------------------------------------


def initial_phase(cfg: RunConfig, grid: Grid2D | None = None) -> np.ndarray:
    grid = grid or cfg.grid()
    init = cfg.sections["init"]
    spec = cfg.potential()
    if init["kind"] == "constant":
        phi = np.full(grid.shape, float(init["mean"]))
    elif init["kind"] == "random":
        rng = np.random.default_rng(cfg.seed)
        phi = float(init["mean"]) + float(init["amplitude"]) * rng.uniform(-1.0, 1.0, grid.shape)
    else:
        X, Y = grid.cell_centers()
        cx, cy = init["center"] if init["center"] is not None else (0.5 * grid.lx, 0.5 * grid.ly)
        radius = init["radius"] if init["radius"] is not None else 0.25 * min(grid.lx, grid.ly)
        dist = np.hypot(X - cx, Y - cy) - radius
        phi = -np.tanh(dist / (np.sqrt(2.0) * float(init["width"])))
    bound = 1.0 - spec.delta if spec.kind == "log" else 1.0
    return np.clip(phi, -bound, bound)


def initial_state(cfg: RunConfig, phi0=None) -> SimState:
    grid, spec, prm = cfg.grid(), cfg.potential(), cfg.params()
    phi = initial_phase(cfg, grid) if phi0 is None else np.asarray(phi0, dtype=float)
    if prm.h0 == 0.0:
        sigma = np.ones(grid.shape)
    else:
        sigma = solve_nutrient(NutrientProblem(grid, phi, prm.consumption(), prm.K))
    L, _ = laplace_matrix(grid, "neumann")
    mu = beta(spec, phi) - spec.theta_cap * phi - (L @ phi.ravel()).reshape(grid.shape) - prm.chi * sigma
    return SimState(grid, phi, mu, sigma, np.zeros(grid.shape), FaceField.zeros(grid), 0.0, spec.delta, 0)


@dataclass
class RunResult:
    ledger: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    final: SimState | None = None
    files: list = field(default_factory=list)
    initial_energy: float = float("nan")


def run(cfg: RunConfig, out_dir=None, phi0=None, keep_snapshots: bool = True) -> RunResult:
    """Integrate ``time.steps`` steps; record a ledger row per step and snapshots at ``output.cadence``."""
    from .io import write_csv, write_vtk

    grid, spec, prm, model = cfg.grid(), cfg.potential(), cfg.params(), cfg.model()
    t = cfg.sections["time"]
    o = cfg.sections["output"]
    stepper = Stepper(grid, cfg.dt(), prm, model, spec, float(t["newton_tol"]), int(t["newton_max"]),
                      bool(t["cfl"]), bool(o["energy_terms"]))
    state = initial_state(cfg, phi0)
    result = RunResult()
    cadence = max(1, int(o["cadence"]))
    out = Path(out_dir) if out_dir is not None else None

    def snapshot(s: SimState):
        if keep_snapshots:
            result.snapshots.append(s)
        if out is not None and o["vtk"]:
            path = out / f"phi_{s.step_count:06d}.vtk"
            write_vtk(path, s)
            result.files.append(path)

    snapshot(state)
    e_prev = energy(grid, spec, state.phi)
    result.initial_energy = e_prev
    for _ in range(int(t["steps"])):
        new, info = stepper.step(state)
        row = stepper.ledger_row(state, new, info, e_prev)
        e_prev = row["E"]
        result.ledger.append(row)
        state = new
        if state.step_count % cadence == 0:
            snapshot(state)
    result.final = state
    if out is not None and o["csv"]:
        path = out / "ledger.csv"
        write_csv(path, result.ledger)
        result.files.append(path)
    return result


def holder_constant(ledger: list) -> float:
    """Smallest ``C`` with ``|m(t_a) - m(t_b)| <= C |t_a - t_b|^(1/2)`` over recorded means ``m``."""
    if len(ledger) < 2:
        return 0.0
    t = np.array([r["t"] for r in ledger])
    m = np.array([r["phi_mean"] for r in ledger])
    dt = np.abs(t[:, None] - t[None, :])
    dm = np.abs(m[:, None] - m[None, :])
    mask = dt > 0
    return float(np.max(dm[mask] / np.sqrt(dt[mask])))


def worker_count() -> int:
    env = os.environ.get("CHB_LAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _continuation_run(cfg: RunConfig, delta: float) -> dict:
    import copy

    c = copy.deepcopy(cfg)
    c.sections["potential"]["delta"] = delta
    c.sections["output"]["energy_terms"] = False
    res = run(c, keep_snapshots=False)
    dt = c.dt()
    means = [r["phi_mean"] for r in res.ledger]
    return {
        "delta": delta,
        "overshoot_integral": float(dt * sum(r["overshoot_sq"] for r in res.ledger)),
        "max_abs_phi": float(max(r["phi_max_abs"] for r in res.ledger)),
        "max_overshoot": float(max(r["overshoot"] for r in res.ledger)),
        "mean_min": float(min(means)),
        "mean_max": float(max(means)),
        "steps": len(res.ledger),
        "holder_C": holder_constant(res.ledger),
    }


def delta_continuation(cfg: RunConfig, deltas=None) -> list:
    """Run the configured scenario for each width in ``deltas`` (descending).

    Each row reports the space-time overshoot ``int int (|phi| - 1)_+^2``
    (rectangle rule over the steps), its ratio to ``delta``, the largest
    ``|phi|`` and the range of the spatial mean.
    """
    deltas = list(cfg.sections["continuation"]["deltas"] if deltas is None else deltas)
    if any(a <= b for a, b in zip(deltas, deltas[1:])):
        raise ValueError("deltas must be strictly descending")
    with ThreadPoolExecutor(max_workers=min(worker_count(), len(deltas))) as pool:
        rows = list(pool.map(lambda d: _continuation_run(cfg, d), deltas))
    for r in rows:
        r["ratio"] = r["overshoot_integral"] / r["delta"]
    return rows
