"""Steady states of the regularized system by damped Picard iteration.

Given an iterate ``phi_k`` the nutrient and the flow are frozen::

    sigma_k    from  -lap sigma + h(phi_k) sigma = 0, Robin influx
    (v_k, p_k) Brinkman with force (psi'(phi_k) - lap phi_k) grad T(phi_k)
               and divergence gamma_v(phi_k, sigma_k)

and the stabilized fourth-order problem

    sqrt(delta) beta(phi) + F(phi_k) phi - lap mu + gamma(phi, sigma_k) + v_k . grad T(phi_k) = 0
    mu = psi'(phi) - lap phi - chi sigma_k

is solved for ``(phi*, mu*)`` by Newton's method.  The next iterate is
``(1 - omega) phi_k + omega phi*``; ``omega`` is halved whenever the
stationary residual grows.
"""
from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .config import ModelParams, RunConfig
from .evolution import SimState, advection, initial_phase, run
from .flow import BrinkmanOperator, BrinkmanProblem, brinkman_energy_balance, capillary_force, solve_brinkman, solve_darcy
from .grid import FaceField, Grid2D, grad, inner, laplace_matrix
from .linsolve import SolverError
from .nutrient import NutrientProblem, nutrient_residual, solve_nutrient
from .potentials import PotentialSpec, beta, beta_prime, cutoff, psi_prime
from .sources import SourceModel, gamma_stationary, gamma_v

__all__ = [
    "StationaryConfig",
    "StationaryResult",
    "StationaryError",
    "ghat",
    "stabilizer_F",
    "default_CF",
    "solve_stationary",
    "stationary_residual",
    "solve_from_config",
]

log = logging.getLogger(__name__)


class StationaryError(SolverError):
    """Inner Newton failure inside the stationary iteration."""


def _ramp_piece(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def ghat(r):
    """Smooth switch: 0 for ``r <= 2``, 1 for ``r >= 3``, monotone and infinitely differentiable."""
    r = np.asarray(r, dtype=float)
    a = _ramp_piece(r - 2.0)
    b = _ramp_piece(3.0 - r)
    out = a / (a + b)
    return float(out) if out.ndim == 0 else out


def default_CF(model: SourceModel, samples: int = 401) -> float:
    """``10 (1 + max |gamma|)`` over ``r in [-1, 1]``, ``s in [0, 1]``."""
    r, s = np.meshgrid(np.linspace(-1, 1, samples), np.linspace(0, 1, 21), indexing="ij")
    return 10.0 * (1.0 + float(np.max(np.abs(gamma_stationary(model, r, s)))))


@dataclass
class StationaryConfig:
    grid: Grid2D
    spec: PotentialSpec
    model: SourceModel
    params: ModelParams = field(default_factory=ModelParams)
    C_F: float | None = None
    omega: float = 0.5
    tol: float = 1e-8
    max_outer: int = 300
    newton_max: int = 50

    def __post_init__(self):
        if self.C_F is None:
            self.C_F = default_CF(self.model)
        if self.C_F < 0:
            raise ValueError(f"stationary.CF={self.C_F} must be nonnegative")
        if not 0 < self.omega <= 1:
            raise ValueError(f"stationary.omega={self.omega} must lie in (0, 1]")

    @classmethod
    def from_run(cls, cfg: RunConfig) -> "StationaryConfig":
        st = cfg.sections["stationary"]
        return cls(cfg.grid(), cfg.potential(), cfg.model(), cfg.params(),
                   None if st["CF"] is None else float(st["CF"]), float(st["omega"]), float(st["tol"]),
                   int(st["max_outer"]))


def stabilizer_F(cfg: StationaryConfig, phi) -> float:
    """``C_F ghat(mean(phi^2))``; zero while the mean square stays at or below 2."""
    return float(cfg.C_F * ghat(cfg.grid.mean(np.asarray(phi, dtype=float) ** 2)))


@dataclass
class StationaryResult:
    state: SimState
    residuals: dict
    history: list
    converged: bool
    iterations: int
    F_value: float
    omega: float
    diagnostics: dict = field(default_factory=dict)


def _norm(grid: Grid2D, f) -> float:
    return float(np.sqrt(grid.integrate(np.asarray(f) ** 2)))


class _Frozen:
    """Subsystem solves shared by the Picard loop (caches the Brinkman factorization)."""

    def __init__(self, cfg: StationaryConfig):
        self.cfg = cfg
        self.L, _ = laplace_matrix(cfg.grid, "neumann")
        self._op = None

    def lap(self, f):
        return (self.L @ np.ravel(f)).reshape(self.cfg.grid.shape)

    def nutrient(self, phi):
        prm = self.cfg.params
        if prm.h0 == 0.0:
            return np.ones(self.cfg.grid.shape)
        return solve_nutrient(NutrientProblem(self.cfg.grid, phi, prm.consumption(), prm.K))

    def operator(self, phi):
        prm = self.cfg.params
        if prm.viscosity.is_constant and self._op is not None:
            return self._op
        op = BrinkmanOperator(self.cfg.grid, phi, prm.nu, prm.viscosity)
        if prm.viscosity.is_constant:
            self._op = op
        return op

    def flow(self, phi, sigma):
        g, prm, spec = self.cfg.grid, self.cfg.params, self.cfg.spec
        if prm.flow_mode == "none":
            return FaceField.zeros(g), np.zeros(g.shape)
        pot = psi_prime(spec, phi) - self.lap(phi)
        tphi = cutoff(spec.delta, phi)
        gv = gamma_v(self.cfg.model, phi, sigma) * np.ones(g.shape)
        if prm.flow_mode == "darcy":
            return solve_darcy(g, pot, np.zeros(g.shape), tphi, gv, prm.nu, 0.0)
        prob = BrinkmanProblem(g, phi, capillary_force(g, pot, tphi), gv, prm.nu, prm.viscosity)
        v, p, _ = solve_brinkman(prob, self.operator(phi))
        return v, p


def _gamma_dr(model: SourceModel, phi, sigma, h: float = 1e-6):
    return (gamma_stationary(model, phi + h, sigma) - gamma_stationary(model, phi - h, sigma)) / (2 * h)


def _inner_newton(cfg: StationaryConfig, frozen: _Frozen, phi_k, mu_k, sigma, v, conserve: bool):
    """Solve the stabilized pair with ``sigma``, ``v`` and ``F`` frozen at ``phi_k``."""
    g, spec, model, chi = cfg.grid, cfg.spec, cfg.model, cfg.params.chi
    n = g.size
    L = frozen.L
    I = sp.identity(n, format="csr")
    F = stabilizer_F(cfg, phi_k)
    conv = advection(g, cutoff(spec.delta, phi_k), v).ravel()
    sg = sigma.ravel()
    sq = np.sqrt(spec.delta)
    th = spec.theta_cap
    mass = float(np.mean(phi_k))

    def residual(phi, mu, lam):
        r1 = sq * beta(spec, phi) + F * phi - L @ mu + gamma_stationary(model, phi, sg) + conv + lam
        r2 = mu - beta(spec, phi) + th * phi + L @ phi + chi * sg
        parts = [r1, r2]
        if conserve:
            parts.append(np.array([np.mean(phi) - mass]))
        return np.concatenate(parts)

    phi, mu, lam = phi_k.ravel().copy(), mu_k.ravel().copy(), 0.0
    R = residual(phi, mu, lam)
    scale = 1.0 + np.max(np.abs(L @ phi)) + np.max(np.abs(mu))
    tol = 1e-12 * scale * np.sqrt(n)
    for it in range(1, cfg.newton_max + 1):
        if np.linalg.norm(R) <= tol:
            break
        bp = beta_prime(spec, phi)
        d11 = sp.diags(sq * bp + F + _gamma_dr(model, phi, sg))
        J = sp.bmat([[d11, -L], [L + sp.diags(th - bp), I]], format="csc")
        if conserve:
            col = sp.csc_matrix(np.concatenate([np.ones(n), np.zeros(n)])[:, None])
            row = sp.csr_matrix(np.concatenate([np.ones(n) / n, np.zeros(n)])[None, :])
            J = sp.bmat([[J, col], [row, None]], format="csc")
        try:
            d = spla.splu(J).solve(-R)
        except RuntimeError as exc:
            raise StationaryError(f"singular Jacobian in the stationary Newton solve: {exc}") from None
        step = 1.0
        base = np.linalg.norm(R)
        for _ in range(20):
            phi_t, mu_t = phi + step * d[:n], mu + step * d[n:2 * n]
            lam_t = lam + step * d[-1] if conserve else 0.0
            R_t = residual(phi_t, mu_t, lam_t)
            if np.linalg.norm(R_t) < base or step < 1e-4:
                break
            step *= 0.5
        phi, mu, lam, R = phi_t, mu_t, lam_t, R_t
        if np.linalg.norm(R) > 0.5 * base and np.linalg.norm(R) < 1e3 * tol:
            break  # stagnated at roundoff
    else:
        if np.linalg.norm(R) > 1e3 * tol:
            raise StationaryError("stationary Newton iteration did not converge", float(np.linalg.norm(R)),
                                  "residual norm")
    return phi.reshape(g.shape), mu.reshape(g.shape), it, F


def stationary_residual(state: SimState, cfg: StationaryConfig, operator: BrinkmanOperator | None = None) -> dict:
    """L2 norms of the strong residuals of the stationary equations at ``state``.

    ``r_phi``: ``-lap mu + v . grad phi + gamma(phi, sigma)``;
    ``r_mu``: ``mu - psi'(phi) + lap phi + chi sigma``;
    ``r_sigma``: nutrient equation with Robin data;
    ``r_flow``: momentum (per unit face volume) and divergence rows of the
    flow system with force ``(mu + chi sigma) grad phi``;
    ``r_mean``: ``|int gamma(phi, sigma) + v . grad phi|``.
    """
    g, spec, model, prm = cfg.grid, cfg.spec, cfg.model, cfg.params
    phi, mu, sigma, v, p = state.phi, state.mu, state.sigma, state.v, state.p
    L, _ = laplace_matrix(g, "neumann")
    lap = lambda f: (L @ f.ravel()).reshape(g.shape)  # noqa: E731
    adv = advection(g, phi, v)
    gam = gamma_stationary(model, phi, sigma) * np.ones(g.shape)
    r_phi = -lap(mu) + adv + gam
    r_mu = mu - psi_prime(spec, phi) + lap(phi) + prm.chi * sigma
    if prm.h0 == 0.0:
        r_sigma = 0.0 if np.allclose(sigma, 1.0, rtol=0, atol=1e-14) else _norm(g, sigma - 1.0)
    else:
        r_sigma = _norm(g, nutrient_residual(NutrientProblem(g, phi, prm.consumption(), prm.K), sigma))
    gv = gamma_v(model, phi, sigma) * np.ones(g.shape)
    if prm.flow_mode == "none":
        r_flow = np.sqrt(v.max_abs() ** 2)
    elif prm.flow_mode == "darcy":
        vd, _ = solve_darcy(g, mu, sigma, phi, gv, prm.nu, prm.chi)
        d = vd - v
        r_flow = np.sqrt(inner(d, d))
    else:
        op = operator or BrinkmanOperator(g, phi, prm.nu, prm.viscosity)
        force = capillary_force(g, mu + prm.chi * sigma, phi)
        W = op.W
        rhs = np.concatenate([W * force.flat(), -g.cell_area * gv.ravel()])
        res = op.matrix @ np.concatenate([v.flat(), p.ravel()]) - rhs
        nf = W.size
        mom = np.sum(res[:nf] ** 2 / W)
        cont = np.sum(res[nf:] ** 2) / g.cell_area
        r_flow = np.sqrt(mom + cont)
    return {
        "r_phi": _norm(g, r_phi),
        "r_mu": _norm(g, r_mu),
        "r_sigma": float(r_sigma),
        "r_flow": float(r_flow),
        "r_mean": abs(g.integrate(gam + adv)),
    }


def _main_residual(res: dict) -> float:
    return max(res["r_phi"], res["r_mu"], res["r_sigma"], res["r_flow"])


def _diagnostics(cfg: StationaryConfig, state: SimState, frozen: _Frozen) -> dict:
    g, spec, prm = cfg.grid, cfg.spec, cfg.params
    phi = state.phi
    gp = grad(g, phi)
    grad_sq = g.cell_area * (np.sum(gp.u**2) + np.sum(gp.v**2))
    lap_phi = frozen.lap(phi)
    out = {
        "phi_mean": float(np.mean(phi)),
        "phi_max_abs": float(np.max(np.abs(phi))),
        "overshoot": float(np.max(np.maximum(np.abs(phi) - 1.0, 0.0))),
        "sigma_min": float(np.min(state.sigma)),
        "sigma_max": float(np.max(state.sigma)),
        "F_switch": stabilizer_F(cfg, phi),
        "mean_square_phi": float(np.mean(phi**2)),
        "cutoff_active_cells": int(np.sum(np.abs(phi) > 1.0 - spec.delta)),
        # int |grad phi|^2 <= ||lap phi|| ||phi|| by summation by parts
        "elliptic_margin": float(_norm(g, lap_phi) * _norm(g, phi) - grad_sq),
    }
    if prm.flow_mode == "brinkman":
        sigma, mu = state.sigma, state.mu
        gv = gamma_v(cfg.model, phi, sigma) * np.ones(g.shape)
        prob = BrinkmanProblem(g, phi, capillary_force(g, mu + prm.chi * sigma, phi), gv, prm.nu, prm.viscosity)
        lhs, rhs = brinkman_energy_balance(prob, state.v, state.p, frozen.operator(phi))
        out["brinkman_energy_lhs"] = float(lhs)
        out["brinkman_energy_rhs"] = float(rhs)
    return out


def solve_stationary(cfg: StationaryConfig, phi0, mu0=None) -> StationaryResult:
    """Damped Picard iteration from ``phi0``; see the module docstring.

    Convergence requires the Picard update and every entry of
    :func:`stationary_residual` except ``r_mean`` to fall below ``cfg.tol``.
    On failure the best iterate seen is returned with ``converged=False``.
    """
    g, spec = cfg.grid, cfg.spec
    frozen = _Frozen(cfg)
    conserve = not np.any(gamma_stationary(cfg.model, np.linspace(-2, 2, 41), 1.0))
    phi = np.array(phi0, dtype=float) * np.ones(g.shape)
    sigma = frozen.nutrient(phi)
    v, p = frozen.flow(phi, sigma)
    mu = (psi_prime(spec, phi) - frozen.lap(phi) - cfg.params.chi * sigma) if mu0 is None else np.asarray(mu0)
    state = SimState(g, phi, mu, sigma, p, v, 0.0, spec.delta, 0)
    res = stationary_residual(state, cfg, frozen._op)
    history = [{"iteration": 0, "update": float("nan"), "omega": cfg.omega, "newton_iters": 0, **res}]
    best = (_main_residual(res), state, res)
    if _main_residual(res) < cfg.tol:
        return StationaryResult(state, res, history, True, 0, stabilizer_F(cfg, phi), cfg.omega,
                                _diagnostics(cfg, state, frozen))
    omega = cfg.omega
    prev = _main_residual(res)
    converged = False
    k = 0
    for k in range(1, cfg.max_outer + 1):
        phi_s, mu_s, iters, F = _inner_newton(cfg, frozen, phi, mu, sigma, v, conserve)
        update = _norm(g, phi_s - phi)
        sigma_s = frozen.nutrient(phi_s)
        v_s, p_s = frozen.flow(phi_s, sigma_s)
        cand = SimState(g, phi_s, mu_s, sigma_s, p_s, v_s, 0.0, spec.delta, k)
        res = stationary_residual(cand, cfg, frozen._op)
        r = _main_residual(res)
        history.append({"iteration": k, "update": update, "omega": omega, "newton_iters": iters, **res})
        log.debug("outer %d: update %.3e residual %.3e omega %g", k, update, r, omega)
        if r < best[0]:
            best = (r, cand, res)
        if r < cfg.tol and update < cfg.tol:
            converged = True
            break
        if r > prev and omega > 1.0 / 64:
            omega *= 0.5
        prev = r
        if omega == 1.0:
            phi, mu, sigma, v = phi_s, mu_s, sigma_s, v_s
        else:
            phi = (1.0 - omega) * phi + omega * phi_s
            mu = (1.0 - omega) * mu + omega * mu_s
            sigma = frozen.nutrient(phi)
            v, _ = frozen.flow(phi, sigma)
    _, state, res = best
    return StationaryResult(state, res, history, converged, k, stabilizer_F(cfg, state.phi), omega,
                            _diagnostics(cfg, state, frozen))


def solve_from_config(cfg: RunConfig) -> StationaryResult:
    """Picard from the configured initial phase, or after a pseudo-time run when requested."""
    st = cfg.sections["stationary"]
    scfg = StationaryConfig.from_run(cfg)
    if st["strategy"] == "pseudotime":
        c = copy.deepcopy(cfg)
        c.sections["time"]["steps"] = int(st["pseudotime_steps"])
        c.sections["output"]["energy_terms"] = False
        res = run(c, keep_snapshots=False)
        return solve_stationary(scfg, res.final.phi)
    return solve_stationary(scfg, initial_phase(cfg))
