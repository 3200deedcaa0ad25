"""Admissible constants for the potential and source inequalities, found by brute-force sweeps.

Each sweep runs on a grid finer than (and offset from) the grids the checks
use, so a check evaluated with these constants is not a restatement of the
sweep.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .potentials import PotentialSpec, beta, beta_hat, psi
from .sources import SourceModel, build_example_model, delta0, gamma_stationary

__all__ = [
    "GrowthConstants",
    "obstacle_growth",
    "log_growth",
    "log_sign_c2",
    "source_lower_bound",
    "sweep_r",
]


def sweep_r(rmax: float = 6.0, n: int = 240_001) -> np.ndarray:
    return np.linspace(-rmax, rmax, n)


@dataclass(frozen=True)
class GrowthConstants:
    """``psi(r) >= c0 r^2 - c1`` and, for the log case, ``delta beta^2 <= 2 theta beta_hat + c2 <= c3 (delta beta^2 + 1)``."""

    c0: float
    c1: float
    c2: float = float("nan")
    c3: float = float("nan")


def _quadratic_floor(specs, r):
    # c0: half the smallest far-field ratio psi / r^2; c1: what the floor then needs
    far = np.abs(r) >= 0.6 * np.max(np.abs(r))
    c0 = 0.5 * min(float(np.min(psi(s, r[far]) / r[far] ** 2)) for s in specs)
    c1 = max(float(np.max(c0 * r**2 - psi(s, r))) for s in specs)
    return c0, max(c1, 0.0)


@lru_cache(maxsize=None)
def obstacle_growth() -> GrowthConstants:
    """Quadratic lower bound for the regularized obstacle potential, uniform in ``delta < 1/4``."""
    r = sweep_r()
    specs = [PotentialSpec("obstacle", d) for d in np.geomspace(1e-4, 0.2499, 40)]
    return GrowthConstants(*_quadratic_floor(specs, r))


@lru_cache(maxsize=None)
def log_growth(theta: float = 1.0, theta_c: float = 2.0) -> GrowthConstants:
    """Growth constants for the regularized log potential, uniform in ``delta <= min(1, theta/(4 theta_c))``."""
    r = sweep_r()
    dmax = min(1.0, theta / (4.0 * theta_c))
    specs = [PotentialSpec("log", d, theta, theta_c) for d in np.geomspace(1e-4, dmax, 40)]
    c0, c1 = _quadratic_floor(specs, r)
    c2 = 0.0
    for s in specs:
        b = beta(s, r)
        c2 = max(c2, float(np.max(s.delta * b**2 - 2.0 * theta * beta_hat(s, r))))
    c3 = 0.0
    for s in specs:
        b = beta(s, r)
        c3 = max(c3, float(np.max((2.0 * theta * beta_hat(s, r) + c2) / (s.delta * b**2 + 1.0))))
    return GrowthConstants(c0, c1, c2, c3)


@lru_cache(maxsize=None)
def log_sign_c2(theta: float = 1.0, theta_c: float = 2.0) -> float:
    """Smallest ``c2 >= 0`` with ``r beta(r) >= |beta(r)| - theta |r| - c2`` over the sweep, all ``delta in (0, 1)``."""
    r = sweep_r()
    worst = 0.0
    for d in np.geomspace(1e-4, 0.999, 60):
        b = beta(PotentialSpec("log", d, theta, theta_c), r)
        worst = max(worst, float(np.max(np.abs(b) - theta * np.abs(r) - r * b)))
    return worst


def _model_key(model: SourceModel):
    return tuple(sorted(model.params.items())) + (model.kind, model.r0)


_LOWER_CACHE: dict = {}


def source_lower_bound(model: SourceModel | None = None, theta: float = 1.0, theta_c: float = 2.0) -> float:
    """Smallest ``C >= 0`` with ``gamma(r, s) beta(r) >= -C (1 + |s| + |r|)`` on the sweep.

    Sweeps ``r in [-4, 4]``, ``s in [0, 3]`` and ``delta`` below the collar
    width of :func:`~chblab.sources.delta0`.
    """
    model = model or build_example_model(kind="log")
    key = (_model_key(model), theta, theta_c)
    if key in _LOWER_CACHE:
        return _LOWER_CACHE[key]
    d0 = min(delta0(model), 1.0)
    R, S = np.meshgrid(np.linspace(-4.0, 4.0, 16_001), np.linspace(0.0, 3.0, 31), indexing="ij")
    gam = gamma_stationary(model, R, S)
    weight = 1.0 + np.abs(S) + np.abs(R)
    C = 0.0
    for d in np.geomspace(1e-4, 0.99 * d0, 40):
        b = beta(PotentialSpec("log", d, theta, theta_c), R)
        C = max(C, float(np.max(-gam * b / weight)))
    _LOWER_CACHE[key] = C
    return C
