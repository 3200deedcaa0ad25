"""Source terms for the volume-change and phase equations.

Each source is affine in the nutrient ``s``::

    gamma_v(r, s)   = b_v(r) s   + f_v(r)
    gamma_phi(r, s) = b_phi(r) s + f_phi(r)

The proliferation coefficients ``b_*`` vanish outside [-1, 1].  The
apoptosis terms ``f_*`` are prescribed on [-1, 1] and continued outside in
a way that keeps the combination ``H(r) = r f_v(r) - f_phi(r)`` of one sign
on each side of the physical range (strictly for the obstacle potential,
tapering to zero beyond ``2 r0`` for the logarithmic one).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "SourceModel",
    "gamma_v",
    "gamma_phi",
    "gamma_stationary",
    "build_example_model",
    "zero_model",
    "sign_function",
    "delta0",
]


@dataclass(frozen=True)
class SourceModel:
    b_v: Callable
    b_phi: Callable
    f_v: Callable
    f_phi: Callable
    params: dict = field(default_factory=dict)
    kind: str = "obstacle"
    r0: float = 1.5


def gamma_v(model: SourceModel, r, s):
    r = np.asarray(r, dtype=float)
    return model.b_v(r) * s + model.f_v(r)


def gamma_phi(model: SourceModel, r, s):
    r = np.asarray(r, dtype=float)
    return model.b_phi(r) * s + model.f_phi(r)


def gamma_stationary(model: SourceModel, r, s):
    """``r * gamma_v(r, s) - gamma_phi(r, s)``."""
    r = np.asarray(r, dtype=float)
    return r * gamma_v(model, r, s) - gamma_phi(model, r, s)


def sign_function(model: SourceModel, r):
    """``H(r) = r f_v(r) - f_phi(r)``, the nutrient-free part of the stationary source."""
    r = np.asarray(r, dtype=float)
    return r * model.f_v(r) - model.f_phi(r)


def _taper(t, r0):
    """C^1 step: 1 on [0, r0], cubic Hermite down to 0 on [r0, 2 r0], 0 beyond."""
    u = np.clip((t - r0) / r0, 0.0, 1.0)
    return 1.0 - u * u * (3.0 - 2.0 * u)


def build_example_model(P=1.0, A=0.5, alpha=1.0, rho_S=2.0, kind="obstacle", r0=1.5):
    """Proliferation/apoptosis model ``gamma_v = alpha G``, ``gamma_phi = rho_S G``.

    On [-1, 1], ``G(r, s) = P (1 - r^2) s - A r``.  Outside, ``b_*`` are zero,
    ``f_v`` is tapered to zero over ``[r0, 2 r0]`` and ``f_phi`` is defined
    through ``H``: constant beyond +-1 for ``kind="obstacle"``, tapered with
    the same profile for ``kind="log"``.

    Raises
    ------
    ValueError
        If the sign conditions ``f_phi(1) - f_v(1) < 0``,
        ``f_phi(-1) + f_v(-1) > 0`` or ``b_v >= 0`` would fail, or ``r0 <= 1``.
    """
    if P <= 0 or A <= 0:
        raise ValueError(f"source rates must be positive, got P={P}, A={A}")
    if alpha < 0:
        raise ValueError(f"source.alpha={alpha}: the proliferation coefficient b_v must be nonnegative")
    if not rho_S > abs(alpha):
        raise ValueError(
            f"source.rho_S={rho_S} must exceed |source.alpha|={abs(alpha)} "
            "(sign condition f_phi(1) - f_v(1) < 0 < f_phi(-1) + f_v(-1))"
        )
    if kind not in ("obstacle", "log"):
        raise ValueError(f"unknown extension kind {kind!r}")
    if r0 <= 1.0:
        raise ValueError(f"source.r0={r0} must exceed 1")

    h_plus = A * (rho_S - alpha)  # H(1)
    h_minus = -A * (rho_S + alpha)  # H(-1)

    def bump(r):
        return np.maximum(1.0 - r * r, 0.0)

    def b_v(r):
        return alpha * P * bump(r)

    def b_phi(r):
        return rho_S * P * bump(r)

    def f_v(r):
        return -alpha * A * r * _taper(np.abs(r), r0)

    def h_ext(r):
        level = np.where(r > 0, h_plus, h_minus)
        if kind == "log":
            level = level * _taper(np.abs(r), r0)
        return level

    def f_phi(r):
        inside = -rho_S * A * r
        outside = r * f_v(r) - h_ext(r)
        return np.where(np.abs(r) <= 1.0, inside, outside)

    params = dict(P=P, A=A, alpha=alpha, rho_S=rho_S)
    return SourceModel(b_v, b_phi, f_v, f_phi, params=params, kind=kind, r0=r0)


def zero_model() -> SourceModel:
    """All sources identically zero."""

    def zero(r):
        return np.zeros_like(np.asarray(r, dtype=float))

    return SourceModel(zero, zero, zero, zero, params={}, kind="none")


def delta0(model: SourceModel, samples=2001, iters=60) -> float:
    """Largest width d < r0 - 1 with ``H > 0`` on (1-d, 1+d) and ``H < 0`` on (-1-d, -1+d).

    Found by bisection on the sampled sign condition.
    """

    def ok(d):
        t = np.linspace(-d, d, samples)[1:-1]
        return bool(np.all(sign_function(model, 1.0 + t) > 0) and np.all(sign_function(model, -1.0 + t) < 0))

    lo, hi = 0.0, model.r0 - 1.0
    if ok(hi):
        return hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo
