"""Regularized singular potentials and the saturating cutoff.

Two potentials are supported:

* ``"obstacle"`` -- the double-obstacle potential, whose convex part (the
  indicator of [-1, 1]) is replaced by a C^{1,1} penalty of width ``delta``;
* ``"log"`` -- the logarithmic (Flory-Huggins) potential, whose convex part
  is continued by its second-order Taylor polynomial outside
  ``|r| <= 1 - delta``.

In both cases the full potential is ``psi = beta_hat + theta_cap/2 * (1 - r^2)``
where ``beta_hat`` is convex and ``theta_cap`` is the concave coefficient
(1 for the obstacle potential, ``theta_c`` for the logarithmic one).

All functions accept scalars or numpy arrays and broadcast elementwise.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "PotentialSpec",
    "beta_hat",
    "beta",
    "beta_prime",
    "psi",
    "psi_prime",
    "cutoff",
    "cutoff_prime",
    "admissible_width",
    "inequality_margins",
    "count_violations",
]

KINDS = ("obstacle", "log")


@dataclass(frozen=True)
class PotentialSpec:
    """Potential kind, its parameters and the regularization width.

    Parameters
    ----------
    kind : {"obstacle", "log"}
    delta : float
        Regularization width, in (0, 1).
    theta, theta_c : float
        Temperature parameters of the logarithmic potential, ``0 < theta < theta_c``.
        Ignored for the obstacle potential.
    """

    kind: str = "obstacle"
    delta: float = 0.1
    theta: float = 1.0
    theta_c: float = 2.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"potential kind must be one of {KINDS}, got {self.kind!r}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.kind == "log" and not 0.0 < self.theta < self.theta_c:
            raise ValueError(
                f"log potential requires 0 < theta < theta_c, got theta={self.theta}, "
                f"theta_c={self.theta_c}"
            )

    @property
    def theta_cap(self) -> float:
        """Coefficient of the concave part ``(theta_cap/2)(1 - r^2)``."""
        return 1.0 if self.kind == "obstacle" else self.theta_c

    @property
    def log_delta_max(self) -> float:
        """Largest width for which the log-potential penalty bounds apply."""
        return min(1.0, self.theta / (4.0 * self.theta_c))

    def with_delta(self, delta: float) -> "PotentialSpec":
        return PotentialSpec(self.kind, delta, self.theta, self.theta_c)


# --- double obstacle ---------------------------------------------------------


def _obstacle_parts(delta, r):
    a = np.abs(r)
    s = np.sign(r)
    x = a - 1.0  # distance past the obstacle
    cubic = (a > 1.0) & (a < 1.0 + delta)
    linear = a >= 1.0 + delta
    return a, s, x, cubic, linear


def _obstacle_beta_hat(delta, r):
    a, _, x, cubic, linear = _obstacle_parts(delta, r)
    out = np.zeros_like(a)
    out[cubic] = x[cubic] ** 3 / (6.0 * delta**2)
    out[linear] = (a[linear] - (1.0 + 0.5 * delta)) ** 2 / (2.0 * delta) + delta / 24.0
    return out


def _obstacle_beta(delta, r):
    a, s, x, cubic, linear = _obstacle_parts(delta, r)
    out = np.zeros_like(a)
    out[cubic] = x[cubic] ** 2 / (2.0 * delta**2)
    out[linear] = (a[linear] - (1.0 + 0.5 * delta)) / delta
    return s * out


def _obstacle_beta_prime(delta, r):
    a, _, x, cubic, linear = _obstacle_parts(delta, r)
    out = np.zeros_like(a)
    out[cubic] = x[cubic] / delta**2
    out[linear] = 1.0 / delta
    return out


# --- logarithmic ---------------------------------------------------------------


def _log_core_beta_hat(theta, r):
    # (theta/2)[(1+r)ln(1+r) + (1-r)ln(1-r)], evaluated only for |r| < 1
    return 0.5 * theta * ((1.0 + r) * np.log1p(r) + (1.0 - r) * np.log1p(-r))


def _log_core_beta(theta, r):
    return 0.5 * theta * (np.log1p(r) - np.log1p(-r))


def _log_core_beta_prime(theta, r):
    return theta / (1.0 - r * r)


def _log_split(delta, r):
    a = np.abs(r)
    s = np.sign(r)
    edge = 1.0 - delta
    outer = a > edge
    # clamp so the core formulas never see |r| >= 1
    core_r = np.where(outer, s * edge, r)
    return a, s, edge, outer, core_r


def _log_beta_hat(theta, delta, r):
    a, _, edge, outer, core_r = _log_split(delta, r)
    out = _log_core_beta_hat(theta, core_r)
    d = a[outer] - edge
    out[outer] += _log_core_beta(theta, edge) * d + 0.5 * _log_core_beta_prime(theta, edge) * d * d
    return out


def _log_beta(theta, delta, r):
    a, s, edge, outer, core_r = _log_split(delta, r)
    out = _log_core_beta(theta, core_r)
    d = a[outer] - edge
    out[outer] += s[outer] * _log_core_beta_prime(theta, edge) * d
    return out


def _log_beta_prime(theta, delta, r):
    _, _, _, _, core_r = _log_split(delta, r)
    return _log_core_beta_prime(theta, core_r)


# --- public API ----------------------------------------------------------------


def _wrap(fn):
    def inner(spec: PotentialSpec, r):
        arr = np.asarray(r, dtype=float)
        out = fn(spec, np.atleast_1d(arr))
        return out.reshape(arr.shape) if arr.ndim else float(out[0])

    inner.__name__ = fn.__name__
    inner.__doc__ = fn.__doc__
    return inner


@_wrap
def beta_hat(spec, r):
    """Convex part of the regularized potential; nonnegative, zero at 0."""
    if spec.kind == "obstacle":
        return _obstacle_beta_hat(spec.delta, r)
    return _log_beta_hat(spec.theta, spec.delta, r)


@_wrap
def beta(spec, r):
    """Derivative of :func:`beta_hat`; continuous and nondecreasing."""
    if spec.kind == "obstacle":
        return _obstacle_beta(spec.delta, r)
    return _log_beta(spec.theta, spec.delta, r)


@_wrap
def beta_prime(spec, r):
    """Second derivative of :func:`beta_hat` (defined almost everywhere)."""
    if spec.kind == "obstacle":
        return _obstacle_beta_prime(spec.delta, r)
    return _log_beta_prime(spec.theta, spec.delta, r)


def psi(spec: PotentialSpec, r):
    """Regularized potential ``beta_hat(r) + theta_cap/2 * (1 - r^2)``."""
    r = np.asarray(r, dtype=float)
    return beta_hat(spec, r) + 0.5 * spec.theta_cap * (1.0 - r * r)


def psi_prime(spec: PotentialSpec, r):
    """``beta(r) - theta_cap * r``."""
    r = np.asarray(r, dtype=float)
    return beta(spec, r) - spec.theta_cap * r


def cutoff(delta: float, s):
    """Odd C^{1,1} saturation: identity on ``|s| <= 1-delta``, plateau ``1 - 3 delta/4``.

    Between the two the function is the quadratic ``|s| - (|s| - 1 + delta)^2 / delta``,
    which matches value and slope at both ends.
    """
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    lo, hi = 1.0 - delta, 1.0 - 0.5 * delta
    blend = a - (a - lo) ** 2 / delta
    out = np.where(a <= lo, a, np.where(a >= hi, 1.0 - 0.75 * delta, blend))
    out = np.sign(s) * out
    return out if out.ndim else float(out)


def cutoff_prime(delta: float, s):
    """Derivative of :func:`cutoff`; takes values in [0, 1]."""
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    lo, hi = 1.0 - delta, 1.0 - 0.5 * delta
    out = np.where(a <= lo, 1.0, np.where(a >= hi, 0.0, 1.0 - 2.0 * (a - lo) / delta))
    return out if out.ndim else float(out)


# --- inequality margins ----------------------------------------------------------

_EPS = np.finfo(float).eps


def admissible_width(spec: PotentialSpec) -> bool:
    """Whether ``spec.delta`` lies in the range where the penalty bounds are claimed."""
    if spec.kind == "obstacle":
        return spec.delta < 0.25
    return spec.delta <= spec.log_delta_max


def inequality_margins(spec: PotentialSpec, r, c2: float | None = None) -> dict:
    """Margins ``big - small`` of the penalty inequalities, each paired with a roundoff scale.

    Obstacle: ``2 beta_hat >= delta beta^2``, ``delta beta^2 + 1 >= 2 beta_hat``,
    ``beta' >= delta beta'^2`` and ``r beta >= |beta|``.  Log:
    ``4 delta beta_hat / theta >= (|r| - 1)_+^2``, ``theta beta' >= delta beta'^2``
    and, when ``c2`` is given, ``r beta + theta |r| + c2 >= |beta|``.
    Returns ``{name: (margin, scale)}``; a margin counts as violated when it
    is below ``-8 eps scale``.
    """
    r = np.asarray(r, dtype=float)
    d = spec.delta
    b, bh, bp = beta(spec, r), beta_hat(spec, r), beta_prime(spec, r)
    out = {}

    def add(name, big, small):
        out[name] = (big - small, np.maximum(1.0, np.maximum(np.abs(big), np.abs(small))))

    if spec.kind == "obstacle":
        add("penalty_lower", 2 * bh, d * b**2)
        add("penalty_upper", d * b**2 + 1.0, 2 * bh)
        add("slope", bp, d * bp**2)
        add("sign", r * b, np.abs(b))
    else:
        th = spec.theta
        if admissible_width(spec):
            add("overshoot_penalty", 4 * d * bh / th, np.maximum(0.0, np.abs(r) - 1.0) ** 2)
            add("slope", th * bp, d * bp**2)
        if c2 is not None:
            add("sign", r * b + th * np.abs(r) + c2, np.abs(b))
    return out


def count_violations(margins: dict) -> dict:
    return {k: int(np.sum(m < -8 * _EPS * s)) for k, (m, s) in margins.items()}
