import math

import mpmath as mp
import numpy as np
import pytest
import sympy as sy
from hypothesis import given, settings
from hypothesis import strategies as st

from chblab.constants import log_growth, log_sign_c2, obstacle_growth
from chblab.potentials import (
    PotentialSpec,
    admissible_width,
    beta,
    beta_hat,
    beta_prime,
    count_violations,
    cutoff,
    cutoff_prime,
    inequality_margins,
    psi,
    psi_prime,
)

R_GRID = np.linspace(-5.0, 5.0, 10_000)
WIDTHS = [0.2, 0.1, 0.05, 0.01, 0.001]


# --- independent references -------------------------------------------------------

_r, _d = sy.symbols("r d", real=True)
_OBSTACLE_HAT = sy.Piecewise(
    ((_r - (1 + _d / 2)) ** 2 / (2 * _d) + _d / 24, _r >= 1 + _d),
    ((_r - 1) ** 3 / (6 * _d**2), _r > 1),
    (0, _r >= -1),
    (-((_r + 1) ** 3) / (6 * _d**2), _r > -1 - _d),
    ((_r + (1 + _d / 2)) ** 2 / (2 * _d) + _d / 24, True),
)
_OBSTACLE_REF = [sy.lambdify((_r, _d), e, "math") for e in
                 (_OBSTACLE_HAT, sy.diff(_OBSTACLE_HAT, _r), sy.diff(_OBSTACLE_HAT, _r, 2))]


def log_reference(theta, theta_c, delta, r):
    """Flory-Huggins potential continued by its second-order Taylor polynomial, in mpmath."""
    mp.mp.dps = 40

    def core(x):
        return theta / 2 * ((1 + x) * mp.log(1 + x) + (1 - x) * mp.log(1 - x)) + theta_c / 2 * (1 - x * x)

    r = mp.mpf(r)
    edge = 1 - mp.mpf(delta)
    if abs(r) <= edge:
        return core(r)
    a = edge if r > 0 else -edge
    return core(a) + mp.diff(core, a) * (r - a) + mp.diff(core, a, 2) / 2 * (r - a) ** 2


# --- examples -------------------------------------------------------------------------


def test_obstacle_examples():
    s = PotentialSpec("obstacle", 0.1)
    assert beta_hat(s, 0.5) == 0.0
    assert beta_hat(s, 1.05) == pytest.approx(0.05**3 / (6 * 0.01), rel=1e-14)
    assert beta(PotentialSpec("obstacle", 0.5), 2.0) == pytest.approx(1.5, rel=1e-14)
    assert beta(s, 0.9) == 0.0
    assert beta_prime(s, 5.0) == pytest.approx(10.0, rel=1e-14)
    assert beta_prime(s, 0.0) == 0.0
    assert psi(s, 0.0) == pytest.approx(0.5, rel=1e-15)
    assert psi(s, 1.05) == pytest.approx(-0.04916666666666667, rel=1e-12)


def test_log_examples():
    s = PotentialSpec("log", 0.25, theta=1.0, theta_c=2.0)
    assert beta_hat(s, 0.0) == 0.0
    assert beta(PotentialSpec("log", 0.1), math.tanh(1.0)) == pytest.approx(1.0, abs=1e-12)
    assert beta_prime(PotentialSpec("log", 0.1), 0.0) == pytest.approx(1.0, rel=1e-15)
    # 0.880697 in a hand evaluation is a rounding slip; the 40-digit value is frozen here
    assert psi(s, 0.5) == pytest.approx(0.880812035941137, abs=1e-14)
    assert float(log_reference(1.0, 2.0, 0.25, 0.5)) == pytest.approx(0.880812035941137, abs=1e-15)


def test_cutoff_examples():
    assert cutoff(0.1, 0.3) == 0.3
    assert cutoff(0.1, 1.0) == pytest.approx(0.925, rel=1e-15)
    assert cutoff(0.1, -1.0) == pytest.approx(-0.925, rel=1e-15)


def test_spec_validation():
    with pytest.raises(ValueError):
        PotentialSpec("quartic", 0.1)
    with pytest.raises(ValueError):
        PotentialSpec("obstacle", 0.0)
    with pytest.raises(ValueError):
        PotentialSpec("obstacle", 1.0)
    with pytest.raises(ValueError):
        PotentialSpec("log", 0.1, theta=2.0, theta_c=1.0)
    assert PotentialSpec("obstacle", 0.1).theta_cap == 1.0
    assert PotentialSpec("log", 0.1, 1.0, 3.0).theta_cap == 3.0
    assert PotentialSpec("log", 0.1, 1.0, 2.0).log_delta_max == pytest.approx(0.125)


# --- agreement with the references ------------------------------------------------------


@pytest.mark.parametrize("delta", WIDTHS)
def test_obstacle_matches_piecewise_reference(delta):
    s = PotentialSpec("obstacle", delta)
    r = np.concatenate([np.linspace(-3, 3, 601), [1 + delta / 2, -1 - delta / 2, 1 + delta, -1 - delta]])
    for fn, ref in zip((beta_hat, beta, beta_prime), _OBSTACLE_REF):
        expect = np.array([float(ref(x, delta)) for x in r])
        np.testing.assert_allclose(fn(s, r), expect, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("delta", [0.25, 0.1, 0.01])
def test_log_matches_taylor_reference(delta):
    s = PotentialSpec("log", delta, 1.0, 2.0)
    for x in np.linspace(-2.5, 2.5, 41):
        assert psi(s, x) == pytest.approx(float(log_reference(1.0, 2.0, delta, x)), rel=1e-11, abs=1e-12)


def test_log_slope_outside_core():
    for d in (0.3, 0.1, 0.01):
        s = PotentialSpec("log", d, theta=1.5, theta_c=2.0)
        edge = 1 - d
        assert beta_prime(s, edge + 0.5) == pytest.approx(1.5 / (d * (2 - d)), rel=1e-12)
        assert beta(s, edge + 0.5) - beta(s, edge) == pytest.approx(0.5 * 1.5 / (d * (2 - d)), rel=1e-12)


# --- structural properties ----------------------------------------------------------------

specs = st.one_of(
    st.builds(PotentialSpec, st.just("obstacle"), st.floats(1e-3, 0.99)),
    st.builds(PotentialSpec, st.just("log"), st.floats(1e-3, 0.99), st.just(1.0), st.just(2.0)),
)
reals = st.floats(-6.0, 6.0, allow_nan=False)


@given(specs, reals, reals)
def test_beta_monotone(spec, a, b):
    lo, hi = min(a, b), max(a, b)
    assert beta(spec, lo) <= beta(spec, hi) + 1e-12 * (1 + abs(beta(spec, hi)))


@given(specs, reals, reals)
def test_beta_hat_midpoint_convex(spec, a, b):
    mid = beta_hat(spec, 0.5 * (a + b))
    avg = 0.5 * (beta_hat(spec, a) + beta_hat(spec, b))
    assert mid <= avg + 1e-12 * (1 + abs(avg))


@given(specs, reals)
def test_beta_hat_below_tangent_at_zero(spec, r):
    assert beta_hat(spec, 0.0) == 0.0
    assert beta_hat(spec, r) >= 0.0
    assert beta_hat(spec, r) <= beta(spec, r) * r + 1e-12 * (1 + abs(r * beta(spec, r)))


@given(specs, st.floats(-4.0, 4.0))
def test_derivatives_by_differences(spec, r):
    h = 1e-6
    fd = (beta_hat(spec, r + h) - beta_hat(spec, r - h)) / (2 * h)
    assert fd == pytest.approx(beta(spec, r), rel=1e-5, abs=1e-5 * (1 + abs(beta(spec, r))))
    fd2 = (beta(spec, r + h) - beta(spec, r - h)) / (2 * h)
    bp = beta_prime(spec, r)
    # beta' jumps only at +-1 +- delta (obstacle) and is continuous for log
    near_kink = spec.kind == "obstacle" and min(abs(abs(r) - 1), abs(abs(r) - 1 - spec.delta)) < 1e-5
    if not near_kink:
        assert fd2 == pytest.approx(bp, rel=1e-4, abs=1e-4 * (1 + bp))
    assert psi_prime(spec, r) == pytest.approx(beta(spec, r) - spec.theta_cap * r)


@given(specs, reals)
def test_beta_odd_and_continuous(spec, r):
    assert beta(spec, -r) == pytest.approx(-beta(spec, r), rel=1e-13, abs=1e-13)
    eps = 1e-9
    assert abs(beta(spec, r + eps) - beta(spec, r)) <= 2 * eps * max(1.0, beta_prime(spec, r + eps), beta_prime(spec, r)) + 1e-12


def test_obstacle_slope_bound():
    for d in WIDTHS:
        bp = beta_prime(PotentialSpec("obstacle", d), R_GRID)
        assert np.all(bp >= 0) and np.all(bp <= 1 / d)


@given(st.floats(1e-3, 0.99), st.floats(-3.0, 3.0))
def test_cutoff_properties(delta, s):
    t = cutoff(delta, s)
    assert cutoff(delta, -s) == -t
    assert abs(t) <= 1.0
    assert 0.0 <= cutoff_prime(delta, s) <= 1.0
    if abs(s) <= 1 - delta:
        assert t == s
    if abs(s) >= 1 - delta / 2:
        assert abs(t) == pytest.approx(1 - 0.75 * delta)


@given(st.floats(1e-3, 0.99), st.floats(-3.0, 3.0), st.floats(-3.0, 3.0))
def test_cutoff_monotone(delta, a, b):
    lo, hi = min(a, b), max(a, b)
    assert cutoff(delta, lo) <= cutoff(delta, hi)


def test_cutoff_prime_second_order_differences():
    delta = 0.2
    kinks = np.array([1 - delta, 1 - delta / 2])
    pts = np.array([0.1, 0.5, 0.83, 0.87, 0.95, 1.3, -0.85, -0.88])
    assert np.min(np.abs(np.abs(pts)[:, None] - kinks[None, :])) > 0.01
    errs = []
    for h in (1e-2, 5e-3, 2.5e-3):
        fd = (cutoff(delta, pts + h) - cutoff(delta, pts - h)) / (2 * h)
        errs.append(np.max(np.abs(fd - cutoff_prime(delta, pts))))
    # quadratic pieces are differenced exactly; the check is that nothing worse than O(h^2) appears
    assert errs[-1] <= max(errs[0] / 3.5, 1e-12)
    assert all(e < 1e-10 for e in errs)


def test_cutoff_lipschitz_derivative():
    delta = 0.05
    s = np.linspace(-2, 2, 200_001)
    d = np.diff(cutoff_prime(delta, s)) / np.diff(s)
    assert np.max(np.abs(d)) <= 2 / delta + 1e-6


# --- quantified inequalities ------------------------------------------------------------------


@pytest.mark.parametrize("delta", [d for d in WIDTHS if d < 0.25])
def test_obstacle_penalty_inequalities(delta):
    spec = PotentialSpec("obstacle", delta)
    assert admissible_width(spec)
    v = count_violations(inequality_margins(spec, R_GRID))
    assert v == {"penalty_lower": 0, "penalty_upper": 0, "slope": 0, "sign": 0}


@pytest.mark.parametrize("delta", WIDTHS)
def test_log_penalty_inequalities(delta):
    spec = PotentialSpec("log", delta, 1.0, 2.0)
    v = count_violations(inequality_margins(spec, R_GRID, log_sign_c2()))
    assert all(n == 0 for n in v.values())
    assert ("overshoot_penalty" in v) == (delta <= 0.125)


def test_log_sign_constant():
    c2 = log_sign_c2()
    assert 0.0 <= c2 < 1e-12  # the supremum sits at r = 0
    r = np.linspace(-5, 5, 7777)
    for d in np.linspace(0.013, 0.987, 9):
        b = beta(PotentialSpec("log", d), r)
        assert np.all(r * b >= np.abs(b) - np.abs(r) - c2 - 1e-12)


def test_growth_constants():
    g = obstacle_growth()
    assert g.c0 > 0
    r = np.linspace(-7, 7, 3001)
    for d in (0.2, 0.03, 0.004):
        assert np.all(psi(PotentialSpec("obstacle", d), r) >= g.c0 * r**2 - g.c1 - 1e-12)
    gl = log_growth()
    assert gl.c0 > 0 and gl.c3 > 0
    for d in (0.125, 0.03, 0.004):
        s = PotentialSpec("log", d)
        b, bh = beta(s, r), beta_hat(s, r)
        assert np.all(psi(s, r) >= gl.c0 * r**2 - gl.c1 - 1e-12)
        assert np.all(d * b**2 <= 2 * bh + gl.c2 + 1e-9 * (1 + d * b**2))
        assert np.all(2 * bh + gl.c2 <= gl.c3 * (d * b**2 + 1) * (1 + 1e-12))


@settings(max_examples=50)
@given(st.floats(1e-3, 0.2499), st.floats(-8.0, 8.0))
def test_obstacle_inequalities_pointwise(delta, r):
    v = count_violations(inequality_margins(PotentialSpec("obstacle", delta), np.array([r])))
    assert sum(v.values()) == 0
