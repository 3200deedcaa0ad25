import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chblab.constants import source_lower_bound
from chblab.potentials import PotentialSpec, beta
from chblab.sources import (
    build_example_model,
    delta0,
    gamma_phi,
    gamma_stationary,
    gamma_v,
    sign_function,
    zero_model,
)

OBSTACLE = build_example_model(P=1.0, A=0.5, alpha=1.0, rho_S=2.0, kind="obstacle")
LOG = build_example_model(P=1.0, A=0.5, alpha=1.0, rho_S=2.0, kind="log")


def test_examples():
    assert gamma_phi(OBSTACLE, 0.0, 1.0) == pytest.approx(2.0)
    for s in (0.0, 0.3, 1.0, 7.0):
        assert gamma_v(OBSTACLE, 1.0, s) == pytest.approx(-0.5)
        assert gamma_stationary(OBSTACLE, 1.0, s) == pytest.approx(0.5)
        # f_v(-1) = +alpha A, so r gamma_v(-1) = -0.5 and gamma = -0.5 - gamma_phi(-1) = -1.5
        assert gamma_stationary(OBSTACLE, -1.0, s) == pytest.approx(-1.5)
        assert gamma_stationary(OBSTACLE, 0.0, s) == pytest.approx(-gamma_phi(OBSTACLE, 0.0, s))
    for r in (-2.0, -0.4, 0.0, 0.9, 3.0):
        assert gamma_v(LOG, r, 0.0) == pytest.approx(float(LOG.f_v(np.array(r))))


def test_example_parameterization():
    m = OBSTACLE
    assert float(m.f_phi(np.array(1.0)) - m.f_v(np.array(1.0))) == pytest.approx(-0.5)
    assert float(m.f_phi(np.array(-1.0)) + m.f_v(np.array(-1.0))) == pytest.approx(1.5)
    assert float(m.b_v(np.array(1.0))) == 0.0 and float(m.b_v(np.array(-1.0))) == 0.0
    assert float(m.b_phi(np.array(0.0))) == pytest.approx(2.0)
    r = np.linspace(-1, 1, 101)
    np.testing.assert_allclose(m.f_v(r), -0.5 * r)
    np.testing.assert_allclose(m.f_phi(r), -1.0 * r)
    np.testing.assert_allclose(m.b_v(r), 1 - r**2, atol=1e-15)
    np.testing.assert_allclose(m.b_phi(r), 2 * (1 - r**2), atol=1e-15)


@pytest.mark.parametrize(
    "kwargs",
    [dict(P=0.0), dict(A=-1.0), dict(alpha=2.0, rho_S=1.5), dict(alpha=1.0, rho_S=1.0), dict(alpha=-0.5),
     dict(r0=1.0), dict(kind="quartic")],
)
def test_rejects_bad_parameters(kwargs):
    with pytest.raises(ValueError):
        build_example_model(**kwargs)


def test_sign_condition_message():
    with pytest.raises(ValueError, match="sign condition"):
        build_example_model(alpha=1.0, rho_S=0.5)


@given(st.floats(-10, 10))
def test_proliferation_support(r):
    for m in (OBSTACLE, LOG):
        bv, bp = float(m.b_v(np.array(r))), float(m.b_phi(np.array(r)))
        assert bv >= 0 and bp >= 0
        if abs(r) >= 1:
            assert bv == 0 and bp == 0


def test_obstacle_extension_sign():
    r = np.concatenate([np.linspace(1.0 + 1e-9, 12, 4000), -np.linspace(1.0 + 1e-9, 12, 4000)])
    assert np.all(r * (OBSTACLE.f_phi(r) - OBSTACLE.f_v(r) * r) < 0)


def test_log_extension_profile():
    r0 = LOG.r0
    H = lambda r: sign_function(LOG, np.asarray(r))  # noqa: E731
    assert np.all(H(np.linspace(1, r0, 500)) > 0)
    assert np.all(H(np.linspace(-r0, -1, 500)) < 0)
    far = np.concatenate([np.linspace(2 * r0, 20, 300), -np.linspace(2 * r0, 20, 300)])
    assert np.all(H(far) == 0)
    # between r0 and 2 r0 the taper keeps the sign
    assert np.all(H(np.linspace(r0, 2 * r0 - 1e-6, 300)) > 0)


def test_delta0():
    d = delta0(LOG)
    assert 0 < d <= LOG.r0 - 1
    t = np.linspace(-d, d, 1001)[1:-1]
    assert np.all(sign_function(LOG, 1 + t) > 0) and np.all(sign_function(LOG, -1 + t) < 0)


def test_delta0_bracket_for_weak_sign():
    # a model whose H changes sign near the physical range: rho_S barely above alpha
    m = build_example_model(alpha=1.0, rho_S=1.05, kind="log")
    d = delta0(m)
    assert 0 < d <= m.r0 - 1
    t = np.linspace(-d, d, 2001)[1:-1]
    assert np.all(sign_function(m, 1 + t) > 0) and np.all(sign_function(m, -1 + t) < 0)


@pytest.mark.parametrize("delta", [0.1, 0.01, 0.001])
def test_log_collar_conditions(delta):
    s = np.concatenate([np.linspace(1 - delta, 1, 200), np.linspace(-1, -1 + delta, 200)])
    bp = LOG.b_phi(s)
    assert np.all(bp <= 2 * LOG.params["rho_S"] * LOG.params["P"] * delta + 1e-15)
    inner = np.linspace(-1 + 1e-12, 1 - 1e-12, 20001)
    prod = LOG.b_phi(inner) * np.log((1 + inner) / (1 - inner))
    assert abs(prod[0]) < 1e-9 and abs(prod[-1]) < 1e-9
    assert np.max(np.abs(np.diff(prod))) < 1e-2


def test_obstacle_source_sign_with_penalty():
    r = np.linspace(-6, 6, 6001)
    for d in (0.2, 0.05, 0.001):
        b = beta(PotentialSpec("obstacle", d), r)
        for s in (0.0, 0.5, 1.0, 3.0):
            assert np.all((gamma_phi(OBSTACLE, r, s) - r * gamma_v(OBSTACLE, r, s)) * b <= 1e-15)


def test_log_source_lower_bound():
    C = source_lower_bound(LOG)
    assert C > 0
    R, S = np.meshgrid(np.linspace(-3, 3, 1237), np.linspace(0, 2, 23), indexing="ij")
    for d in (0.05, 0.01, 0.0033):
        b = beta(PotentialSpec("log", d), R)
        assert np.all(gamma_stationary(LOG, R, S) * b >= -C * (1 + np.abs(S) + np.abs(R)))


def test_extensions_bounded_and_lipschitz():
    r = np.linspace(-20, 20, 400_001)
    h = r[1] - r[0]
    for m in (OBSTACLE, LOG):
        for f in (m.b_v, m.b_phi, m.f_v, m.f_phi):
            v = f(r)
            assert np.all(np.isfinite(v)) and np.max(np.abs(v)) < 10
        for f in (m.b_v, m.f_v):
            assert np.max(np.abs(np.diff(f(r)))) / h < 10


def test_zero_model():
    z = zero_model()
    r = np.linspace(-3, 3, 11)
    assert np.all(gamma_v(z, r, 1.0) == 0) and np.all(gamma_phi(z, r, 1.0) == 0)
