import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from inflap.oracles import (
    DEFAULT_CASES, Bump, Exponential, Gaussian, OracleDomainError, Power, RationalDecay,
    certificate, discrete_agreement, hopf_barrier_bracket, radial_L_value,
)

PROFILES = [
    (Power(4.0 / 3.0), (0.5, 2.0)),
    (Power(-0.5, 2.0), (0.5, 2.0)),
    (Exponential(1.5, 2.0), (0.1, 2.0)),
    (Gaussian(1.0, 2.0), (0.2, 1.8)),
    (Bump(0.2), (0.3, 4.5)),
    (RationalDecay(), (0.2, 3.0)),
]


def test_power_value():
    assert radial_L_value(Power(4.0 / 3.0), 0.0, 1.0) == pytest.approx(64.0 / 81.0, rel=1e-14)


@pytest.mark.parametrize("gamma", [0.0, 0.5, 1.0, 2.0])
@pytest.mark.parametrize("r", [0.3, 1.0, 2.5])
def test_exponential_value(gamma, r):
    a = 2.0
    got = radial_L_value(Exponential(a, 3.0), gamma, r)
    assert got == pytest.approx(a ** (4 - gamma) * math.exp(-(3 - gamma) * a * r), rel=1e-12)


def test_gaussian_value():
    got = radial_L_value(Gaussian(1.0, 2.0), 0.0, 1.0)
    assert got == pytest.approx(8.0 * math.exp(-3.0), rel=1e-14)
    assert got == pytest.approx(0.398, abs=5e-4)


def test_drift_term():
    p = RationalDecay()
    r = 1.0
    q = 4 * r / (1 + r * r)
    assert radial_L_value(p, 0.0, r, q) == pytest.approx(-8 * r * r / (1 + r * r) ** 6, rel=1e-13)


def test_domain_errors():
    with pytest.raises(OracleDomainError):
        radial_L_value(Power(2.0), 0.0, 0.0)
    with pytest.raises(OracleDomainError):
        radial_L_value(Bump(0.5), 0.0, 2.5)
    with pytest.raises(OracleDomainError):
        radial_L_value(RationalDecay(), 1.0, np.array([0.5, -1.0]))
    with pytest.raises(ValueError):
        radial_L_value(Power(2.0), 3.0, 1.0)
    with pytest.raises(ValueError):
        Power(0.0)


@pytest.mark.parametrize("profile,rng_", PROFILES, ids=lambda p: type(p).__name__ if not isinstance(p, tuple) else "")
def test_derivatives_match_finite_differences(profile, rng_):
    r = np.linspace(*rng_, 37)
    d = 1e-6
    fd1 = (profile.phi(r + d) - profile.phi(r - d)) / (2 * d)
    fd2 = (profile.d1(r + d) - profile.d1(r - d)) / (2 * d)
    assert np.allclose(fd1, profile.d1(r), rtol=1e-6, atol=1e-12)
    assert np.allclose(fd2, profile.d2(r), rtol=1e-6, atol=1e-12)


def test_barrier_certificate():
    r = 1.0
    good = certificate(Exponential(20.0, r), 0.0, r / 2, r, q_bound=1.0, c_bound=1.0)
    assert good.passed and good.margin > 0
    bracket = hopf_barrier_bracket(20.0, 0.0, 1.0, 1.0, r, np.linspace(r / 2, r, 11))
    assert np.all(bracket > 0)
    bad = certificate(Exponential(0.5, r), 0.0, r / 2, r, q_bound=1.0, c_bound=1.0)
    assert not bad.passed
    assert r / 2 <= bad.worst_radius <= r
    assert np.all(hopf_barrier_bracket(0.5, 0.0, 1.0, 1.0, r, np.linspace(r / 2, r, 11)) < 0)


def test_power_certificate_constant():
    c = certificate(Power(4.0 / 3.0), 0.0, 0.5, 2.0, predicate=">=")
    assert c.passed
    assert np.allclose(c.values, 64.0 / 81.0)


def test_certificate_rejects_predicate():
    with pytest.raises(ValueError):
        certificate(Power(2.0), 0.0, 0.5, 1.0, predicate="!=")


@settings(max_examples=25, deadline=None)
@given(alpha=st.floats(1.05, 3.0), gamma=st.floats(0.0, 2.0), r=st.floats(0.2, 3.0))
def test_power_family_closed_form(alpha, gamma, r):
    expected = alpha ** (3 - gamma) * (alpha - 1) * r ** (3 * alpha - 4 - gamma * (alpha - 1))
    assert radial_L_value(Power(alpha), gamma, r) == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("gamma", [0.0, 1.0, 2.0])
def test_discrete_agreement_refines(gamma):
    for profile, lo, hi in DEFAULT_CASES:
        coarse = discrete_agreement(profile, gamma, 1e-2, lo, hi)
        fine = discrete_agreement(profile, gamma, 5e-3, lo, hi)
        assert fine.abs_error < coarse.abs_error
        assert fine.rel_error <= 1e-2
