import numpy as np
import pytest

from inflap.core import Sampler
from inflap.liouville import (
    EnvelopeCertificateError, ExperimentConfig, certify_theta_subsolution, envelope_potential,
    liouville_II_experiment, liouville_III_experiment, power_envelope, sharpness_counterexample,
    theta_closed_form,
)

# direct differentiation of (r/ε)^α at α = -1/2, ε = 1, r = 2, γ = 0, c = 1
THETA_AT_2 = 0.0031666412960149283


def test_theta_closed_form_value():
    a, r = -0.5, 2.0
    expected = a**3 * r ** (3 * a - 4) * (a - 1 - a * r**a)
    assert expected == pytest.approx(THETA_AT_2, rel=1e-14)
    assert theta_closed_form(r, a, 1.0) == pytest.approx(THETA_AT_2, rel=1e-14)


def test_theta_closed_form_is_positive_outside_epsilon():
    r = np.linspace(1.0, 50.0, 500)
    for a in (-0.1, -0.5, -0.9):
        for g in (0.0, 1.0, 2.0):
            assert np.all(theta_closed_form(r, a, 1.0, g) > 0)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(alpha_test=0.5)
    with pytest.raises(ValueError):
        ExperimentConfig(gamma=2.5)
    with pytest.raises(ValueError):
        ExperimentConfig(gamma=2.0, beta=1.5)
    assert ExperimentConfig().replace(h=0.5).h == 0.5


@pytest.mark.parametrize("alpha", [-0.25, -0.5, -0.75, -0.999])
def test_theta_certificate_sweep(alpha):
    coarse = certify_theta_subsolution(ExperimentConfig(alpha_test=alpha, h=1e-2))
    fine = certify_theta_subsolution(ExperimentConfig(alpha_test=alpha, h=5e-3))
    assert coarse.passed and fine.passed and fine.min_margin > 0
    assert fine.max_deviation < coarse.max_deviation
    assert fine.max_deviation <= 1e-2 * np.max(np.abs(theta_closed_form(np.linspace(1, 4, 50), alpha, 1.0)))


@pytest.mark.parametrize("gamma", [1.0, 2.0])
def test_theta_certificate_other_gamma(gamma):
    assert certify_theta_subsolution(ExperimentConfig(gamma=gamma, beta=0.5)).passed


def test_sharpness_counterexample():
    rep = sharpness_counterexample()
    assert rep.max_error <= 1e-2
    assert rep.max_value <= 0.0
    assert rep.nonconstant
    i = np.argmin(np.abs(rep.x - 1.0))
    assert rep.values[i] == pytest.approx(-0.125, abs=1e-2)


@pytest.mark.parametrize("q", [None, Sampler(lambda x: 0.5 * x / (1 + x**2), vector=True)])
def test_liouville_II_flat_trace(q):
    rep = liouville_II_experiment(ExperimentConfig(), q)
    assert rep.flat and rep.monotone
    assert all(g >= -1e-6 for g in rep.comparison_gaps)


def test_liouville_II_rejects_strong_drift():
    with pytest.raises(EnvelopeCertificateError):
        liouville_II_experiment(ExperimentConfig(), Sampler(lambda x: 2.0 * x, vector=True))


def test_power_envelope_exponents():
    a, V = power_envelope(0.0, 1.0)
    assert a == 2.0
    assert V(np.array([[3.0]]))[0] == pytest.approx(9.0)
    assert envelope_potential(0.0, 1.0) == -8.0
    with pytest.raises(ValueError):
        power_envelope(0.0, 3.0)


def test_liouville_III_borderline_case():
    rep = liouville_III_experiment(ExperimentConfig(beta=1.0), c=-8.0)
    assert rep.alpha == 2.0
    assert rep.certificate_max <= ExperimentConfig().h ** 2
    assert rep.final_sup_plus <= 1e-8
    assert rep.below_barrier
    assert all(s == "converged" for s in rep.statuses)


def test_liouville_III_rejects_weak_absorption():
    with pytest.raises(EnvelopeCertificateError):
        liouville_III_experiment(ExperimentConfig(beta=1.0), c=-7.0)
    with pytest.raises(ValueError):
        liouville_III_experiment(ExperimentConfig(beta=1.0), c=1.0)
