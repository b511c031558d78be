import math

import numpy as np
import pytest

from inflap.core import Sampler
from inflap.eigen import (
    domain_continuity_check, gaussian_upper_bound, hopf_fit, max_principle_test,
    principal_eigenvalue, scaling_limit_check, solve_forced,
)
from inflap.operator import CoefficientSet
from inflap.oracles import p_laplace_eigenvalue

from conftest import ball_mask


def test_p_laplace_oracle_values():
    assert p_laplace_eigenvalue(2.0) == pytest.approx(math.pi**2 / 4)
    assert p_laplace_eigenvalue(0.0) == pytest.approx(1.5220170474, rel=1e-9)
    assert p_laplace_eigenvalue(1.0) == pytest.approx(1.7680476235, rel=1e-9)


def test_forced_below_trivial_bound_converges():
    m = ball_mask(1 / 50)
    c = Sampler(lambda x: np.cos(3 * x[:, 0]))
    rep = solve_forced(-2.0, m, CoefficientSet(0.0, c=c))
    assert rep.feasible and rep.sup_norm > 0


def test_forced_above_bound_fails():
    m = ball_mask(1 / 50)
    co = CoefficientSet(2.0)
    rep = solve_forced(2 * gaussian_upper_bound(m, co), m, co)
    assert not rep.feasible


def test_forced_parabola():
    m = ball_mask(1 / 40)
    rep = solve_forced(0.0, m, CoefficientSet(2.0))
    assert rep.feasible
    x = m.coords("interior")[:, 0]
    assert np.allclose(rep.field.values[m.interior], (1 - x**2) / 2, atol=1e-8)


def test_max_principle_test_examples():
    m = ball_mask(1 / 100)
    co = CoefficientSet(2.0, c=Sampler(lambda x: np.sin(x[:, 0])))
    assert max_principle_test(-2.0, m, co)
    assert not max_principle_test(gaussian_upper_bound(m, co) + 1.0, m, co)
    assert not max_principle_test(math.pi**2 / 4 + 0.5, m, CoefficientSet(2.0))


@pytest.fixture(scope="module")
def eigen_gamma2():
    return principal_eigenvalue(ball_mask(1 / 200), CoefficientSet(2.0))


def test_classical_eigenvalue(eigen_gamma2):
    r = eigen_gamma2
    assert r.lambda_lo <= math.pi**2 / 4 <= r.lambda_hi
    assert r.estimate == pytest.approx(math.pi**2 / 4, rel=0.02)
    assert r.width <= 0.05


def test_eigenfunction_shape(eigen_gamma2):
    phi = eigen_gamma2.eigenfunction
    m = phi.mask
    v = phi.values[m.interior]
    assert v.max() == pytest.approx(1.0)
    assert np.all(v > 0)
    assert np.all(phi.values[m.boundary] == 0)
    x = m.coords("interior")[:, 0]
    assert np.max(np.abs(v - np.cos(np.pi * x / 2))) < 0.05
    assert hopf_fit(phi) > 0


@pytest.mark.parametrize("gamma", [0.0, 1.0])
def test_degenerate_eigenvalue_matches_p_laplace(gamma):
    r = principal_eigenvalue(ball_mask(1 / 100), CoefficientSet(gamma))
    exact = p_laplace_eigenvalue(gamma)
    assert r.estimate == pytest.approx(exact, rel=0.01)
    assert hopf_fit(r.eigenfunction) > 0


def test_bracket_soundness():
    m = ball_mask(1 / 100)
    co = CoefficientSet(2.0)
    r = principal_eigenvalue(m, co, bracket_tol=0.05)
    assert max_principle_test(r.lambda_lo, m, co)
    assert not max_principle_test(r.lambda_hi, m, co)


@pytest.mark.slow
def test_degenerate_eigenvalue_against_max_principle_bisection():
    co = CoefficientSet(0.0)
    tol = 1e-2
    r = principal_eigenvalue(ball_mask(1 / 100), co, bracket_tol=tol)
    fine = ball_mask(1 / 400)
    lo, hi = r.lambda_lo - 0.1, r.lambda_hi + 0.1
    assert max_principle_test(lo, fine, co) and not max_principle_test(hi, fine, co)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if max_principle_test(mid, fine, co):
            lo = mid
        else:
            hi = mid
    assert abs(0.5 * (lo + hi) - r.estimate) <= tol


def test_additive_shift():
    m = ball_mask(1 / 100)
    c = Sampler(lambda x: x[:, 0] ** 2)
    base = principal_eigenvalue(m, CoefficientSet(2.0, c=c), bracket_tol=1e-3)
    t = 0.7
    shifted = principal_eigenvalue(m, CoefficientSet(2.0, c=Sampler(lambda x: x[:, 0] ** 2 + t)), bracket_tol=1e-3)
    assert shifted.estimate == pytest.approx(base.estimate - t, abs=1e-3)


def test_gaussian_bound_properties():
    co = CoefficientSet(0.0)
    b1 = gaussian_upper_bound(ball_mask(1 / 50, 1.0), co)
    b2 = gaussian_upper_bound(ball_mask(1 / 50, 2.0), co)
    assert math.isfinite(b1) and b2 < b1
    shifted = gaussian_upper_bound(ball_mask(1 / 50, 1.0), CoefficientSet(0.0, c=Sampler.constant(-5.0)))
    assert shifted == pytest.approx(b1 + 5.0, rel=1e-5)
    assert b1 >= principal_eigenvalue(ball_mask(1 / 50), co).lambda_lo


def test_constant_potential_scaling():
    m = ball_mask(1 / 50)
    rows = scaling_limit_check([1.0, 4.0], m, CoefficientSet(2.0, c=Sampler.constant(-1.0)))
    lam0 = principal_eigenvalue(m, CoefficientSet(2.0), bracket_tol=1e-3).estimate
    for a, lam, ratio in rows:
        assert ratio == pytest.approx(1.0 + lam0 / a, abs=2e-3 * (1 + a) / a)


def test_scaling_needs_increasing_alphas():
    with pytest.raises(ValueError):
        scaling_limit_check([4.0, 1.0], ball_mask(1 / 20), CoefficientSet(2.0, c=Sampler.constant(-1.0)))


def test_domain_monotonicity_and_degenerate_family():
    co = CoefficientSet(2.0)
    masks = [ball_mask(1 / 100, 1.0 + 1.0 / n, 1) for n in (1, 2, 4, 8)]
    res = domain_continuity_check(masks, co)
    est = [r.estimate for r in res]
    tol = res[0].width
    assert all(b >= a - tol for a, b in zip(est, est[1:]))
    # continuum value on (-R, R) is π²/(4R²): radius 1 + 1/8 is 21% below radius 1
    assert est[-1] == pytest.approx(math.pi**2 / (4 * 1.125**2), rel=0.02)
    same = domain_continuity_check([masks[0], masks[0]], co)
    assert same[0].lambda_lo == same[1].lambda_lo and same[0].lambda_hi == same[1].lambda_hi
