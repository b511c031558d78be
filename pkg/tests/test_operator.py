import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from inflap.core import Ball, Grid, Sampler, build_mask, sample
from inflap.kpp import kpp_power
from inflap.operator import (
    CoefficientSet, DiscreteOperator, DomainError, apply_L, directional_extremes,
    potential_term, residual_semilinear,
)

from conftest import ball_mask, box_mask


def _interval(h, half=1.0):
    return box_mask([-half], [half], h)


def _node_at(mask, x):
    xs = mask.grid.coords()[mask.interior]
    return int(mask.interior[np.argmin(np.linalg.norm(xs - np.atleast_1d(x), axis=1))])


def test_extremes_constant_field():
    m = _interval(0.1)
    f = sample(Sampler.constant(3.0), m)
    node = _node_at(m, 0.0)
    umax, umin, G = directional_extremes(f, node)
    assert umax == umin == 3.0 and G == 0.0


def test_extremes_affine_field():
    h = 0.125
    m = _interval(h)
    f = sample(Sampler(lambda x: x[:, 0]), m)
    umax, umin, G = directional_extremes(f, _node_at(m, 0.0))
    assert (umax, umin) == (h, -h)
    assert G == pytest.approx(1.0, abs=1e-14)


def test_extremes_parabola():
    m = _interval(0.1)
    f = sample(Sampler(lambda x: x[:, 0] ** 2), m)
    umax, umin, G = directional_extremes(f, _node_at(m, 0.0))
    assert umax == pytest.approx(0.01, abs=1e-15)
    assert umin == pytest.approx(0.01, abs=1e-15)
    assert G == pytest.approx(0.0, abs=1e-15)


def test_non_interior_node_rejected():
    m = _interval(0.25)
    f = sample(Sampler.constant(0.0), m)
    with pytest.raises(ValueError):
        directional_extremes(f, int(m.boundary[0]))


def test_rational_profile_with_drift():
    h = 1e-3
    m = _interval(h, 3.0)
    u = sample(Sampler(lambda x: 1.0 / (1.0 + x[:, 0] ** 2)), m)
    q = Sampler(lambda x: 4 * x / (1 + x**2), vector=True)
    out = apply_L(u, CoefficientSet(0.0, q=q))
    assert out.values[_node_at(m, 1.0)] == pytest.approx(-0.125, abs=1e-2)


@pytest.mark.parametrize("gamma", [0.0, 0.5, 1.0, 2.0])
def test_affine_is_annihilated(gamma):
    m = box_mask([-1.0, -1.0], [1.0, 1.0], 0.125)
    u = sample(Sampler(lambda x: 0.3 * x[:, 0] - 1.7 * x[:, 1] + 2.0), m)
    assert np.max(np.abs(apply_L(u, CoefficientSet(gamma)).values[m.interior])) < 1e-11


def test_four_thirds_power():
    h = 1e-3
    m = build_mask(Grid.centered(1, h, 2.0), Ball((1.0,), 0.5))
    u = sample(Sampler(lambda x: np.abs(x[:, 0]) ** (4.0 / 3.0)), m)
    v = apply_L(u, CoefficientSet(0.0)).values[_node_at(m, 1.0)]
    assert v == pytest.approx(64.0 / 81.0, abs=h ** (1.0 / 3.0))
    assert v == pytest.approx(0.790123, abs=1e-4)


@pytest.mark.parametrize("gamma", [0.0, 1.0, 1.5, 2.0])
def test_constant_is_annihilated(gamma):
    m = ball_mask(0.1, dim=2)
    u = sample(Sampler.constant(-4.2), m)
    assert np.all(apply_L(u, CoefficientSet(gamma)).values[m.interior] == 0.0)


def test_gamma_out_of_range():
    with pytest.raises(ValueError):
        CoefficientSet(2.5)
    with pytest.raises(ValueError):
        CoefficientSet(-0.1)


def test_residual_kpp_constants():
    m = ball_mask(0.1, dim=2)
    f = kpp_power(0.0)
    co = CoefficientSet(0.0)
    for level, expected in ((1.0, 0.0), (0.0, 0.0), (2.0, -8.0)):
        u = sample(Sampler.constant(level), m)
        r = residual_semilinear(u, co, f).values[m.interior]
        assert np.allclose(r, expected, atol=1e-14)


def test_residual_names_bad_node():
    m = _interval(0.25)
    u = sample(Sampler(lambda x: x[:, 0]), m)
    term = potential_term(np.ones(m.n_interior), 0.5, signed=False)
    with pytest.raises(DomainError, match="node"):
        residual_semilinear(u, CoefficientSet(2.5 - 1.0), term)


def test_drift_is_upwinded():
    # u = x^2 near 0 with q = +1: the forward difference sees the upslope
    h = 0.1
    m = _interval(h)
    u = sample(Sampler(lambda x: x[:, 0] ** 2), m)
    op = DiscreteOperator(m, CoefficientSet(2.0, q=Sampler(lambda x: np.ones_like(x), vector=True)))
    ev = op.evaluate(u.values, u.bc)
    i = np.flatnonzero(np.isclose(op.x[:, 0], 0.0))[0]
    assert ev.drift[i] == pytest.approx(h)


def _random_field(mask, seed):
    rng = np.random.default_rng(seed)
    vals = np.full(mask.grid.n_nodes, np.nan)
    vals[mask.active] = rng.normal(size=len(mask.active))
    return vals


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), t=st.floats(0.1, 10.0), gamma=st.sampled_from([0.0, 0.7, 1.0, 2.0]),
       dim=st.sampled_from([1, 2]))
def test_homogeneity(seed, t, gamma, dim):
    m = ball_mask(0.25, dim=dim)
    op = DiscreteOperator(m, CoefficientSet(gamma, q=Sampler(lambda x: 0.5 * x, vector=True)))
    vals = _random_field(m, seed)
    e1 = op.evaluate(vals)
    e2 = op.evaluate(t * vals)
    assume(not e1.flat.any() and not e2.flat.any())
    assert np.allclose(e2.value, t ** (3 - gamma) * e1.value, rtol=1e-10, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), bump_=st.floats(1e-3, 2.0), k=st.integers(0, 1))
def test_second_difference_monotone_in_neighbours_1d(seed, bump_, k):
    m = _interval(0.2)
    op = DiscreteOperator(m, CoefficientSet(2.0))
    vals = _random_field(m, seed)
    node = len(m.interior) // 2
    before = op.evaluate(vals).S[node]
    nb = m.rays.target[node, k]
    vals[nb] += bump_
    assert op.evaluate(vals).S[node] >= before - 1e-12


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), bump_=st.floats(1e-3, 2.0), k=st.integers(0, 7))
def test_second_difference_monotone_without_switch_2d(seed, bump_, k):
    # with unequal arms S can drop when the extremal direction switches
    m = ball_mask(0.25, dim=2)
    op = DiscreteOperator(m, CoefficientSet(2.0), blend=0.0)
    vals = _random_field(m, seed)
    node = int(np.argmin(np.linalg.norm(op.x, axis=1)))
    e0 = op.evaluate(vals)
    vals[m.rays.target[node, k]] += bump_
    e1 = op.evaluate(vals)
    assume(e0.j_plus[node] == e1.j_plus[node] and e0.j_minus[node] == e1.j_minus[node])
    assert e1.S[node] >= e0.S[node] - 1e-12


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), gamma=st.sampled_from([0.0, 1.0, 2.0]))
def test_frozen_jacobian_is_m_matrix(seed, gamma):
    m = ball_mask(0.25, dim=2)
    op = DiscreteOperator(m, CoefficientSet(gamma, q=Sampler(lambda x: -0.7 * x, vector=True)))
    J = op.jacobian(op.evaluate(_random_field(m, seed), Sampler.constant(0.0))).toarray()
    off = J - np.diag(np.diag(J))
    assert np.all(off >= 0)
    assert np.all(np.diag(J) <= 0)
    assert np.all(J.sum(axis=1) <= 1e-12)


def test_gamma_two_flat_clause_returns_second_difference():
    m = _interval(0.1)
    u = sample(Sampler(lambda x: x[:, 0] ** 2), m)
    op = DiscreteOperator(m, CoefficientSet(2.0))
    ev = op.evaluate(u.values)
    i = np.flatnonzero(np.isclose(op.x[:, 0], 0.0))[0]
    assert ev.flat[i]
    assert ev.value[i] == pytest.approx(2.0)
    op0 = DiscreteOperator(m, CoefficientSet(0.0, form="product"))
    assert op0.evaluate(u.values).value[i] == 0.0
    # the flux form sees the curvature at a critical point at order h^{2-γ}
    flux = DiscreteOperator(m, CoefficientSet(0.0)).evaluate(u.values).value[i]
    assert flux == pytest.approx(4 * 0.1**3 / 3 / 0.2)


def test_jacobian_matches_finite_differences():
    m = ball_mask(0.25, dim=2)
    op = DiscreteOperator(m, CoefficientSet(1.0, q=Sampler(lambda x: 0.3 * x, vector=True)))
    vals = _random_field(m, 7)
    bc = Sampler.constant(0.3)
    ev = op.evaluate(vals, bc)
    J = op.jacobian(ev, exact=True).toarray()
    eps = 1e-7
    I = m.interior
    for col in range(0, len(I), 3):
        pert = vals.copy()
        pert[I[col]] += eps
        fd = (op.evaluate(pert, bc).value - ev.value) / eps
        assert np.allclose(J[:, col], fd, atol=1e-4 * (1 + np.abs(fd).max()))
