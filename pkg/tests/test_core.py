import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from inflap.core import (
    Annulus, Ball, EmptyInterior, Grid, SampleError, Sampler,
    ShapeOutOfBounds, build_mask, bump, sample, stencil_directions,
)
from inflap.core import BOUNDARY, EXTERIOR, INTERIOR

from conftest import ball_mask, box_mask


def test_unit_interval_classification():
    m = build_mask(Grid.spanning([-1.0], [1.0], 0.5), Ball((0.0,), 1.0))
    assert np.allclose(m.coords("interior").ravel(), [-0.5, 0.0, 0.5])
    assert np.allclose(np.sort(m.coords("boundary").ravel()), [-1.0, 1.0])


def test_ball_below_spacing_is_empty():
    with pytest.raises(EmptyInterior):
        build_mask(Grid.centered(1, 0.5, 1.0), Ball((0.0,), 0.3))


def test_unit_square_counts():
    m = box_mask([0.0, 0.0], [1.0, 1.0], 0.25)
    assert m.n_interior == 9
    assert len(m.boundary) == 16


def test_grid_too_small_for_shape():
    g = Grid.spanning([-1.0], [1.0], 0.25)
    with pytest.raises(ShapeOutOfBounds):
        build_mask(g, Ball((0.0,), 1.1))


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(4, 0.1, (0,) * 4, (5,) * 4)
    with pytest.raises(ValueError):
        Grid(1, -0.1, (0,), (5,))
    with pytest.raises(ValueError):
        Grid(1, 0.1, (0,), (5,), directions="spiral")


def test_centered_grids_share_nodes():
    a = Grid.centered(1, 0.1, 1.0).coords().ravel()
    b = Grid.centered(1, 0.05, 1.0).coords().ravel()
    a = a[np.abs(a) <= 1.0 + 1e-12]
    assert np.all(np.min(np.abs(b[:, None] - a[None, :]), axis=0) < 1e-12)


def test_sample_values():
    m = build_mask(Grid.spanning([-1.0], [1.0], 1.0), Ball((0.0,), 1.0))
    zero = sample(Sampler.constant(0.0), m)
    assert np.all(zero.values[m.active] == 0.0)
    sq = sample(Sampler(lambda x: np.sum(x * x, axis=1)), m)
    x = m.grid.coords().ravel()
    assert np.allclose(sq.values[m.active], x[m.active] ** 2)
    assert sorted(sq.values[m.active]) == [0.0, 1.0, 1.0]


def test_bump_at_center():
    assert bump(1.0)(np.zeros((1, 2)))[0] == pytest.approx(math.exp(-1.0), abs=1e-12)
    assert bump(1.0)(np.array([[1.5]]))[0] == 0.0


def test_sample_rejects_non_finite():
    m = ball_mask(0.25)
    with pytest.raises(SampleError), np.errstate(divide="ignore"):
        sample(Sampler(lambda x: 1.0 / x[:, 0]), m)


def test_exterior_is_nan_and_field_is_frozen():
    m = ball_mask(0.25)
    f = sample(Sampler.constant(1.0), m)
    assert np.all(np.isnan(f.values[m.kind == EXTERIOR]))
    with pytest.raises(ValueError):
        f.values[m.interior[0]] = 2.0


def test_ring_stencil_is_symmetric():
    for r in (1, 2, 3):
        d = stencil_directions(2, r, "ring")
        rows = {tuple(v) for v in d}
        assert all(tuple(-v) in rows for v in d)
        assert len(rows) == len(d)


def test_annulus_excludes_hole():
    m = build_mask(Grid.centered(2, 0.1, 1.0), Annulus((0.0, 0.0), 0.5, 1.0))
    r = np.linalg.norm(m.coords("interior"), axis=1)
    assert r.min() > 0.5 and r.max() < 1.0


def test_crossings_lie_on_surface():
    m = ball_mask(0.07, dim=2)
    pts = m.rays.crossing_points
    assert len(pts) > 0
    assert np.allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(
    h=st.sampled_from([0.05, 0.1, 0.125, 0.2]),
    radius=st.floats(0.45, 1.0),
    cx=st.floats(-0.3, 0.3),
    dim=st.sampled_from([1, 2]),
)
def test_classification_is_partition(h, radius, cx, dim):
    center = (cx,) + (0.0,) * (dim - 1)
    m = ball_mask(h, radius, dim, center)
    kinds = m.kind
    assert set(np.unique(kinds)) <= {INTERIOR, BOUNDARY, EXTERIOR}
    n = len(m.interior) + len(m.boundary) + int(np.sum(kinds == EXTERIOR))
    assert n == m.grid.n_nodes
    assert np.all(m.rays.length > 0)
    assert np.all(m.rays.length <= np.linalg.norm(m.rays.directions, axis=1) * h + 1e-12)
    inside = Ball(center, radius).inside(m.coords("interior"))
    assert inside.all()


@settings(max_examples=30, deadline=None)
@given(a=st.integers(-4, 4), b=st.integers(-4, 4), c=st.integers(-4, 4), k=st.integers(2, 6))
def test_centered_differences_exact_on_quadratics(a, b, c, k):
    h = 2.0 ** -k
    m = box_mask([-1.0], [1.0], h)
    f = sample(Sampler(lambda x: a * x[:, 0] ** 2 + b * x[:, 0] + c), m)
    v = f.values
    I = m.interior
    x = m.grid.coords()[I, 0]
    d1 = (v[I + 1] - v[I - 1]) / (2 * h)
    d2 = (v[I + 1] - 2 * v[I] + v[I - 1]) / h**2
    assert np.allclose(d1, 2 * a * x + b, rtol=0, atol=1e-12)
    assert np.allclose(d2, 2 * a, rtol=0, atol=1e-9)
