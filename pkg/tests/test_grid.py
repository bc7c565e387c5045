import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fel.grid import (
    ModuliPoint, PeriodicGrid, field_from_csv, field_from_json, field_to_csv, field_to_json,
    reduce_to_moduli, relattice,
)


def trig(grid, k, l, phase=0.0):
    s, t = grid.lattice_coords()
    return np.cos(2 * np.pi * (k * s + l * t) + phase)


@pytest.mark.parametrize("tau", [(0.0, 1.0), (0.3, 1.4), (-0.5, 0.9)])
def test_flat_derivatives_of_a_plane_wave(tau):
    g = PeriodicGrid(32, 32, tau)
    k, l = 3, -2
    s, t = g.lattice_coords()
    arg = 2 * np.pi * (k * s + l * t)
    f = np.sin(arg)
    # s = x1 - tau1 x2 / tau2, t = x2 / tau2
    kx = 2 * np.pi * k
    ky = 2 * np.pi * (l - tau[0] * k) / tau[1]
    assert np.allclose(g.partial_x(f), kx * np.cos(arg), atol=1e-11)
    assert np.allclose(g.partial_y(f), ky * np.cos(arg), atol=1e-11)
    assert np.allclose(g.laplacian(f), -(kx**2 + ky**2) * f, atol=1e-9)


def test_integrate_measures_cell_area():
    g = PeriodicGrid(16, 24, (0.2, 1.7))
    assert g.integrate(np.ones(g.shape)) == pytest.approx(1.7, rel=1e-14)
    assert g.integrate(trig(g, 1, 2)) == pytest.approx(0.0, abs=1e-14)


def test_odd_derivative_drops_nyquist():
    g = PeriodicGrid(16, 16)
    f = trig(g, 8, 0)
    assert np.max(np.abs(g.partial_x(f))) < 1e-12


def test_poisson_solve_recovers_zero_mean_solution():
    g = PeriodicGrid(32, 32, (0.1, 1.2))
    u = trig(g, 2, 1, 0.3) + 0.5 * trig(g, -1, 3)
    res = g.solve_poisson(g.laplacian(u) + 4.0)
    assert res.removed_mean == pytest.approx(4.0)
    assert np.allclose(res.phi, u - u.mean(), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3.0, 3.0), st.floats(0.2, 4.0))
def test_reduction_lands_in_the_strip(t1, t2):
    red = reduce_to_moduli(t1, t2)
    assert red.point.in_strip
    (a, b), (c, d) = red.matrix
    assert a * d - b * c == 1


def test_reduction_is_identity_inside_strip():
    red = reduce_to_moduli(0.2, 1.3)
    assert red.word == ()
    assert red.point.as_tuple() == (0.2, 1.3)


def test_moduli_angle():
    assert ModuliPoint(0.0, 1.0).theta == pytest.approx(math.pi / 2)
    assert ModuliPoint(0.5, 1.0).theta == pytest.approx(math.pi / 3)


def test_interpolation_reproduces_band_limited_fields():
    g = PeriodicGrid(16, 16, (0.3, 1.1))
    f = trig(g, 2, -3, 0.4)
    s = np.array([0.13, 0.77])
    t = np.array([0.51, 0.05])
    exact = np.cos(2 * np.pi * (2 * s - 3 * t) + 0.4)
    assert np.allclose(g.interpolate(f, s, t), exact, atol=1e-12)


def test_resample_round_trip():
    g = PeriodicGrid(16, 16)
    f = trig(g, 3, 2, 0.1)
    up, fine = g.resample(f, 32)
    assert fine.shape == (32, 32)
    assert np.allclose(up, trig(fine, 3, 2, 0.1), atol=1e-12)
    back, _ = fine.resample(up, 16)
    assert np.allclose(back, f, atol=1e-12)


@pytest.mark.parametrize("n2", [16, 20])
def test_relattice_matches_the_function_in_new_coordinates(n2):
    g = PeriodicGrid(16, n2, (0.2, 1.1))
    (a, b), (c, d) = matrix = ((1, 1), (0, 1))
    f = trig(g, 1, 2, 0.3)
    h, g2 = relattice(f, g, matrix)
    s, t = g2.lattice_coords()
    exact = np.cos(2 * np.pi * (1 * (d * s + b * t) + 2 * (c * s + a * t)) + 0.3)
    assert np.allclose(h, exact, atol=1e-11)
    assert g2.tau == pytest.approx((1.2, 1.1))


def test_json_and_csv_round_trips(tmp_path):
    g = PeriodicGrid(8, 10, (0.25, 1.5))
    f = np.random.default_rng(0).standard_normal((3, 8, 10))
    doc = field_to_json(f, g, label="x")
    back, g2 = field_from_json(doc)
    assert np.array_equal(back, f) and g2.tau == g.tau
    path = tmp_path / "f.csv"
    field_to_csv(f, path)
    assert np.allclose(field_from_csv(path), f)


def test_grid_rejects_odd_sizes():
    with pytest.raises(ValueError):
        PeriodicGrid(15, 16)
