import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from fel.geometry import build_geometry
from fel.grid import PeriodicGrid
from fel.zoo import (
    ImmersionError, ImmersionField, build_immersion, check_immersion, fourier_perturb,
    immersion_margin, meridian_angle, random_rotation, rotational_tau2, shear_reparametrize,
    transform, twisted_figure_eight,
)

from conftest import SQRT2, clifford_torus, figure_eight, rotational


def test_meridian_closed_form_matches_ode():
    R, r = 1.7, 1.0
    tau2 = rotational_tau2(R, r)
    w = np.linspace(0, 2 * np.pi * tau2, 50, endpoint=False)
    sol = solve_ivp(lambda _, v: (R + r * np.cos(v)) / r, (0, w[-1]), [0.0], t_eval=w,
                    rtol=1e-12, atol=1e-12, method="DOP853")
    assert np.allclose(meridian_angle(w, R, r), sol.y[0], atol=1e-9)


def test_meridian_closes_after_one_period():
    R, r = SQRT2, 1.0
    tau2 = rotational_tau2(R, r)
    v = meridian_angle(np.array([2 * np.pi * tau2 * (1 - 1e-9)]), R, r)
    assert v[0] == pytest.approx(2 * np.pi, abs=1e-6)


def test_rotational_is_conformal_to_spectral_accuracy():
    assert build_geometry(rotational(SQRT2, 1.0, 64)).conformality_residual < 1e-9


def test_rotational_rejects_wrong_lattice():
    from fel.zoo import rotational_conformal

    with pytest.raises(ValueError):
        rotational_conformal(2.0, 1.0, PeriodicGrid(16, 16))


def test_clifford_is_isometric_flat_square():
    c = build_geometry(clifford_torus(32))
    assert c.conformality_residual < 1e-13
    # unit circles in each factor: |d_s x|^2 = (2 pi)^2 in each of two planes
    assert np.allclose(c.g11, 4 * np.pi**2, rtol=1e-12)
    assert np.allclose(c.g12, 0.0, atol=1e-12)


def test_figure_eight_is_immersed():
    imm = figure_eight(64)
    assert immersion_margin(imm) > 1e-2


def test_figure_eight_rejects_reach_beyond_radius():
    with pytest.raises(ImmersionError):
        twisted_figure_eight(PeriodicGrid(16, 16), scale=3.0, radius=3.0)


def test_fourier_perturb_is_seeded():
    base = rotational(SQRT2, 1.0, 32)
    a = fourier_perturb(base, 7, 0.05)
    b = fourier_perturb(base, 7, 0.05)
    c = fourier_perturb(base, 8, 0.05)
    assert np.array_equal(a.samples, b.samples)
    assert not np.allclose(a.samples, c.samples)
    assert fourier_perturb(base, 7, 0.0) is base


def test_fourier_perturb_relative_amplitude():
    base = rotational(SQRT2, 1.0, 32)
    x = base.samples
    rms = math.sqrt(np.mean(np.sum((x - x.mean(axis=(1, 2), keepdims=True)) ** 2, axis=0)))
    d = fourier_perturb(base, 1, 0.01).samples - x
    assert math.sqrt(np.mean(d**2)) == pytest.approx(0.01 * rms, rel=1e-12)


def test_transform_rejects_non_orthogonal():
    imm = rotational(SQRT2, 1.0, 32)
    with pytest.raises(ValueError):
        transform(imm, rotation=np.diag([1.0, 2.0, 1.0]))
    with pytest.raises(ValueError):
        transform(imm, scale=-1.0)


def test_random_rotation_is_special_orthogonal():
    q = random_rotation(4, np.random.default_rng(3))
    assert np.allclose(q.T @ q, np.eye(4))
    assert np.linalg.det(q) == pytest.approx(1.0)


def test_shear_keeps_image_and_breaks_conformality():
    imm = rotational(SQRT2, 1.0, 64)
    sh = shear_reparametrize(imm, 0.05)
    c0, c1 = build_geometry(imm), build_geometry(sh)
    assert c1.conformality_residual > 1e-2
    W0 = c0.grid.integrate(np.sum(c0.H**2, axis=0) * c0.sqrt_g)
    W1 = c1.grid.integrate(np.sum(c1.H**2, axis=0) * c1.sqrt_g)
    assert W1 == pytest.approx(W0, rel=1e-8)


@pytest.mark.parametrize("axis", [0, 1])
def test_shear_moves_samples_along_the_surface(axis):
    imm = rotational(2.0, 1.0, 64)
    sh = shear_reparametrize(imm, 0.05, axis=axis)
    c = build_geometry(sh)
    assert c.conformality_residual > 1e-2
    # the torus of revolution satisfies (sqrt(x^2 + y^2) - R)^2 + z^2 = r^2
    x = sh.samples
    assert np.allclose((np.hypot(x[0], x[1]) - 2.0) ** 2 + x[2] ** 2, 1.0, atol=1e-8)
    with pytest.raises(ValueError):
        shear_reparametrize(imm, 0.05, axis=2)


def test_immersion_floor():
    g = PeriodicGrid(16, 16)
    flat = np.zeros((3, 16, 16))
    with pytest.raises(ImmersionError):
        check_immersion(ImmersionField(flat, g))


def test_samples_shape_is_validated():
    with pytest.raises(ValueError):
        ImmersionField(np.zeros((2, 16, 16)), PeriodicGrid(16, 16))


def test_build_immersion_from_mapping():
    imm = build_immersion({"kind": "fourier", "seed": 2, "amplitude": 0.02, "n": 32})
    assert imm.ambient_dim == 3 and imm.grid.shape == (32, 32)
    assert build_immersion({"kind": "clifford", "n": 16}).ambient_dim == 4
    with pytest.raises(ValueError):
        build_immersion({"kind": "sphere"})


def test_json_round_trip():
    imm = figure_eight(16)
    back = ImmersionField.from_json(imm.to_json())
    assert np.array_equal(back.samples, imm.samples) and back.label == imm.label
