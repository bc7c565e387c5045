import math

import numpy as np
import pytest

from fel.frames import (
    coordinate_frame, coulomb_angle, coulomb_project, frame_energy, metric_weight, rotate_frame,
    tangential_energy, willmore_energy,
)
from fel.geometry import build_geometry
from fel.zoo import fourier_perturb, random_rotation, shear_reparametrize, transform

from conftest import SQRT2, clifford_torus, figure_eight, rotational


def coulomb_energy(imm):
    c = build_geometry(imm)
    frame, _ = coulomb_project(c, coordinate_frame(c))
    return frame_energy(c, frame)


def rotational_FT(R):
    """Tangential energy of the coordinate frame on the torus of revolution with r = 1."""
    return 2 * math.pi**2 * (R - math.sqrt(R**2 - 1))


def test_clifford_energy_is_two_pi_squared():
    e = coulomb_energy(clifford_torus(128))
    assert abs(e.F - 2 * math.pi**2) / (2 * math.pi**2) <= 1e-8
    assert e.F_T == pytest.approx(0.0, abs=1e-12)
    assert e.W == pytest.approx(2 * math.pi**2, rel=1e-12)


@pytest.mark.parametrize("R", [SQRT2, 2.0, 1.2])
def test_rotational_tangential_energy_closed_form(R):
    e = coulomb_energy(rotational(R, 1.0, 128))
    assert e.F_T == pytest.approx(rotational_FT(R), rel=1e-9)


def test_rotational_coordinate_frame_is_already_coulomb():
    c = build_geometry(rotational(SQRT2, 1.0, 64))
    theta, _ = coulomb_angle(c, coordinate_frame(c))
    assert np.max(np.abs(theta)) < 1e-10


@pytest.mark.parametrize("make", [lambda: fourier_perturb(rotational(SQRT2, 1.0, 128), 4, 0.05),
                                  lambda: figure_eight(256),
                                  lambda: fourier_perturb(clifford_torus(64), 1, 0.01),
                                  lambda: shear_reparametrize(rotational(SQRT2, 1.0, 64), 0.05)])
def test_decomposition_holds_for_any_frame(make):
    c = build_geometry(make())
    rng = np.random.default_rng(0)
    s, t = c.grid.lattice_coords()
    theta = 0.3 * np.sin(2 * np.pi * s) + rng.uniform(-1, 1) * np.cos(2 * np.pi * (s + t))
    for frame in (coordinate_frame(c), rotate_frame(coordinate_frame(c), theta)):
        e = frame_energy(c, frame)
        assert abs(e.gap) <= 1e-8 * max(1.0, e.F)


def test_willmore_gap_vanishes_on_tori():
    c = build_geometry(fourier_perturb(rotational(SQRT2, 1.0, 64), 2, 0.05))
    W, Q, gap = willmore_energy(c)
    assert abs(gap) <= 1e-6 * W


def test_coulomb_solve_converges_and_defect_decays():
    defects = []
    for n in (64, 128, 256):
        c = build_geometry(fourier_perturb(rotational(SQRT2, 1.0, n), 5, 0.05))
        _, res = coulomb_angle(c, coordinate_frame(c))
        assert res < 1e-10
        defects.append(coulomb_project(c, coordinate_frame(c))[1])
    assert defects[1] < defects[0] / 100 and defects[2] < defects[1] / 100


def test_coulomb_frame_minimises_tangential_energy():
    c = build_geometry(fourier_perturb(rotational(SQRT2, 1.0, 64), 5, 0.05))
    frame, _ = coulomb_project(c, coordinate_frame(c))
    assert tangential_energy(c, frame) <= tangential_energy(c, coordinate_frame(c))
    best = tangential_energy(c, frame)
    s, t = c.grid.lattice_coords()
    for k in range(1, 4):
        bumped = rotate_frame(frame, 0.1 * np.sin(2 * np.pi * (k * s + t)))
        assert tangential_energy(c, bumped) > best


def test_rotation_away_from_coulomb_costs_dirichlet_energy_of_the_angle():
    c = build_geometry(fourier_perturb(rotational(SQRT2, 1.0, 128), 5, 0.05))
    frame, _ = coulomb_project(c, coordinate_frame(c))
    s, t = c.grid.lattice_coords()
    theta = 0.2 * np.sin(2 * np.pi * (s + 2 * t)) + 0.1 * np.cos(2 * np.pi * 3 * s)
    tx, ty = c.grid.grad(theta)
    a11, a12, a22 = metric_weight(c)
    expected = 0.5 * c.grid.integrate(a11 * tx * tx + 2 * a12 * tx * ty + a22 * ty * ty)
    diff = tangential_energy(c, rotate_frame(frame, theta)) - tangential_energy(c, frame)
    assert diff == pytest.approx(expected, rel=1e-6)


@pytest.mark.parametrize("scale", [0.5, 3.0])
def test_energy_is_invariant_under_similarities(scale):
    imm = fourier_perturb(rotational(SQRT2, 1.0, 64), 8, 0.05)
    rot = random_rotation(3, np.random.default_rng(1))
    e0 = coulomb_energy(imm)
    e1 = coulomb_energy(transform(imm, scale=scale, rotation=rot, translation=np.array([1.0, -2.0, 0.5])))
    assert e1.F == pytest.approx(e0.F, rel=1e-10)
    assert e1.W == pytest.approx(e0.W, rel=1e-10)


def test_energy_serialises():
    doc = coulomb_energy(clifford_torus(16)).to_json()
    assert set(doc) == {"F", "F_T", "W", "quarter_II2", "gap"}


def test_coulomb_energy_does_not_depend_on_the_chart():
    imm = rotational(SQRT2, 1.0, 128)
    e0, e1 = coulomb_energy(imm), coulomb_energy(shear_reparametrize(imm, 0.05))
    assert e1.F_T == pytest.approx(e0.F_T, rel=1e-8)
    assert e1.F == pytest.approx(e0.F, rel=1e-8)


def test_frame_invariants():
    c = build_geometry(fourier_perturb(rotational(SQRT2, 1.0, 64), 6, 0.05))
    frame, _ = coulomb_project(c, coordinate_frame(c))
    chk = frame.check(c)
    assert chk["ok"], chk
    assert "orientation" in chk
    c4 = build_geometry(clifford_torus(32))
    chk4 = coordinate_frame(c4).check(c4)
    assert chk4["ok"] and "orientation" not in chk4
