import math

import numpy as np
import pytest

from fel.frames import coordinate_frame, coulomb_project, frame_energy
from fel.gauge import restore_conformal_gauge
from fel.geometry import GaugeError, build_geometry
from fel.variation import (
    DescentOptions, TRAJECTORY_COLUMNS, coefficient_check, el_residual, first_variation_FT,
    first_variation_W, ft_flux, ft_flux_perp_form, gradient_F, gradient_check, minimize,
    trajectory_summary,
)
from fel.zoo import fourier_perturb, random_trig_field, shear_reparametrize

from conftest import SQRT2, clifford_torus, rotational


def restored(seed, amp=0.02, n=64):
    return restore_conformal_gauge(fourier_perturb(rotational(SQRT2, 1.0, n), seed, amp))[0]


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_analytic_variations_match_differences(seed):
    rows = gradient_check(restored(seed), seeds=[10 * seed, 10 * seed + 1])
    for row in rows:
        assert row["rel_FT"] < 1e-4 and row["rel_W"] < 1e-4 and row["rel_F"] < 1e-4, row


def test_variation_on_an_exactly_conformal_torus():
    rows = gradient_check(rotational(2.0, 1.0, 64), seeds=[3, 4])
    assert max(r["rel_F"] for r in rows) < 1e-6


def test_clifford_torus_in_space_is_willmore_critical():
    imm = rotational(SQRT2, 1.0, 64)
    c = build_geometry(imm)
    for seed in range(3):
        w = random_trig_field(imm.grid, 3, np.random.default_rng(seed), 3)
        assert abs(first_variation_W(c, w)) < 1e-10
        assert abs(first_variation_FT(c, w)) > 1e-3


def test_exterior_and_perp_fluxes_differ_off_umbilic_points():
    c = build_geometry(rotational(2.0, 1.0, 64))
    X = ft_flux(c)
    Y = ft_flux_perp_form(c)
    assert np.max(np.abs(np.asarray(X) - np.asarray(Y))) > 1e-3


def test_variations_need_a_conformal_chart():
    c = build_geometry(shear_reparametrize(rotational(SQRT2, 1.0, 64), 0.05))
    w = random_trig_field(c.grid, 3, np.random.default_rng(0), 2)
    with pytest.raises(GaugeError):
        first_variation_W(c, w)


def test_coefficient_gradient_matches_differences():
    modes = [(0, 1, 0, "cos"), (1, 0, 1, "sin"), (2, 1, -1, "cos"), (2, 2, 1, "sin"), (0, 3, 2, "sin")]
    for row in coefficient_check(restored(4), modes):
        assert row["rel"] < 1e-6, row


def test_discrete_energy_is_the_coulomb_frame_energy():
    imm = restored(5)
    ev, _ = gradient_F(imm)
    c = build_geometry(imm)
    e = frame_energy(c, coulomb_project(c, coordinate_frame(c))[0])
    assert ev.E == pytest.approx(e.F, rel=1e-10)


def test_gradient_annihilates_similarity_directions():
    imm = restored(6)
    ev, _ = gradient_F(imm)
    X, G = imm.samples, ev.grad
    scale = math.sqrt(np.sum(G**2) * np.sum(X**2))
    skew = np.array([[0.0, 1.0, -0.5], [-1.0, 0.0, 2.0], [0.5, -2.0, 0.0]])
    assert abs(np.sum(G * X)) < 1e-12 * scale
    assert abs(np.sum(G * np.einsum("ab,bij->aij", skew, X))) < 1e-12 * scale
    assert np.max(np.abs(np.sum(G, axis=(1, 2)))) < 1e-12 * math.sqrt(np.sum(G**2))


def test_el_residual_does_not_depend_on_the_chart():
    imm = rotational(SQRT2, 1.0, 128)
    a = el_residual(imm)
    b = el_residual(restore_conformal_gauge(shear_reparametrize(imm, 0.02))[0])
    assert b == pytest.approx(a, rel=1e-6)


def test_descent_options_reject_unknown_keys():
    with pytest.raises(ValueError):
        DescentOptions.from_dict({"max_iter": 10, "step_size": 1.0})
    assert DescentOptions.from_dict({"max_iter": 10}).max_iter == 10


def test_descent_is_for_surfaces_in_space():
    with pytest.raises(ValueError):
        minimize(clifford_torus(16))


def test_short_descent_decreases_energy():
    start = fourier_perturb(rotational(SQRT2, 1.0, 32), 1, 0.05)
    state = minimize(start, {"max_iter": 10})
    F = [r["F"] for r in state.trajectory]
    assert F[-1] < F[0]
    assert set(TRAJECTORY_COLUMNS) <= set(state.trajectory[0])
    assert len(state.rows()[0]) == len(TRAJECTORY_COLUMNS)


def row(F, el, label="standard", jump=0.0):
    return {"F": F, "EL_residual": el, "class_label": label, "restore_jump": jump}


def test_trajectory_summary_excludes_restoration_jumps():
    traj = [row(30.0, 10.0), row(29.0, 5.0), row(29.001, 4.0, jump=0.002), row(28.0, 0.05)]
    s = trajectory_summary(traj)
    assert s["monotone"] and s["restorations"] == 1
    assert s["el_reduction"] == pytest.approx(200.0)
    assert s["F_final"] == 28.0 and s["class_constant"]


def test_trajectory_summary_flags_increase_and_flip():
    s = trajectory_summary([row(30.0, 1.0), row(30.5, 0.5, "nonstandard")])
    assert not s["monotone"] and not s["class_constant"]
    assert s["max_step_increase"] == pytest.approx(0.5)


def test_descent_experiment(descent):
    start, state = descent
    s = trajectory_summary(state.trajectory)
    assert state.converged
    assert s["monotone"] and s["class_constant"]
    assert s["el_reduction"] >= 100
    assert s["F_final"] >= 2 * math.pi**2
    assert state.step <= 500
