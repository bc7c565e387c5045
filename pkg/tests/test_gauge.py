import math

import numpy as np
import pytest

from fel.frames import coordinate_frame, coulomb_project, frame_energy
from fel.gauge import GaugeRestorationError, reduce_lattice, restore_conformal_gauge
from fel.geometry import build_geometry
from fel.grid import relattice
from fel.zoo import ImmersionField, fourier_perturb, rotational_tau2, shear_reparametrize

from conftest import SQRT2, clifford_torus, rotational


def energy(imm):
    c = build_geometry(imm)
    return frame_energy(c, coulomb_project(c, coordinate_frame(c))[0])


@pytest.mark.parametrize("R,amp", [(SQRT2, 0.02), (SQRT2, 0.05), (2.0, 0.05)])
def test_restoring_a_sheared_torus_recovers_its_lattice(R, amp):
    imm = rotational(R, 1.0, 64)
    out, info = restore_conformal_gauge(shear_reparametrize(imm, amp))
    assert not info.identity
    assert info.residual_before > 1e-2
    assert info.residual_after < 1e-9
    assert info.newton_residual < 1e-9
    assert info.tau_after[0] == pytest.approx(0.0, abs=1e-10)
    assert info.tau_after[1] == pytest.approx(rotational_tau2(R, 1.0), rel=1e-10)
    assert energy(out).F == pytest.approx(energy(imm).F, rel=1e-9)


def test_conformal_input_is_returned_unchanged():
    imm = rotational(SQRT2, 1.0, 64)
    out, info = restore_conformal_gauge(imm)
    assert out is imm and info.identity


def test_perturbed_torus_reaches_the_gate():
    imm = fourier_perturb(rotational(SQRT2, 1.0, 64), 3, 0.02)
    out, info = restore_conformal_gauge(imm)
    assert info.residual_before > 1e-3
    assert info.residual_after < 1e-6
    W0, W1 = energy(imm).W, energy(out).W
    assert W1 == pytest.approx(W0, rel=1e-6)


def test_clifford_perturbation_in_four_dimensions():
    out, info = restore_conformal_gauge(fourier_perturb(clifford_torus(64), 2, 0.02))
    assert info.residual_after < 1e-6
    assert out.ambient_dim == 4


def test_far_from_conformal_is_refused():
    imm = shear_reparametrize(rotational(SQRT2, 1.0, 32), 0.05)
    with pytest.raises(GaugeRestorationError):
        restore_conformal_gauge(imm, cap=1e-3)


def test_reduce_lattice_moves_chart_into_the_strip():
    imm = rotational(2.0, 1.0, 64)
    x, g = relattice(imm.samples, imm.grid, ((1, 1), (0, 1)))
    out = reduce_lattice(ImmersionField(x, g, "slanted"))
    t1, t2 = out.grid.tau
    assert abs(t1) <= 0.5 + 1e-12 and t1**2 + t2**2 >= 1 - 1e-12
    assert t2 == pytest.approx(math.sqrt(3.0), rel=1e-12)
    assert build_geometry(out).conformality_residual < 1e-9
    assert energy(out).F == pytest.approx(energy(imm).F, rel=1e-10)
