"""
Conformal gauge restoration
===========================

A torus immersion in an arbitrary chart is reparametrised into a conformal
one by harmonic coordinates. The functions ``h1 = s + p1`` and
``h2 = t + p2`` with periodic ``p`` solving ``div(A grad h) = 0``
(``A = sqrt(g) g^{-1}``) have harmonic differentials spanning the harmonic
1-forms. Writing ``*dh1 = a dh1 + b dh2``, the form ``dh1 + i *dh1`` is
holomorphic, so ``(h1, h2)`` are lattice coordinates of a conformal chart
with ``tau = i b / (1 + i a)``. The immersion is resampled at the points
where ``h`` hits the new grid; the image is unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .frames import _solve_weighted, metric_weight
from .geometry import build_geometry
from .grid import PeriodicGrid, reduce_to_moduli, relattice
from .zoo import ImmersionField

RESIDUAL_CAP = 2.0


class GaugeRestorationError(RuntimeError):
    """Raised when a chart is too far from conformal to be restored."""


@dataclass(frozen=True)
class GaugeInfo:
    residual_before: float
    residual_after: float
    tau_before: tuple[float, float]
    tau_after: tuple[float, float]
    newton_residual: float
    solver_residual: float
    identity: bool


def harmonic_coordinates(imm: ImmersionField, tol: float = 1e-13):
    """Periodic parts ``p1, p2`` of the harmonic coordinates and the new ``tau``."""
    cache = build_geometry(imm)
    g = imm.grid
    t1, t2 = g.tau
    A = metric_weight(cache)
    a11, a12, a22 = A
    out = []
    res = 0.0
    for grad_lin in ((1.0, -t1 / t2), (0.0, 1.0 / t2)):
        gx, gy = grad_lin
        rhs = -g.div(a11 * gx + a12 * gy, a12 * gx + a22 * gy)
        p, r = _solve_weighted(g, A, rhs, tol)
        res = max(res, r)
        out.append((p, gx, gy))
    # Hodge star of dh1 in flat components, then lattice components
    p1, gx, gy = out[0]
    px, py = g.grad(p1)
    b1, b2 = gx + px, gy + py
    s = cache.sqrt_g
    v1, v2 = cache.gi11 * b1 + cache.gi12 * b2, cache.gi12 * b1 + cache.gi22 * b2
    star1, star2 = -s * v2, s * v1
    a = float(np.mean(star1))
    b = float(np.mean(t1 * star1 + t2 * star2))
    tau = 1j * b / (1 + 1j * a)
    return out[0][0], out[1][0], (tau.real, tau.imag), res


def _invert(grid: PeriodicGrid, p1, p2, iters: int = 30, tol: float = 1e-14):
    """Lattice points ``(s, t)`` with ``(s + p1, t + p2) = grid point`` (mod 1)."""
    S, T = grid.lattice_coords()
    p1s, p1t = grid.partial_s(p1), grid.partial_t(p1)
    p2s, p2t = grid.partial_s(p2), grid.partial_t(p2)
    stack = np.stack([p1, p2, p1s, p1t, p2s, p2t])
    s = S - p1
    t = T - p2
    err = np.inf
    for _ in range(iters):
        v = grid.interpolate(stack, s, t)
        f1 = s + v[0] - S
        f2 = t + v[1] - T
        j11, j12, j21, j22 = 1 + v[2], v[3], v[4], 1 + v[5]
        det = j11 * j22 - j12 * j21
        ds = (j22 * f1 - j12 * f2) / det
        dt = (-j21 * f1 + j11 * f2) / det
        s, t = s - ds, t - dt
        err = float(max(np.max(np.abs(f1)), np.max(np.abs(f2))))
        if err < tol:
            break
    return s, t, err


def restore_conformal_gauge(imm: ImmersionField, target: float = 1e-6, cap: float = RESIDUAL_CAP,
                            tol: float = 1e-13, oversample: int = 1) -> tuple[ImmersionField, GaugeInfo]:
    """Reparametrise ``imm`` into a conformal chart of a flat torus.

    With ``oversample > 1`` the harmonic coordinates are solved on a finer
    grid and the result is resampled back, which removes most of the
    truncation error of the new chart.
    """
    if oversample > 1:
        g = imm.grid
        x, fine = g.resample(imm.samples, oversample * g.n1, oversample * g.n2)
        out, info = restore_conformal_gauge(ImmersionField(x, fine, imm.label), target, cap, tol)
        y, coarse = out.grid.resample(out.samples, g.n1, g.n2)
        res = ImmersionField(y, coarse, imm.label)
        after = build_geometry(res).conformality_residual
        return res, GaugeInfo(build_geometry(imm).conformality_residual, after, g.tau, coarse.tau,
                              info.newton_residual, info.solver_residual, info.identity)
    before = build_geometry(imm).conformality_residual
    tau0 = imm.grid.tau
    if before <= target:
        return imm, GaugeInfo(before, before, tau0, tau0, 0.0, 0.0, True)
    if not before <= cap:
        raise GaugeRestorationError(f"conformality residual {before:.3g} exceeds cap {cap}")
    p1, p2, tau, res = harmonic_coordinates(imm, tol)
    if not tau[1] > 0:
        raise GaugeRestorationError(f"harmonic coordinates reversed orientation (tau={tau})")
    s, t, err = _invert(imm.grid, p1, p2)
    if not err < 1e-9:
        raise GaugeRestorationError(f"inverting the harmonic coordinates failed (residual {err:.3g})")
    new_grid = imm.grid.with_tau(tau)
    out = ImmersionField(imm.grid.interpolate(imm.samples, s, t), new_grid, imm.label)
    after = build_geometry(out).conformality_residual
    return out, GaugeInfo(before, after, tau0, tau, err, res, False)


def reduce_lattice(imm: ImmersionField) -> ImmersionField:
    """Move a conformal chart onto a lattice in the moduli strip.

    Applies the unimodular change of basis found by the moduli reduction and
    rotates/rescales the flat coordinates, which keeps the chart conformal.
    """
    red = reduce_to_moduli(*imm.grid.tau)
    if red.matrix == ((1, 0), (0, 1)):
        return imm
    x, grid = relattice(imm.samples, imm.grid, red.matrix)
    return ImmersionField(x, grid, imm.label)
