"""
Moving frames and frame energies
================================

A frame is a pair of orthonormal tangent fields ``(e1, e2)``. Its connection
form is ``omega_i = e1 . d_i e2`` and rotating the frame by ``theta`` turns
it into ``omega - d theta``. With ``A = sqrt(g) g^{-1}``,

    F_T = 1/2 int A^{ij} omega_i omega_j dx,
    F   = 1/4 int sum_k A^{ij} d_i e_k . d_j e_k dx,
    W   = int |H|^2 sqrt(g) dx,

and ``F = F_T + 1/4 int |II|^2 dvol`` for every frame; on tori
``1/4 int |II|^2 dvol = W`` by Gauss-Bonnet.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .geometry import GeometryCache, cross, dot
from .grid import PeriodicGrid


@dataclass(frozen=True, eq=False)
class FrameField:
    e1: np.ndarray
    e2: np.ndarray
    origin: str = "coordinate"

    def check(self, cache: GeometryCache, tol: float = 1e-8) -> dict:
        """Pointwise invariant defects (unit length, orthogonality, tangency, orientation)."""
        e1, e2 = self.e1, self.e2
        out = {
            "unit": float(max(np.max(np.abs(dot(e1, e1) - 1)), np.max(np.abs(dot(e2, e2) - 1)))),
            "orthogonal": float(np.max(np.abs(dot(e1, e2)))),
            "tangent": float(max(np.max(np.abs(cache.normal_part(e1))),
                                 np.max(np.abs(cache.normal_part(e2))))),
        }
        if cache.m == 3:
            out["orientation"] = float(np.max(np.abs(cross(e1, e2) - cache.normal)))
        out["ok"] = all(v <= tol for v in out.values())
        return out


@dataclass(frozen=True)
class EnergyBreakdown:
    F: float
    F_T: float
    W: float
    quarter_II2: float
    gap: float

    def to_json(self) -> dict:
        return asdict(self)


def coordinate_frame(cache: GeometryCache) -> FrameField:
    """Gram-Schmidt frame of ``(d1 Phi, d2 Phi)``; the coordinate frame in a conformal chart."""
    e1 = cache.P1 / np.sqrt(cache.g11)
    v = cache.P2 - dot(cache.P2, e1) * e1
    e2 = v / np.sqrt(dot(v, v))
    conformal = cache.conformality_residual <= 1e-6
    return FrameField(e1, e2, "coordinate" if conformal else "gram-schmidt")


def rotate_frame(frame: FrameField, theta) -> FrameField:
    c, s = np.cos(theta), np.sin(theta)
    return FrameField(c * frame.e1 + s * frame.e2, -s * frame.e1 + c * frame.e2, "rotated")


def connection_form(grid: PeriodicGrid, frame: FrameField) -> tuple[np.ndarray, np.ndarray]:
    """``omega_i = e1 . d_i e2`` in flat coordinates."""
    return dot(frame.e1, grid.partial_x(frame.e2)), dot(frame.e1, grid.partial_y(frame.e2))


def metric_weight(cache: GeometryCache):
    """Components of ``A = sqrt(g) g^{-1}``, the conformally invariant weight."""
    s = cache.sqrt_g
    return s * cache.gi11, s * cache.gi12, s * cache.gi22


def tangential_energy(cache: GeometryCache, frame: FrameField) -> float:
    g = cache.grid
    w1, w2 = connection_form(g, frame)
    a11, a12, a22 = metric_weight(cache)
    return 0.5 * g.integrate(a11 * w1 * w1 + 2 * a12 * w1 * w2 + a22 * w2 * w2)


def _solve_weighted(grid: PeriodicGrid, A, rhs, tol: float = 1e-13, maxiter: int = 500):
    """Zero-mean solution of ``div(A grad u) = rhs`` by preconditioned CG.

    The preconditioner is the flat Laplacian scaled by the mean of ``A``;
    in a conformal chart ``A`` is the identity and one iteration suffices.
    """
    a11, a12, a22 = A
    shape = grid.shape
    abar = (float(a11.mean()) + float(a22.mean())) / 2
    # the operator annihilates constants and Nyquist modes; CG runs on the complement
    k1 = np.abs(np.fft.fftfreq(shape[0], 1.0 / shape[0]))[:, None]
    k2 = np.abs(np.fft.fftfreq(shape[1], 1.0 / shape[1]))[None, :]
    keep = (k1 != shape[0] // 2) & (k2 != shape[1] // 2)
    keep[0, 0] = False

    def band(u):
        return np.fft.ifft2(np.fft.fft2(u) * keep).real

    def op(u):
        u = u.reshape(shape)
        ux, uy = grid.grad(u)
        out = grid.div(a11 * ux + a12 * uy, a12 * ux + a22 * uy)
        return -band(out).ravel()

    def prec(r):
        p = grid.solve_poisson(band(r.reshape(shape))).phi
        return -(band(p) / abar).ravel()

    b = -band(rhs).ravel()
    n = b.size
    L = LinearOperator((n, n), matvec=op, dtype=float)
    M = LinearOperator((n, n), matvec=prec, dtype=float)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0:
        return np.zeros(shape), 0.0
    u, info = cg(L, b, M=M, rtol=tol, atol=0.0, maxiter=maxiter)
    u = u.reshape(shape)
    u -= u.mean()
    res = float(np.linalg.norm(op(u) - b) / bnorm)
    return u, res


def coulomb_angle(cache: GeometryCache, frame: FrameField, tol: float = 1e-13):
    """Rotation angle ``theta*`` minimising ``F_T`` over rotations of ``frame``.

    Solves ``div(A grad theta) = div(A omega)``; returns ``(theta, solver residual)``.
    """
    g = cache.grid
    A = metric_weight(cache)
    w1, w2 = connection_form(g, frame)
    a11, a12, a22 = A
    rhs = g.div(a11 * w1 + a12 * w2, a12 * w1 + a22 * w2)
    return _solve_weighted(g, A, rhs, tol)


def coulomb_defect(cache: GeometryCache, frame: FrameField) -> float:
    """Max-norm of ``div(A omega)``, relative to ``max |A omega|`` when that exceeds one."""
    g = cache.grid
    w1, w2 = connection_form(g, frame)
    a11, a12, a22 = metric_weight(cache)
    v1, v2 = a11 * w1 + a12 * w2, a12 * w1 + a22 * w2
    scale = max(float(np.max(np.abs(v1)) + np.max(np.abs(v2))), 1.0)
    return float(np.max(np.abs(g.div(v1, v2))) / scale)


def coulomb_project(cache: GeometryCache, frame: FrameField, tol: float = 1e-13):
    """Rotate ``frame`` into Coulomb gauge; returns ``(frame, residual)``."""
    theta, _ = coulomb_angle(cache, frame, tol)
    out = rotate_frame(frame, theta)
    return FrameField(out.e1, out.e2, "coulomb"), coulomb_defect(cache, out)


def willmore_energy(cache: GeometryCache) -> tuple[float, float, float]:
    """``(W, 1/4 int |II|^2 dvol, gap)``."""
    g = cache.grid
    W = g.integrate(dot(cache.H, cache.H) * cache.sqrt_g)
    Q = 0.25 * g.integrate(cache.II2 * cache.sqrt_g)
    return W, Q, Q - W


def dirichlet_energy(cache: GeometryCache, frame: FrameField) -> float:
    """``1/4 int |de|^2_g dvol_g`` evaluated directly from the frame."""
    g = cache.grid
    a11, a12, a22 = metric_weight(cache)
    total = np.zeros(g.shape)
    for e in (frame.e1, frame.e2):
        ex, ey = g.partial_x(e), g.partial_y(e)
        total += a11 * dot(ex, ex) + 2 * a12 * dot(ex, ey) + a22 * dot(ey, ey)
    return 0.25 * g.integrate(total)


def frame_energy(cache: GeometryCache, frame: FrameField) -> EnergyBreakdown:
    F = dirichlet_energy(cache, frame)
    FT = tangential_energy(cache, frame)
    W, Q, _ = willmore_energy(cache)
    return EnergyBreakdown(F=F, F_T=FT, W=W, quarter_II2=Q, gap=F - (FT + Q))
