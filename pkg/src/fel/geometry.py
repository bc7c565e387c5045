"""
Pointwise differential geometry of a sampled immersion
=====================================================

Everything is computed in the flat coordinates ``(x1, x2)`` of the lattice,
with the full pullback metric, so non-conformal charts are handled too.
Quantities that only make sense in a conformal chart (Weingarten form,
Codazzi residual) check the conformality residual first.

Conventions
-----------
``II_ij = pi_n(d_i d_j Phi)`` is ambient-valued, ``H = g^ij II_ij / 2`` is
the mean curvature vector, ``K`` the Gauss curvature and, for ``m = 3``,
``n = d_1 Phi x d_2 Phi / |.|`` with scalar forms ``h_ij = II_ij . n`` and
``H_scalar = H . n``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .zoo import ImmersionField

CONFORMAL_TOL = 1e-6


class GaugeError(ValueError):
    """Raised when a conformal-gauge operation gets a non-conformal chart."""


def cross(a, b):
    """Cross product along the leading (ambient) axis."""
    return np.stack([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def dot(a, b):
    return np.sum(a * b, axis=0)


@dataclass(frozen=True, eq=False)
class GeometryCache:
    imm: ImmersionField
    P1: np.ndarray
    P2: np.ndarray
    P11: np.ndarray
    P12: np.ndarray
    P22: np.ndarray
    g11: np.ndarray
    g12: np.ndarray
    g22: np.ndarray
    det: np.ndarray
    gi11: np.ndarray
    gi12: np.ndarray
    gi22: np.ndarray
    sqrt_g: np.ndarray
    lam: np.ndarray
    lam_bar: float
    normal: np.ndarray | None
    proj: np.ndarray | None
    II11: np.ndarray
    II12: np.ndarray
    II22: np.ndarray
    H: np.ndarray
    K: np.ndarray
    II2: np.ndarray
    conformality_residual: float

    @property
    def grid(self):
        return self.imm.grid

    @property
    def m(self) -> int:
        return self.imm.ambient_dim

    # scalar forms (m = 3)
    @property
    def h11(self):
        return dot(self.II11, self.normal)

    @property
    def h12(self):
        return dot(self.II12, self.normal)

    @property
    def h22(self):
        return dot(self.II22, self.normal)

    @property
    def H_scalar(self):
        return dot(self.H, self.normal)

    def normal_part(self, v: np.ndarray) -> np.ndarray:
        """Project an ambient vector field onto the normal space."""
        if self.normal is not None:
            return dot(v, self.normal) * self.normal
        return np.einsum("abij,bij->aij", self.proj, v)

    def require_conformal(self, tol: float = CONFORMAL_TOL) -> None:
        if self.conformality_residual > tol:
            raise GaugeError(
                f"conformal gauge required: residual {self.conformality_residual:.3e} > {tol:.1e}")

    def report(self) -> dict:
        g = self.grid
        return {
            "lam_bar": self.lam_bar,
            "conformality_residual": self.conformality_residual,
            "area": float(g.integrate(self.sqrt_g)),
            "int_K_dvol": float(g.integrate(self.K * self.sqrt_g)),
            "min_det_g": float(self.det.min()),
        }


def build_geometry(imm: ImmersionField) -> GeometryCache:
    g = imm.grid
    x = imm.samples
    P1 = g.partial_x(x)
    P2 = g.partial_y(x)
    P11 = g.partial_x(P1)
    P12 = 0.5 * (g.partial_y(P1) + g.partial_x(P2))
    P22 = g.partial_y(P2)
    g11, g12, g22 = dot(P1, P1), dot(P1, P2), dot(P2, P2)
    det = g11 * g22 - g12 * g12
    if not (np.all(g11 > 0) and np.all(g22 > 0) and np.all(det > 0)):
        raise ValueError("metric degenerates somewhere on the grid")
    gi11, gi12, gi22 = g22 / det, -g12 / det, g11 / det
    m = imm.ambient_dim
    if m == 3:
        c = cross(P1, P2)
        normal = c / np.sqrt(dot(c, c))
        proj = None

        def pn(v):
            return dot(v, normal) * normal
    else:
        normal = None
        # pi_n = I - P g^-1 P^T
        Pt = np.stack([P1, P2])  # (2, m, n1, n2)
        ginv = np.array([[gi11, gi12], [gi12, gi22]])
        proj = np.eye(m)[:, :, None, None] - np.einsum("iaxy,ijxy,jbxy->abxy", Pt, ginv, Pt)

        def pn(v):
            return np.einsum("abij,bij->aij", proj, v)

    II11, II12, II22 = pn(P11), pn(P12), pn(P22)
    H = 0.5 * (gi11 * II11 + 2 * gi12 * II12 + gi22 * II22)
    K = (dot(II11, II22) - dot(II12, II12)) / det
    gi = ((gi11, gi12), (gi12, gi22))
    IIm = ((II11, II12), (II12, II22))
    II2 = np.zeros_like(det)
    for i in range(2):
        for j in range(2):
            for k in range(2):
                for l in range(2):
                    II2 += gi[i][k] * gi[j][l] * dot(IIm[i][j], IIm[k][l])
    lam = 0.5 * np.log(g11)
    scale = np.max(np.abs(g11))
    conf = float(np.max(np.abs(g11 - g22)) / scale + np.max(np.abs(g12)) / scale)
    return GeometryCache(
        imm=imm, P1=P1, P2=P2, P11=P11, P12=P12, P22=P22,
        g11=g11, g12=g12, g22=g22, det=det, gi11=gi11, gi12=gi12, gi22=gi22,
        sqrt_g=np.sqrt(det), lam=lam, lam_bar=float(g.mean(lam)),
        normal=normal, proj=proj, II11=II11, II12=II12, II22=II22,
        H=H, K=K, II2=II2, conformality_residual=conf,
    )


def trace_free(cache: GeometryCache):
    """``II0 = II - H g`` as three ambient vector fields."""
    c = cache
    return c.II11 - c.H * c.g11, c.II12 - c.H * c.g12, c.II22 - c.H * c.g22


def weingarten(cache: GeometryCache, tol: float = CONFORMAL_TOL):
    """Weingarten form ``(H0_re, H0_im) = e^{-2 lam} (II0_11, -II0_12)``.

    Scalar fields for ``m = 3`` (components along ``n``), ambient vector
    fields for ``m = 4``.
    """
    cache.require_conformal(tol)
    t11, t12, _ = trace_free(cache)
    w = np.exp(-2 * cache.lam)
    re, im = w * t11, -w * t12
    if cache.m == 3:
        return dot(re, cache.normal), dot(im, cache.normal)
    return re, im


def codazzi_fields(cache: GeometryCache, tol: float = CONFORMAL_TOL):
    """Pointwise Codazzi residual fields in a conformal chart.

    For ``m = 3`` the two scalar equations
    ``d1 h0_11 + d2 h0_12 = e^{2 lam} d1 H`` and
    ``d2 h0_11 - d1 h0_12 = -e^{2 lam} d2 H``; for ``m = 4`` the real and
    imaginary parts of the vector identity
    ``dzbar H0 + 4 dz(e^{-2 lam} lam_zbar Phi_z) - dz H = 0``.
    """
    cache.require_conformal(tol)
    g = cache.grid
    e2l = np.exp(2 * cache.lam)
    t11, t12, _ = trace_free(cache)
    if cache.m == 3:
        n = cache.normal
        a, b = dot(t11, n), dot(t12, n)
        Hs = cache.H_scalar
        r1 = g.partial_x(a) + g.partial_y(b) - e2l * g.partial_x(Hs)
        r2 = g.partial_y(a) - g.partial_x(b) + e2l * g.partial_y(Hs)
        return r1, r2
    # complex calculus with d_z = (d1 - i d2)/2
    w = np.exp(-2 * cache.lam)
    h0 = w * t11 - 1j * (w * t12)
    lz = 0.5 * (g.partial_x(cache.lam) - 1j * g.partial_y(cache.lam))
    pz = 0.5 * (cache.P1 - 1j * cache.P2)
    q = w * np.conj(lz) * pz

    def dz(f):
        return 0.5 * (_cderiv(g.partial_x, f) - 1j * _cderiv(g.partial_y, f))

    def dzbar(f):
        return 0.5 * (_cderiv(g.partial_x, f) + 1j * _cderiv(g.partial_y, f))

    res = dzbar(h0) + 4 * dz(q) - dz(cache.H.astype(complex))
    return res.real, res.imag


def _cderiv(op, f):
    return op(f.real) + 1j * op(f.imag)


def codazzi_residual(cache: GeometryCache, tol: float = CONFORMAL_TOL) -> float:
    """Max-norm of the Codazzi residual, relative to the size of ``e^{2 lam} dH``."""
    r1, r2 = codazzi_fields(cache, tol)
    return float(max(np.max(np.abs(r1)), np.max(np.abs(r2))))
