"""
Lower bounds for the frame energy
=================================

Fenchel integrals along the closed lattice curves of a torus immersion, the
curve-based lower bound on a weighted second-fundamental-form integral, the
moduli function ``f`` and the disk-shaped region ``Omega`` of the moduli
strip on which the Willmore bound ``W >= 2 pi^2`` is classical.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .frames import FrameField, connection_form, coordinate_frame, frame_energy, coulomb_project
from .gauge import GaugeRestorationError, reduce_lattice, restore_conformal_gauge
from .geometry import CONFORMAL_TOL, GeometryCache, build_geometry, dot
from .grid import ModuliPoint
from .zoo import ImmersionField

TWO_PI2 = 2 * math.pi**2


# --- curves ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LatticeCurve:
    """Closed curve ``Phi o gamma`` sampled uniformly in its parameter.

    ``direction`` is ``"s"`` (parallel to ``(1, 0)``), ``"t"`` (parallel to
    ``tau``) or a homology class ``(p, q)``; ``offset`` is the lattice
    coordinate of the starting point across the curve family.
    """

    samples: np.ndarray
    direction: object
    offset: float
    index: tuple[int, int] = (0, 0)

    def __post_init__(self):
        if self.samples.ndim != 2 or self.samples.shape[1] < 8:
            raise ValueError("curve samples must have shape (m, N) with N >= 8")

    @property
    def n(self) -> int:
        return self.samples.shape[1]

    def derivatives(self):
        """First and second derivatives in the unit-period parameter."""
        n = self.n
        k = np.fft.fftfreq(n, 1.0 / n)
        k1 = np.where(np.abs(k) == n // 2, 0.0, k)
        c = np.fft.fft(self.samples, axis=1)
        d1 = np.fft.ifft(c * (2j * np.pi * k1), axis=1).real
        d2 = np.fft.ifft(c * (-(2 * np.pi * k) ** 2), axis=1).real
        return d1, d2

    def speed(self):
        d1, _ = self.derivatives()
        return np.sqrt(np.sum(d1 * d1, axis=0))


def lattice_curve(imm: ImmersionField, direction, offset_index: int = 0) -> LatticeCurve:
    """Extract a closed lattice curve from the sample array.

    ``"s"`` takes row ``t = j/n2``, ``"t"`` takes column ``s = i/n1`` and a
    class ``(1, q)`` on a square grid follows ``(i, j0 + q i)``.
    """
    x = imm.samples
    n1, n2 = imm.grid.shape
    if direction == "s":
        j = offset_index % n2
        return LatticeCurve(x[:, :, j], "s", j / n2, (0, j))
    if direction == "t":
        i = offset_index % n1
        return LatticeCurve(x[:, i, :], "t", i / n1, (i, 0))
    p, q = direction
    if p != 1 or n1 != n2:
        raise ValueError("diagonal curves need class (1, q) on a square grid")
    i = np.arange(n1)
    j = (offset_index + q * i) % n2
    return LatticeCurve(x[:, i, j], (1, q), offset_index / n2, (0, offset_index))


def total_curvature(curve: LatticeCurve, min_speed: float = 1e-12) -> float:
    """Fenchel integral ``int k ds`` of a closed curve."""
    d1, d2 = curve.derivatives()
    a = np.sum(d1 * d1, axis=0)
    if np.min(np.sqrt(a)) <= min_speed * np.max(np.sqrt(a)):
        raise ValueError("curve speed vanishes; not an immersed curve")
    b = np.sum(d2 * d2, axis=0)
    c = np.sum(d1 * d2, axis=0)
    # k |gamma'| = sqrt(|g'|^2 |g''|^2 - (g'.g'')^2) / |g'|^2
    integrand = np.sqrt(np.maximum(a * b - c * c, 0.0)) / a
    return float(np.mean(integrand))


fenchel_integral = total_curvature


def fenchel_scan(imm: ImmersionField, stride: int = 1) -> dict:
    """Fenchel integrals over both lattice curve families."""
    n1, n2 = imm.grid.shape
    vals_s = [total_curvature(lattice_curve(imm, "s", j)) for j in range(0, n2, stride)]
    vals_t = [total_curvature(lattice_curve(imm, "t", i)) for i in range(0, n1, stride)]
    allv = vals_s + vals_t
    return {"min": float(min(allv)), "min_s": float(min(vals_s)), "min_t": float(min(vals_t)),
            "count": len(allv)}


# --- moduli function and region ---------------------------------------------

def f_moduli(tau2: float, theta: float) -> float:
    """``(tau2 + 1/tau2) sin^2 / (sin^2 + cos^4)``."""
    if not tau2 > 0:
        raise ValueError("tau2 must be positive")
    if not (math.pi / 3 - 1e-12 <= theta <= 2 * math.pi / 3 + 1e-12):
        raise ValueError(f"theta={theta} outside [pi/3, 2pi/3]")
    s2 = math.sin(theta) ** 2
    c4 = math.cos(theta) ** 4
    return (tau2 + 1.0 / tau2) * s2 / (s2 + c4)


def f_moduli_array(tau2, theta):
    tau2 = np.asarray(tau2, dtype=float)
    theta = np.asarray(theta, dtype=float)
    s2 = np.sin(theta) ** 2
    return (tau2 + 1.0 / tau2) * s2 / (s2 + np.cos(theta) ** 4)


def in_omega_lymr(tau1: float, tau2: float) -> tuple[bool, float]:
    """Membership in ``Omega`` after mirroring ``tau1 -> |tau1|``.

    Returns the flag and the signed distance to the boundary circle
    (positive inside).
    """
    t1 = abs(tau1)
    d = 0.5 - math.hypot(t1 - 0.5, tau2 - 1.0)
    return bool(d >= -1e-15), float(d)


def in_omega_array(tau1, tau2, tie: float = 1e-15):
    t1 = np.abs(np.asarray(tau1, dtype=float))
    return np.hypot(t1 - 0.5, np.asarray(tau2, dtype=float) - 1.0) <= 0.5 + tie


def in_strip_array(tau1, tau2, tie: float = 1e-15):
    t1 = np.abs(np.asarray(tau1, dtype=float))
    tau2 = np.asarray(tau2, dtype=float)
    return (t1 <= 0.5 + tie) & (t1 * t1 + tau2 * tau2 >= 1.0 - tie)


# --- the weighted bound ------------------------------------------------------

def curve_angle(tau1: float, tau2: float) -> float:
    """Angle between the lattice generators ``(1, 0)`` and ``tau``."""
    return math.acos(tau1 / math.hypot(tau1, tau2))


def lb0_terms(cache: GeometryCache, frame: FrameField | None = None) -> dict:
    """Integrals entering the weighted bound, for a conformal chart.

    Returns the five integrals ``int e^{-4 lam} |II_ij|^2 dvol`` and
    ``int (d_{e_i} e_i . e_j)^2 dvol`` with which the bound is assembled
    for any angle.
    """
    cache.require_conformal()
    g = cache.grid
    frame = frame or coordinate_frame(cache)
    w1, w2 = connection_form(g, frame)
    em2 = np.exp(-2 * cache.lam)  # e^{-4 lam} dvol = e^{-2 lam} dx
    return {
        "II11": g.integrate(em2 * dot(cache.II11, cache.II11)),
        "II22": g.integrate(em2 * dot(cache.II22, cache.II22)),
        "II12": g.integrate(em2 * dot(cache.II12, cache.II12)),
        # (d_{e1} e1 . e2)^2 dvol = omega_1^2 dx, (d_{e2} e2 . e1)^2 dvol = omega_2^2 dx
        "t1": g.integrate(w1 * w1),
        "t2": g.integrate(w2 * w2),
    }


def lb0_weights(theta: float) -> tuple[float, float, float, float, float]:
    s, c = math.sin(theta), math.cos(theta)
    return (1 + c**4 / s**2, s**2, 4 * c**2, 1 + (c / s) ** 2, 1.0)


def lb0_lhs_from_terms(terms: dict, theta: float) -> float:
    w = lb0_weights(theta)
    keys = ("II11", "II22", "II12", "t1", "t2")
    return float(sum(wi * terms[k] for wi, k in zip(w, keys)))


def bound_lhs_lb0(cache: GeometryCache, frame: FrameField | None = None,
                  theta: float | None = None) -> float:
    """Left side of the weighted bound; ``theta`` defaults to ``arccos tau1``."""
    if theta is None:
        theta = ModuliPoint(*cache.grid.tau).theta
    return lb0_lhs_from_terms(lb0_terms(cache, frame), theta)


def bound_rhs_lb0(tau2: float) -> float:
    return 4 * math.pi**2 * (tau2 + 1.0 / tau2)


def cauchy_schwarz_chain(cache: GeometryCache, frame: FrameField | None = None) -> dict:
    """The two averaged Fenchel inequalities behind the weighted bound.

    ``int |d_{e1} e1|^2 dvol >= 4 pi^2 tau2`` and, with ``e^th`` the unit
    direction of ``tau``, ``int |d_{e^th} e^th|^2 dvol / sin^2 th >= 4 pi^2 / tau2``.
    Both are evaluated directly from the frame derivatives.
    """
    cache.require_conformal()
    g = cache.grid
    frame = frame or coordinate_frame(cache)
    t1, t2 = g.tau
    th = curve_angle(t1, t2)
    lam = cache.lam
    e1, e2 = frame.e1, frame.e2
    d1e1 = g.partial_x(e1) * np.exp(-lam)
    u = math.cos(th) * e1 + math.sin(th) * e2
    du = (math.cos(th) * g.partial_x(u) + math.sin(th) * g.partial_y(u)) * np.exp(-lam)
    dvol = cache.sqrt_g
    lhs0 = g.integrate(dot(d1e1, d1e1) * dvol)
    lhs1 = g.integrate(dot(du, du) * dvol) / math.sin(th) ** 2
    return {"lb00_lhs": lhs0, "lb00_rhs": 4 * math.pi**2 * t2,
            "lb01_lhs": lhs1, "lb01_rhs": 4 * math.pi**2 / t2, "curve_angle": th}


# --- verdict -----------------------------------------------------------------

@dataclass
class BoundReport:
    tau: tuple[float, float]
    theta: float
    F: float
    F_T: float
    W: float
    lhs_LB0: float
    rhs_LB0: float
    lhs_LB0_curve_angle: float
    f_value: float
    f_pi2: float
    in_omega: bool
    omega_distance: float
    branch: str
    fenchel_min: float
    verdict: bool
    gauge_residual: float
    extras: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)


def verify_theorem_lb(imm: ImmersionField, rel_tol: float = 1e-6,
                      allowance: float = 0.0, fenchel_stride: int = 1) -> BoundReport:
    """Full lower-bound report for one immersion.

    The chart is restored to conformal gauge and the lattice reduced to the
    moduli strip first; ``F`` is the energy of the Coulomb frame, which in a
    conformal chart is the coordinate frame.
    """
    conf, info = restore_conformal_gauge(imm)
    if not info.residual_after <= CONFORMAL_TOL:
        raise GaugeRestorationError(
            f"chart restored only to residual {info.residual_after:.3g} > {CONFORMAL_TOL:g}; refine the grid")
    conf = reduce_lattice(conf)
    cache = build_geometry(conf)
    frame, _ = coulomb_project(cache, coordinate_frame(cache))
    e = frame_energy(cache, frame)
    t1, t2 = conf.grid.tau
    mp = ModuliPoint(t1, t2)
    theta = mp.theta
    theta_m = math.acos(abs(t1))  # mirrored into M+
    terms = lb0_terms(cache, coordinate_frame(cache))
    lhs = lb0_lhs_from_terms(terms, theta)
    lhs_c = lb0_lhs_from_terms(terms, curve_angle(t1, t2))
    fval = f_moduli(t2, theta_m)
    inside, dist = in_omega_lymr(t1, t2)
    branch = "inside Omega: Willmore bound" if inside else "outside Omega: f >= 2"
    fen = fenchel_scan(conf, fenchel_stride)["min"]
    verdict = e.F >= TWO_PI2 * (1 - rel_tol) - allowance
    return BoundReport(
        tau=(t1, t2), theta=theta, F=e.F, F_T=e.F_T, W=e.W,
        lhs_LB0=lhs, rhs_LB0=bound_rhs_lb0(t2), lhs_LB0_curve_angle=lhs_c,
        f_value=fval, f_pi2=fval * math.pi**2, in_omega=inside, omega_distance=dist,
        branch=branch, fenchel_min=fen, verdict=bool(verdict),
        gauge_residual=cache.conformality_residual,
    )
