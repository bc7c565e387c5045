"""
Conservation laws for conformal immersions into R^3
===================================================

Given a conformal chart with coordinate frame ``e_i = e^{-lam} d_i Phi`` and
``e1 x e2 = n``:

* ``D`` with ``d1 D = e^{-2 lam}(P2 x II11 - P1 x II12)`` and
  ``d2 D = e^{-2 lam}(P2 x II12 - P1 x II22)``; integrable for every conformal
  immersion (``identity_residual``);
* ``L`` with ``grad^perp L = V``, where ``div V`` is minus the Euler-Lagrange
  density of the frame energy;
* ``S`` and ``R`` with ``grad S = <L, grad Phi>`` and
  ``grad R = L x grad Phi + (lam - lam_bar) grad D + H grad Phi``.

On a torus ``V`` and ``grad D`` may have non-zero means (harmonic defects), so
``L`` and ``D`` are a periodic part plus a linear part. Every quantity
containing an undifferentiated ``L`` is differentiated with the product rule,
and ``S``, ``R`` are represented through their gradients; periodic potentials
are recovered by Poisson solves of the mean-free parts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .frames import coordinate_frame
from .geometry import CONFORMAL_TOL, GeometryCache, cross, dot
from .variation import ft_flux, willmore_flux

CRITICAL_THRESHOLD = 0.1


class NotCriticalError(RuntimeError):
    """Raised when potentials are requested away from a critical point."""

    def __init__(self, message: str, diagnostic: dict):
        super().__init__(message)
        self.diagnostic = diagnostic


def _norm(grid, *fields) -> float:
    """``L^2(dx)`` norm of a collection of scalar or vector fields."""
    total = np.zeros(grid.shape)
    for f in fields:
        total = total + (np.sum(f * f, axis=0) if f.ndim == 3 else f * f)
    return float(math.sqrt(grid.integrate(total)))


def _maxnorm(*fields) -> float:
    return float(max(np.max(np.abs(f)) for f in fields))


def _require(cache: GeometryCache, tol: float = CONFORMAL_TOL):
    if cache.m != 3:
        raise ValueError("conservation laws are implemented for immersions into R^3")
    cache.require_conformal(tol)


def _cross_grad(a, b):
    """``sum_i a_i x b_i`` for pairs of vector fields."""
    return cross(a[0], b[0]) + cross(a[1], b[1])


def _perp(v):
    return (-v[1], v[0])


# --- D and the universal identity --------------------------------------------

@dataclass
class DField:
    grad: tuple  # (d1 D, d2 D)
    D: np.ndarray  # periodic part, zero mean
    slope: tuple  # means of d1 D, d2 D (harmonic defect)
    compatibility: float


def build_D(cache: GeometryCache, tol: float = CONFORMAL_TOL) -> DField:
    _require(cache, tol)
    g = cache.grid
    em2 = np.exp(-2 * cache.lam)
    P1, P2 = cache.P1, cache.P2
    d1 = em2 * (cross(P2, cache.II11) - cross(P1, cache.II12))
    d2 = em2 * (cross(P2, cache.II12) - cross(P1, cache.II22))
    compat = _maxnorm(g.partial_y(d1) - g.partial_x(d2))
    m1, m2 = g.mean(d1), g.mean(d2)
    rhs = g.div(d1, d2)
    D = np.stack([g.solve_poisson(rhs[a]).phi for a in range(3)])
    return DField((d1, d2), D, (m1, m2), compat)


def grad_D_normal_form(cache: GeometryCache):
    """``-(II _|_g grad^perp Phi) x n``, the same field written with the normal."""
    em2 = np.exp(-2 * cache.lam)
    n = cache.normal
    P1, P2 = cache.P1, cache.P2
    out = []
    for IIa, IIb in ((cache.II11, cache.II12), (cache.II12, cache.II22)):
        v = em2 * (dot(IIa, n) * (-P2) + dot(IIb, n) * P1)
        out.append(-cross(v, n))
    return tuple(out)


def identity_fields(cache: GeometryCache):
    """Left side of the universal identity, realised with cross products."""
    g = cache.grid
    em2 = np.exp(-2 * cache.lam)
    P1, P2 = cache.P1, cache.P2
    a = em2 * (cross(P1, cache.II22) - cross(P2, cache.II12))
    b = em2 * (cross(P2, cache.II11) - cross(P1, cache.II12))
    return em2 * (g.partial_x(a) + g.partial_y(b))


def identity_residual(cache: GeometryCache, check_gauge: bool = True) -> float:
    """Max-norm of the universal identity for conformal immersions.

    With ``check_gauge=False`` the expression is evaluated in any chart,
    which is how the negative control is produced.
    """
    if cache.m != 3:
        raise ValueError("the identity is implemented for immersions into R^3")
    if check_gauge:
        cache.require_conformal()
    return _maxnorm(identity_fields(cache))


# --- L ------------------------------------------------------------------------

def flux_V(cache: GeometryCache):
    """``V = 1/2 (grad H_vec - 3 grad H n + grad^perp n x H_vec) - X_T``."""
    Y, X = willmore_flux(cache), ft_flux(cache)
    return (-(Y[0] + X[0]), -(Y[1] + X[1]))


@dataclass
class LField:
    periodic: np.ndarray
    slope: tuple  # constant parts of (d1 L, d2 L)
    grad: tuple  # (d1 L, d2 L) including the slope
    V: tuple
    residual: float  # ||grad^perp L - V|| over ||V||, mean-free parts
    harmonic_defect: float  # |mean V| over ||V||
    el_relative: float  # ||div V|| / ||V||

    def values(self, grid) -> np.ndarray:
        """``L`` on the fundamental domain (periodic part plus linear part)."""
        x, y = grid.flat_coords()
        return self.periodic + self.slope[0][:, None, None] * x + self.slope[1][:, None, None] * y


def relative_el(cache: GeometryCache) -> float:
    g = cache.grid
    V = flux_V(cache)
    return _norm(g, g.div(V[0], V[1])) / _norm(g, *V)


def build_L(cache: GeometryCache, threshold: float = CRITICAL_THRESHOLD, force: bool = False) -> LField:
    """Solve ``grad^perp L = V`` in the least-squares sense.

    Refuses (``NotCriticalError``) when ``||div V|| / ||V||`` exceeds
    ``threshold``, since ``L`` then exists only approximately.
    """
    _require(cache)
    g = cache.grid
    V = flux_V(cache)
    vn = _norm(g, *V)
    el = _norm(g, g.div(V[0], V[1])) / vn
    if el > threshold and not force:
        raise NotCriticalError(
            f"not an approximate critical point: relative EL residual {el:.3e} > {threshold:.1e}",
            {"el_relative": el, "threshold": threshold})
    mV = (g.mean(V[0]), g.mean(V[1]))
    curl = g.partial_x(V[1]) - g.partial_y(V[0])
    Lp = np.stack([g.solve_poisson(curl[a]).phi for a in range(3)])
    # grad^perp(linear) = mean V  =>  d1 L = mean V2, d2 L = -mean V1
    slope = (mV[1], -mV[0])
    gx, gy = g.grad(Lp)
    d1L = gx + slope[0][:, None, None]
    d2L = gy + slope[1][:, None, None]
    res = _norm(g, -d2L - V[0], d1L - V[1]) / vn
    defect = float(math.sqrt(np.sum(mV[0] ** 2) + np.sum(mV[1] ** 2)) * math.sqrt(g.area)) / vn
    return LField(Lp, slope, (d1L, d2L), V, res, defect, el)


# --- S, R and the systems ---------------------------------------------------

@dataclass
class Potentials:
    gradS: tuple
    gradR: tuple
    S: np.ndarray
    R: np.ndarray
    curl_S: float
    curl_R: float
    residuals: dict = field(default_factory=dict)


def _gradients(cache, L: LField, Dd: DField, Lval):
    lam = cache.lam - cache.lam_bar
    P = (cache.P1, cache.P2)
    H = cache.H_scalar
    gS = tuple(dot(Lval, P[i]) for i in range(2))
    gR = tuple(cross(Lval, P[i]) + lam * Dd.grad[i] + H * P[i] for i in range(2))
    return gS, gR


def build_potentials(cache: GeometryCache, L: LField, Dd: DField | None = None) -> Potentials:
    _require(cache)
    g = cache.grid
    Dd = Dd or build_D(cache)
    Lval = L.values(g)
    P1, P2 = cache.P1, cache.P2
    gS, gR = _gradients(cache, L, Dd, Lval)
    # curls via the product rule (d1 P2 = d2 P1)
    curlS = dot(L.grad[0], P2) - dot(L.grad[1], P1)
    lx, ly = g.grad(cache.lam)
    hx, hy = g.grad(cache.H_scalar)
    curlR = (cross(L.grad[0], P2) - cross(L.grad[1], P1)
             + lx * Dd.grad[1] - ly * Dd.grad[0] + hx * P2 - hy * P1)
    scaleS = _norm(g, *gS)
    scaleR = _norm(g, *gR)
    # periodic potentials from the mean-free divergence
    divS = _div_S(cache, L, Lval)
    divR = _div_R(cache, L, Dd, Lval)
    S = g.solve_poisson(divS).phi
    R = np.stack([g.solve_poisson(divR[a]).phi for a in range(3)])
    return Potentials(gS, gR, S, R, _norm(g, curlS) / scaleS, _norm(g, curlR) / scaleR)


def _lap_phi(cache):
    g = cache.grid
    return g.partial_x(cache.P1) + g.partial_y(cache.P2)


def _div_S(cache, L: LField, Lval):
    """``div <L, grad Phi>`` by the product rule."""
    return dot(L.grad[0], cache.P1) + dot(L.grad[1], cache.P2) + dot(Lval, _lap_phi(cache))


def _div_R(cache, L: LField, Dd: DField, Lval):
    g = cache.grid
    lam = cache.lam - cache.lam_bar
    H = cache.H_scalar
    P = (cache.P1, cache.P2)
    out = cross(L.grad[0], P[0]) + cross(L.grad[1], P[1]) + cross(Lval, _lap_phi(cache))
    out = out + g.div(lam * Dd.grad[0], lam * Dd.grad[1])
    out = out + g.div(H * P[0], H * P[1])
    return out


def system_residual(cache: GeometryCache, L: LField, Dd: DField | None = None,
                    pots: Potentials | None = None) -> dict:
    """Residuals of the gradient system and of the five elliptic equations.

    Each entry is the max-norm of ``lhs - rhs`` relative to the larger max-norm
    of the two sides; ``identity1`` (absolute) and ``curlL`` complete the bundle.
    """
    _require(cache)
    g = cache.grid
    Dd = Dd or build_D(cache)
    pots = pots or build_potentials(cache, L, Dd)
    Lval = L.values(g)
    frame = coordinate_frame(cache)
    e1, e2, n = frame.e1, frame.e2, cache.normal
    lam = cache.lam - cache.lam_bar
    gS, gR = pots.gradS, pots.gradR
    pR, pS, pD = _perp(gR), _perp(gS), _perp(Dd.grad)
    gn = (g.partial_x(n), g.partial_y(n))

    def rel(lhs, rhs):
        lhs = lhs if isinstance(lhs, tuple) else (lhs,)
        rhs = rhs if isinstance(rhs, tuple) else (rhs,)
        diff = tuple(a - b for a, b in zip(lhs, rhs))
        return _maxnorm(*diff) / max(_maxnorm(*lhs), _maxnorm(*rhs), 1e-300)

    out = {}
    out["identity1"] = identity_residual(cache)
    out["curlL"] = L.residual
    rhs_gS = tuple(-dot(pR[i], n) + lam * dot(pD[i], n) for i in range(2))
    out["gradS_eq"] = rel(gS, rhs_gS)
    twist = tuple(lam * (dot(pD[i], e2) * e1 - dot(pD[i], e1) * e2) for i in range(2))
    rhs_gR = tuple(cross(n, pR[i]) + pS[i] * n + lam * Dd.grad[i] + twist[i] for i in range(2))
    out["gradR_eq"] = rel(gR, rhs_gR)
    lapS = _div_S(cache, L, Lval)
    aux = tuple(lam * dot(pD[i], n) for i in range(2))
    rhs_S = -(dot(pR[0], gn[0]) + dot(pR[1], gn[1])) + g.div(aux[0], aux[1])
    out["deltaS_eq"] = rel(lapS, rhs_S)
    lapR = _div_R(cache, L, Dd, Lval)
    inner = tuple(lam * Dd.grad[i] + twist[i] for i in range(2))
    rhs_R = (cross(gn[0], pR[0]) + cross(gn[1], pR[1])
             + pS[0] * gn[0] + pS[1] * gn[1] + g.div(inner[0], inner[1]))
    out["deltaR_eq"] = rel(lapR, rhs_R)
    nf = grad_D_normal_form(cache)
    out["deltaD_eq"] = rel(g.laplacian(Dd.D), g.div(nf[0], nf[1]))
    pPhi = _perp((cache.P1, cache.P2))
    lhs_phi = (1 + lam) * _lap_phi(cache)
    rhs_phi = -_cross_grad(gR, pPhi) - (gS[0] * pPhi[0] + gS[1] * pPhi[1])
    out["deltaPhi_eq"] = rel(lhs_phi, rhs_phi)
    out["deltaLambda_eq"] = rel(g.laplacian(cache.lam), -(dot(-g.partial_y(e1), g.partial_x(e2))
                                                          + dot(g.partial_x(e1), g.partial_y(e2))))
    return out


def delta_lambda_residual(cache: GeometryCache, tol: float = CONFORMAL_TOL) -> float:
    """Max-norm of ``lap lam + <grad^perp e1, grad e2>``; holds on every conformal immersion."""
    cache.require_conformal(tol)
    g = cache.grid
    frame = coordinate_frame(cache)
    e1, e2 = frame.e1, frame.e2
    r = g.laplacian(cache.lam) - dot(g.partial_y(e1), g.partial_x(e2)) + dot(g.partial_x(e1), g.partial_y(e2))
    return _maxnorm(r)


@dataclass
class ConservationState:
    D: DField
    L: LField
    potentials: Potentials
    lam_bar: float
    residuals: dict

    def to_json(self) -> dict:
        out = {k: float(v) for k, v in self.residuals.items()}
        out.update({"curl_S": self.potentials.curl_S, "curl_R": self.potentials.curl_R,
                    "compatibility_D": self.D.compatibility, "harmonic_defect_L": self.L.harmonic_defect,
                    "el_relative": self.L.el_relative, "lam_bar": self.lam_bar})
        return out


def conservation_report(cache: GeometryCache, threshold: float = CRITICAL_THRESHOLD) -> ConservationState:
    Dd = build_D(cache)
    L = build_L(cache, threshold)
    pots = build_potentials(cache, L, Dd)
    res = system_residual(cache, L, Dd, pots)
    return ConservationState(Dd, L, pots, cache.lam_bar, res)
