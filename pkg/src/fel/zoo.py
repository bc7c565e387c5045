"""
Test immersions of the torus
============================

Closed-form and random immersions ``Phi: T^2 -> R^m`` sampled on a
:class:`~fel.grid.PeriodicGrid`. Samples are stored with the ambient axis
first, shape ``(m, n1, n2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import PeriodicGrid, field_from_json, field_to_json

DEFAULT_FLOOR = 1e-3


class ImmersionError(ValueError):
    """Raised when a sampled map fails the immersion floor."""


@dataclass(frozen=True, eq=False)
class ImmersionField:
    samples: np.ndarray
    grid: PeriodicGrid
    label: str = ""

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        if x.ndim != 3 or x.shape[0] not in (3, 4) or x.shape[1:] != self.grid.shape:
            raise ValueError(f"samples must have shape (m, n1, n2) with m in (3, 4), got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("immersion samples must be finite")
        object.__setattr__(self, "samples", x)

    @property
    def ambient_dim(self) -> int:
        return self.samples.shape[0]

    def with_samples(self, samples, label=None, grid=None) -> "ImmersionField":
        return ImmersionField(np.asarray(samples), grid or self.grid,
                              self.label if label is None else label)

    def to_json(self) -> dict:
        return field_to_json(self.samples, self.grid, label=self.label)

    @classmethod
    def from_json(cls, doc: dict) -> "ImmersionField":
        values, grid = field_from_json(doc)
        return cls(values, grid, doc.get("label", ""))


def singular_values(imm: ImmersionField) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise singular values of ``dPhi`` in flat coordinates."""
    g = imm.grid
    p1 = g.partial_x(imm.samples)
    p2 = g.partial_y(imm.samples)
    a = np.sum(p1 * p1, axis=0)
    b = np.sum(p1 * p2, axis=0)
    c = np.sum(p2 * p2, axis=0)
    tr = 0.5 * (a + c)
    disc = np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b * b, 0.0))
    smax = np.sqrt(tr + disc)
    smin = np.sqrt(np.maximum(tr - disc, 0.0))
    return smin, smax


def immersion_margin(imm: ImmersionField) -> float:
    """Smallest singular value of ``dPhi`` relative to the largest one."""
    smin, smax = singular_values(imm)
    top = smax.max()
    return float(smin.min() / top) if top > 0 else 0.0


def check_immersion(imm: ImmersionField, floor: float = DEFAULT_FLOOR) -> ImmersionField:
    margin = immersion_margin(imm)
    if not margin > floor:
        raise ImmersionError(f"immersion floor violated: margin {margin:.3e} <= {floor:.1e}")
    return imm


# --- closed forms ------------------------------------------------------------

def clifford(grid: PeriodicGrid) -> ImmersionField:
    """Clifford torus ``S^1 x S^1`` in ``R^4`` on the square lattice."""
    if abs(grid.tau[0]) > 1e-12 or abs(grid.tau[1] - 1.0) > 1e-12:
        raise ValueError(f"the Clifford torus needs the square lattice tau=(0,1), got {grid.tau}")
    x, y = grid.flat_coords()
    tp = 2 * np.pi
    phi = np.stack([np.cos(tp * x), np.sin(tp * x), np.cos(tp * y), np.sin(tp * y)])
    return ImmersionField(phi, grid, "clifford")


def rotational_tau2(R: float, r: float) -> float:
    """Conformal class of the torus of revolution with radii ``R > r``."""
    if not R > r > 0:
        raise ValueError(f"need R > r > 0, got R={R}, r={r}")
    return r / math.sqrt(R * R - r * r)


def rotational_grid(R: float, r: float, n1: int, n2: int | None = None) -> PeriodicGrid:
    return PeriodicGrid(n1, n2 or n1, (0.0, rotational_tau2(R, r)))


def meridian_angle(w: np.ndarray, R: float, r: float) -> np.ndarray:
    """Solve ``r dv/dw = R + r cos v`` with ``v(0) = 0`` at the points ``w``.

    Closed form ``v = 2 atan(k tan(phi))`` with ``k = sqrt((R + r)/(R - r))``
    and ``phi = sqrt(R^2 - r^2) w / (2 r)``, continued through ``phi = pi/2``;
    continuous for ``w`` in ``[0, 2 pi tau2)``.
    """
    w = np.asarray(w, dtype=float)
    k = math.sqrt((R + r) / (R - r))
    phi = math.sqrt(R * R - r * r) * w / (2 * r)
    return 2 * np.arctan2(k * np.sin(phi), np.cos(phi))


def rotational_conformal(R: float, r: float, grid: PeriodicGrid, tol: float = 1e-9) -> ImmersionField:
    """Torus of revolution in a conformal chart.

    The longitude angle is ``2 pi x1`` and the meridian angle ``v`` solves
    the meridian ODE in ``w = 2 pi x2``, so that the metric is
    ``(2 pi)^2 (R + r cos v)^2 (dx1^2 + dx2^2)``.
    """
    tau2 = rotational_tau2(R, r)
    if abs(grid.tau[0]) > tol or abs(grid.tau[1] - tau2) > tol * max(1.0, tau2):
        raise ValueError(f"lattice mismatch: torus of revolution ({R}, {r}) needs tau=(0, {tau2!r})")
    x, y = grid.flat_coords()
    v = meridian_angle(2 * np.pi * y[0], R, r)[None, :] * np.ones_like(x)
    rho = R + r * np.cos(v)
    u = 2 * np.pi * x
    phi = np.stack([rho * np.cos(u), rho * np.sin(u), r * np.sin(v)])
    return ImmersionField(phi, grid, f"rotational(R={R!r},r={r!r})")


def twisted_figure_eight(grid: PeriodicGrid, scale: float = 1.0, radius: float = 3.0,
                         twists: int = 1, floor: float = DEFAULT_FLOOR) -> ImmersionField:
    """Figure-eight tube swept around a circle while rotating in its plane.

    The cross-section ``scale * (sin v, sin 2v)`` is carried around a circle
    of radius ``radius`` and turned by ``twists`` full rotations per
    revolution. A half turn would close up into a Klein bottle, since the
    half-turned curve is the original one traversed backwards.
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    reach = scale * math.hypot(1.0, 1.0) * 1.0001
    if reach >= radius:
        raise ImmersionError(f"cross-section reach {reach:.3g} exceeds sweep radius {radius}")
    s, t = grid.lattice_coords()
    u, v = 2 * np.pi * s, 2 * np.pi * t
    a, b = scale * np.sin(v), scale * np.sin(2 * v)
    alpha = twists * u
    p = np.cos(alpha) * a - np.sin(alpha) * b
    q = np.sin(alpha) * a + np.cos(alpha) * b
    rho = radius + p
    phi = np.stack([rho * np.cos(u), rho * np.sin(u), q])
    return check_immersion(ImmersionField(phi, grid, f"figure8(scale={scale!r},twists={twists})"), floor)


# --- random perturbations ----------------------------------------------------

def _rms_radius(x: np.ndarray) -> float:
    c = x.mean(axis=(1, 2), keepdims=True)
    return float(np.sqrt(np.mean(np.sum((x - c) ** 2, axis=0))))


def random_trig_field(grid: PeriodicGrid, m: int, rng: np.random.Generator,
                      max_mode: int) -> np.ndarray:
    """Real trigonometric polynomial in lattice coordinates, unit RMS.

    Coefficients decay like ``1 / (1 + k^2 + l^2)`` up to ``max_mode``.
    """
    s, t = grid.lattice_coords()
    out = np.zeros((m,) + grid.shape)
    for k in range(0, max_mode + 1):
        for l in range(-max_mode, max_mode + 1):
            if k == 0 and l <= 0:
                continue
            w = 1.0 / (1.0 + k * k + l * l)
            arg = 2 * np.pi * (k * s + l * t)
            ca, sa = rng.standard_normal((2, m)) * w
            out += ca[:, None, None] * np.cos(arg) + sa[:, None, None] * np.sin(arg)
    rms = np.sqrt(np.mean(out**2))
    return out / rms if rms > 0 else out


def fourier_perturb(base: ImmersionField, seed: int, amplitude: float, max_mode: int = 3,
                    relative: bool = True, floor: float = DEFAULT_FLOOR,
                    retries: int = 8) -> ImmersionField:
    """Add a seeded random trigonometric polynomial to every coordinate.

    With ``relative=True`` the amplitude is measured in units of the RMS
    radius of ``base``. If the result fails the immersion floor the
    amplitude is halved, at most ``retries`` times.
    """
    if amplitude == 0:
        return base
    rng = np.random.default_rng(seed)
    pert = random_trig_field(base.grid, base.ambient_dim, rng, max_mode)
    amp = amplitude * (_rms_radius(base.samples) if relative else 1.0)
    for _ in range(retries + 1):
        cand = ImmersionField(base.samples + amp * pert, base.grid,
                              f"{base.label}+fourier(seed={seed},amp={amp:.4g})")
        if immersion_margin(cand) > floor:
            return cand
        amp *= 0.5
    raise ImmersionError(f"immersion floor unreachable after {retries} halvings")


def transform(imm: ImmersionField, scale: float = 1.0, rotation=None,
              translation=None, tol: float = 1e-12) -> ImmersionField:
    """Apply ``x -> scale * rotation @ x + translation`` to every sample."""
    m = imm.ambient_dim
    if not scale > 0:
        raise ValueError("scale must be positive")
    rot = np.eye(m) if rotation is None else np.asarray(rotation, dtype=float)
    if rot.shape != (m, m) or np.max(np.abs(rot.T @ rot - np.eye(m))) > tol:
        raise ValueError("rotation must be an orthogonal m x m matrix")
    shift = np.zeros(m) if translation is None else np.asarray(translation, dtype=float)
    x = scale * np.einsum("ab,bij->aij", rot, imm.samples) + shift[:, None, None]
    return ImmersionField(x, imm.grid, imm.label)


def random_rotation(m: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((m, m)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def shear_reparametrize(imm: ImmersionField, amplitude: float, mode: int = 1, axis: int = 0) -> ImmersionField:
    """Compose with the torus diffeomorphism ``s -> s + a sin(2 pi mode t)``.

    With ``axis=1`` the map is ``t -> t + a sin(2 pi mode s)`` instead, which
    also changes ``d1 Phi``. The image is unchanged; the chart is no longer
    conformal.
    """
    g = imm.grid
    s, t = g.lattice_coords()
    if axis == 0:
        x = g.interpolate(imm.samples, s + amplitude * np.sin(2 * np.pi * mode * t), t)
    elif axis == 1:
        x = g.interpolate(imm.samples, s, t + amplitude * np.sin(2 * np.pi * mode * s))
    else:
        raise ValueError("axis must be 0 or 1")
    return ImmersionField(x, g, imm.label + f"+shear({amplitude},{axis})")


def build_immersion(spec: dict, grid: PeriodicGrid | None = None) -> ImmersionField:
    """Construct an immersion from a config mapping with a ``kind`` key."""
    spec = dict(spec)
    kind = spec.pop("kind")
    n = int(spec.pop("n", grid.n1 if grid is not None else 64))
    if kind == "clifford":
        return clifford(grid or PeriodicGrid(n, n))
    if kind == "rotational":
        R, r = float(spec.pop("R", math.sqrt(2.0))), float(spec.pop("r", 1.0))
        if grid is None:
            grid = rotational_grid(R, r, n)
        return rotational_conformal(R, r, grid)
    if kind == "figure8":
        return twisted_figure_eight(grid or PeriodicGrid(n, n), **spec)
    if kind == "fourier":
        base = dict(spec.pop("base", {"kind": "rotational"}))
        base.setdefault("n", n)
        base = build_immersion(base, grid)
        return fourier_perturb(base, **spec)
    raise ValueError(f"unknown immersion kind {kind!r}")

