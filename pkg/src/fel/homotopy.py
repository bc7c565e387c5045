"""
Regular homotopy class of an immersed torus in R^3
==================================================

An immersed torus carries the quadratic form ``q(gamma) = SL(gamma) mod 2``
on ``H_1(T^2; Z_2)``, where ``SL`` is the self-linking number of an embedded
curve pushed off along the surface normal. Its Arf invariant separates the
two regular homotopy classes. ``SL = Wr + Tw`` is computed from the Gauss
writhe integral and the twist of the normal along the curve.

The generators used are the lattice classes ``(1, 0)`` and ``(1, 1)``,
a symplectic basis; for surfaces swept around an axis both are embedded.
As an independent check, the class in ``pi_1(SO(3))`` of the frame
``(T, n, T x n)`` is obtained by lifting it to unit quaternions; for any
immersed curve ``q = class + 1 mod 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import cross, dot
from .zoo import ImmersionField

MARGIN_FLOOR = 0.2
CURVE_SAMPLES = 256
# arf -> label, calibrated on the torus of revolution (arf 0)
CALIBRATION = {0: "standard", 1: "nonstandard"}


class ClassificationError(RuntimeError):
    """Raised when no reliable self-linking numbers can be obtained."""


@dataclass(frozen=True)
class FramedCurve:
    """Closed curve with unit tangent-orthogonal framing, uniform parameter."""

    points: np.ndarray  # (3, N)
    velocity: np.ndarray  # (3, N), d/dsigma with period 1
    normal: np.ndarray  # (3, N), unit, orthogonal to velocity

    @property
    def n(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class SelfLinking:
    value: int
    writhe: float
    twist: float
    margin: float

    @property
    def raw(self) -> float:
        return self.writhe + self.twist


@dataclass(frozen=True)
class ClassLabel:
    arf: int
    label: str
    q: tuple[int, int]
    margins: tuple[float, float]
    offsets: tuple[float, float] = (0.0, 0.0)

    def to_json(self) -> dict:
        return {"arf": self.arf, "label": self.label, "q": list(self.q),
                "margins": [float(m) for m in self.margins]}


def _spectral_derivative(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    k = np.fft.fftfreq(n, 1.0 / n)
    k = np.where(np.abs(k) == n // 2, 0.0, k)
    return np.fft.ifft(np.fft.fft(x, axis=-1) * (2j * np.pi * k), axis=-1).real


def framed_lattice_curve(imm: ImmersionField, cls: tuple[int, int], offset: float,
                         samples: int = CURVE_SAMPLES) -> FramedCurve:
    """Curve of lattice class ``cls`` through ``(0, offset)`` (or ``(offset, 0)`` for ``(0, 1)``).

    Points, lattice derivatives and hence the surface normal are evaluated
    by trigonometric interpolation at ``samples`` equispaced parameters.
    """
    if imm.ambient_dim != 3:
        raise ValueError("framed curves need an immersion into R^3")
    p, q = cls
    g = imm.grid
    sig = np.arange(samples) / samples
    if (p, q) == (0, 1):
        s, t = np.full(samples, offset), sig
    else:
        s, t = p * sig, offset + q * sig
    x = imm.samples
    stack = np.concatenate([x, g.partial_s(x), g.partial_t(x)])
    v = g.interpolate(stack, s, t)
    pts, ps, pt = v[:3], v[3:6], v[6:9]
    vel = p * ps + q * pt
    nrm = cross(ps, pt)
    nrm = nrm / np.sqrt(dot(nrm, nrm))
    return FramedCurve(pts, vel, nrm)


def writhe(points: np.ndarray, velocity: np.ndarray | None = None) -> float:
    """Gauss writhe integral with the diagonal excluded (trapezoid rule)."""
    if velocity is None:
        velocity = _spectral_derivative(points)
    n = points.shape[1]
    d = points[:, :, None] - points[:, None, :]
    tv = cross(velocity[:, :, None], velocity[:, None, :])
    r = np.sqrt(dot(d, d))
    np.fill_diagonal(r, np.inf)
    integrand = dot(tv, d) / r**3
    return float(integrand.sum() / (4 * math.pi * n * n))


def linking_number(a: np.ndarray, b: np.ndarray) -> float:
    """Gauss linking integral of two disjoint closed curves sampled uniformly."""
    da, db = _spectral_derivative(a), _spectral_derivative(b)
    d = a[:, :, None] - b[:, None, :]
    tv = cross(da[:, :, None], db[:, None, :])
    r = np.sqrt(dot(d, d))
    return float((dot(tv, d) / r**3).sum() / (4 * math.pi * a.shape[1] * b.shape[1]))


def twist(curve: FramedCurve) -> float:
    """``(1/2 pi) int u' . (T x u) dsigma`` for the framing ``u``."""
    vel = curve.velocity
    tang = vel / np.sqrt(dot(vel, vel))
    du = _spectral_derivative(curve.normal)
    return float(np.mean(dot(du, cross(tang, curve.normal))) / (2 * math.pi))


def framing_self_linking(curve: FramedCurve) -> SelfLinking:
    """Self-linking of the curve pushed off along its framing, ``Wr + Tw``."""
    wr = writhe(curve.points, curve.velocity)
    tw = twist(curve)
    x = wr + tw
    k = int(round(x))
    return SelfLinking(k, wr, tw, 0.5 - abs(x - k))


def min_separation(curve: FramedCurve, window: float = 0.125) -> float:
    """Smallest chord between parameters at least ``window`` apart, relative to length."""
    n = curve.n
    d = curve.points[:, :, None] - curve.points[:, None, :]
    r = np.sqrt(dot(d, d))
    i = np.arange(n)
    gap = np.abs(i[:, None] - i[None, :])
    gap = np.minimum(gap, n - gap)
    length = float(np.mean(np.sqrt(dot(curve.velocity, curve.velocity))))
    return float(np.min(r[gap >= window * n]) / length)


def _rotation_to_quaternion(R: np.ndarray) -> np.ndarray:
    """Unit quaternions (w, x, y, z) for rotation matrices of shape (N, 3, 3)."""
    m = R
    tr = m[:, 0, 0] + m[:, 1, 1] + m[:, 2, 2]
    cand = np.stack([
        np.stack([1 + tr, m[:, 2, 1] - m[:, 1, 2], m[:, 0, 2] - m[:, 2, 0], m[:, 1, 0] - m[:, 0, 1]], 1),
        np.stack([m[:, 2, 1] - m[:, 1, 2], 1 + 2 * m[:, 0, 0] - tr, m[:, 0, 1] + m[:, 1, 0], m[:, 0, 2] + m[:, 2, 0]], 1),
        np.stack([m[:, 0, 2] - m[:, 2, 0], m[:, 0, 1] + m[:, 1, 0], 1 + 2 * m[:, 1, 1] - tr, m[:, 1, 2] + m[:, 2, 1]], 1),
        np.stack([m[:, 1, 0] - m[:, 0, 1], m[:, 0, 2] + m[:, 2, 0], m[:, 1, 2] + m[:, 2, 1], 1 + 2 * m[:, 2, 2] - tr], 1),
    ], 1)  # (N, 4 candidates, 4); candidate c is 4 q_c q
    norms = np.linalg.norm(cand, axis=2)
    best = np.argmax(norms, axis=1)
    q = cand[np.arange(len(m)), best]
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def frame_class(curve: FramedCurve) -> int:
    """Class in ``pi_1(SO(3)) = Z_2`` of the frame ``(T, u, T x u)``.

    The loop is lifted to unit quaternions by continuity; it is trivial iff
    the lift closes up.
    """
    vel = curve.velocity
    tang = vel / np.sqrt(dot(vel, vel))
    u = curve.normal
    b = cross(tang, u)
    R = np.stack([tang, u, b], axis=1).transpose(2, 0, 1)  # columns are the frame
    q = _rotation_to_quaternion(R)
    steps = np.abs(np.sum(q[1:] * q[:-1], axis=1))
    if np.min(steps) < 0.9:
        raise ClassificationError("frame turns too fast between samples; increase samples")
    lift = q[0]
    for cur in q[1:]:
        lift = cur if np.dot(cur, lift) > 0 else -cur
    return 0 if np.dot(lift, q[0]) > 0 else 1


def quadratic_form_oracle(curve: FramedCurve) -> int:
    """``q`` from the frame class; valid for immersed, not only embedded, curves."""
    return (frame_class(curve) + 1) % 2


def q_value(imm: ImmersionField, cls: tuple[int, int], offsets, samples: int = CURVE_SAMPLES,
            separation: float = 1e-3):
    """First reliable ``(q, margin, offset)`` over candidate offsets."""
    best = None
    for off in offsets:
        curve = framed_lattice_curve(imm, cls, off, samples)
        if min_separation(curve) < separation:
            continue
        sl = framing_self_linking(curve)
        if best is None or sl.margin > best[1]:
            best = (sl.value % 2, sl.margin, off)
        if sl.margin > MARGIN_FLOOR:
            return sl.value % 2, sl.margin, off
    if best is None:
        raise ClassificationError(f"no embedded representative of class {cls} among offsets {list(offsets)}")
    raise ClassificationError(
        f"self-linking of class {cls} unreliable: best margin {best[1]:.3f} < {MARGIN_FLOOR}")


def classify(imm: ImmersionField, offsets=(0.0, 0.1, 0.3, 0.55, 0.8),
             samples: int = CURVE_SAMPLES) -> ClassLabel:
    """Arf invariant of the normal-framing quadratic form and its calibrated label."""
    if imm.ambient_dim != 3:
        raise ValueError("classification is defined for immersions into R^3 only")
    qa, ma, oa = q_value(imm, (1, 0), offsets, samples)
    qb, mb, ob = q_value(imm, (1, 1), offsets, samples)
    arf = qa * qb
    return ClassLabel(arf, CALIBRATION[arf], (qa, qb), (ma, mb), (oa, ob))
