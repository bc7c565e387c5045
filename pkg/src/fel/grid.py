"""
Periodic grids on flat tori
===========================

Fields are sampled on the unit square in lattice coordinates ``(s, t)``; the
flat coordinates of the torus spanned by ``(1, 0)`` and ``(tau1, tau2)`` are

    x1 = s + tau1 * t,    x2 = tau2 * t.

All derivative operators are applied in Fourier space, so the shear only
enters through the symbols and every operator stays axis-aligned on the
sample array. Scalar fields have shape ``(n1, n2)``; vector fields carry the
component axis first, ``(m, n1, n2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import signal

# tolerance used to decide moduli boundary ties
_TIE_ATOL = 1e-12


@dataclass(frozen=True)
class ModuliPoint:
    """A point of the moduli strip ``M`` with its lattice angle."""

    tau1: float
    tau2: float

    def __post_init__(self):
        if not self.tau2 > 0:
            raise ValueError(f"tau2 must be positive, got {self.tau2}")

    @property
    def theta(self) -> float:
        return math.acos(max(-1.0, min(1.0, self.tau1)))

    @property
    def in_strip(self) -> bool:
        t1, t2 = self.tau1, self.tau2
        r2 = t1 * t1 + t2 * t2
        if not (-0.5 - _TIE_ATOL < t1 <= 0.5 + _TIE_ATOL):
            return False
        if t1 < -0.5 + _TIE_ATOL:
            return False
        if r2 < 1.0 - _TIE_ATOL:
            return False
        if abs(r2 - 1.0) <= _TIE_ATOL and t1 < -_TIE_ATOL:
            return False
        return True

    def as_tuple(self) -> tuple[float, float]:
        return (self.tau1, self.tau2)


@dataclass(frozen=True)
class Reduction:
    """Result of :func:`reduce_to_moduli`.

    ``matrix`` is the integer matrix ``[[a, b], [c, d]]`` of determinant one
    with ``tau_out = (a*tau_in + b) / (c*tau_in + d)`` (after orientation),
    and ``word`` lists the generators applied in order (``T^k`` translations
    and ``S`` inversions).
    """

    point: ModuliPoint
    matrix: tuple[tuple[int, int], tuple[int, int]]
    word: tuple[str, ...]
    flipped: bool = False


def _mat_mul(a, b):
    return (
        (a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]),
        (a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]),
    )


def reduce_to_moduli(tau1: float, tau2: float, max_steps: int = 10_000) -> Reduction:
    """Reduce a lattice parameter to the moduli strip by PSL(2, Z) moves.

    The lattice spanned by ``(1, 0)`` and ``(tau1, tau2)`` is first oriented
    so that ``tau2 > 0`` (``tau -> -tau`` spans the same lattice). Then unit
    translations and the inversion ``tau -> -1/tau`` are alternated until the
    point lies in the strip. Boundary ties follow the half-open convention:
    ``tau1 = -1/2`` is moved to ``+1/2`` and points on the unit circle with
    ``tau1 < 0`` are inverted.
    """
    if not (math.isfinite(tau1) and math.isfinite(tau2)):
        raise ValueError("tau must be finite")
    if tau2 == 0:
        raise ValueError("degenerate lattice: tau2 = 0")
    flipped = tau2 < 0
    z = complex(tau1, tau2)
    if flipped:
        z = -z
    mat = ((1, 0), (0, 1))
    word: list[str] = []
    for _ in range(max_steps):
        k = math.floor(z.real + 0.5)
        if k != 0:
            z = z - k
            mat = _mat_mul(((1, -k), (0, 1)), mat)
            word.append(f"T^{-k}")
        if abs(z) ** 2 < 1.0 - _TIE_ATOL:
            z = -1.0 / z
            mat = _mat_mul(((0, -1), (1, 0)), mat)
            word.append("S")
            continue
        break
    else:  # pragma: no cover - only reachable for absurd inputs
        raise RuntimeError("moduli reduction did not terminate")

    if abs(z.real + 0.5) <= _TIE_ATOL:
        z = z + 1
        mat = _mat_mul(((1, 1), (0, 1)), mat)
        word.append("T^1")
    if abs(abs(z) ** 2 - 1.0) <= _TIE_ATOL and z.real < -_TIE_ATOL:
        z = -1.0 / z
        mat = _mat_mul(((0, -1), (1, 0)), mat)
        word.append("S")
    return Reduction(ModuliPoint(z.real, z.imag), mat, tuple(word), flipped)


@dataclass(frozen=True)
class PoissonResult:
    phi: np.ndarray
    removed_mean: float
    residual: float
    flagged: bool


@dataclass(frozen=True, eq=False)
class PeriodicGrid:
    """Sample grid over the fundamental parallelogram of ``(1,0), (tau1,tau2)``."""

    n1: int
    n2: int
    tau: tuple[float, float] = (0.0, 1.0)
    _sym: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        for n in (self.n1, self.n2):
            if n < 8 or n % 2:
                raise ValueError(f"grid sizes must be even and >= 8, got {n}")
        t1, t2 = float(self.tau[0]), float(self.tau[1])
        if not t2 > 0:
            raise ValueError("lattice must satisfy tau2 > 0")
        object.__setattr__(self, "tau", (t1, t2))
        k = np.fft.fftfreq(self.n1, 1.0 / self.n1)[:, None]
        l = np.fft.fftfreq(self.n2, 1.0 / self.n2)[None, :]
        # odd derivatives drop the Nyquist mode to stay real
        k_odd = np.where(np.abs(k) == self.n1 // 2, 0.0, k)
        l_odd = np.where(np.abs(l) == self.n2 // 2, 0.0, l)
        tp = 2 * np.pi
        self._sym["ds"] = 1j * tp * k_odd
        self._sym["dt"] = 1j * tp * l_odd
        self._sym["d1"] = 1j * tp * k_odd + 0.0 * l_odd
        self._sym["d2"] = 1j * tp * (l_odd - t1 * k_odd) / t2
        self._sym["lap"] = -(tp**2) * (k**2 + ((l - t1 * k) / t2) ** 2)
        self._sym["k"] = k
        self._sym["l"] = l

    # --- geometry of the cell -------------------------------------------------
    @property
    def shape(self) -> tuple[int, int]:
        return (self.n1, self.n2)

    @property
    def area(self) -> float:
        return self.tau[1]

    @property
    def jacobian(self) -> float:
        return self.area / (self.n1 * self.n2)

    @property
    def moduli(self) -> ModuliPoint:
        return ModuliPoint(*self.tau)

    def lattice_coords(self) -> tuple[np.ndarray, np.ndarray]:
        s = np.arange(self.n1) / self.n1
        t = np.arange(self.n2) / self.n2
        return np.meshgrid(s, t, indexing="ij")

    def flat_coords(self) -> tuple[np.ndarray, np.ndarray]:
        s, t = self.lattice_coords()
        return s + self.tau[0] * t, self.tau[1] * t

    def spacing(self) -> float:
        """Largest flat distance between neighbouring samples."""
        h1 = 1.0 / self.n1
        h2 = math.hypot(self.tau[0], self.tau[1]) / self.n2
        return max(h1, h2)

    def with_tau(self, tau: Sequence[float]) -> "PeriodicGrid":
        return PeriodicGrid(self.n1, self.n2, (float(tau[0]), float(tau[1])))

    def to_config(self) -> dict:
        return {"n1": self.n1, "n2": self.n2, "tau": [self.tau[0], self.tau[1]]}

    @classmethod
    def from_config(cls, cfg: dict) -> "PeriodicGrid":
        tau = cfg.get("tau", [0.0, 1.0])
        return cls(int(cfg["n1"]), int(cfg["n2"]), (float(tau[0]), float(tau[1])))

    # --- spectral operators ---------------------------------------------------
    def _check(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape[-2:] != self.shape:
            raise ValueError(f"field shape {f.shape} does not match grid {self.shape}")
        return f

    def apply(self, f: np.ndarray, symbol: np.ndarray) -> np.ndarray:
        f = self._check(f)
        return np.fft.ifft2(np.fft.fft2(f) * symbol).real

    def partial_s(self, f):
        return self.apply(f, self._sym["ds"])

    def partial_t(self, f):
        return self.apply(f, self._sym["dt"])

    def partial_x(self, f):
        """Flat derivative along the first lattice vector ``(1, 0)``."""
        return self.apply(f, self._sym["d1"])

    def partial_y(self, f):
        """Flat derivative along the direction orthogonal to ``(1, 0)``."""
        return self.apply(f, self._sym["d2"])

    def grad(self, f):
        f = self._check(f)
        fh = np.fft.fft2(f)
        return (
            np.fft.ifft2(fh * self._sym["d1"]).real,
            np.fft.ifft2(fh * self._sym["d2"]).real,
        )

    def grad_perp(self, f):
        """``(-d_y f, d_x f)``."""
        gx, gy = self.grad(f)
        return -gy, gx

    def div(self, v1, v2):
        return self.partial_x(v1) + self.partial_y(v2)

    def laplacian(self, f):
        return self.apply(f, self._sym["lap"])

    def integrate(self, f) -> np.ndarray | float:
        """Periodic trapezoid rule in flat measure ``dx1 dx2``."""
        f = self._check(f)
        out = f.sum(axis=(-2, -1)) * self.jacobian
        return float(out) if np.ndim(out) == 0 else out

    def mean(self, f):
        f = self._check(f)
        out = f.mean(axis=(-2, -1))
        return float(out) if np.ndim(out) == 0 else out

    def solve_poisson(self, rhs, tol: float = 1e-9) -> PoissonResult:
        """Zero-mean solution of ``lap(phi) = rhs``.

        The mean of ``rhs`` is removed before inversion and reported; it is
        flagged when it exceeds ``tol`` relative to the size of ``rhs``.
        """
        rhs = self._check(rhs)
        mean = float(rhs.mean()) if rhs.ndim == 2 else rhs.mean(axis=(-2, -1))
        scale = max(1.0, float(np.max(np.abs(rhs))))
        flagged = bool(np.any(np.abs(mean) > tol * scale))
        lap = self._sym["lap"]
        inv = np.zeros_like(lap)
        nz = lap != 0
        inv[nz] = 1.0 / lap[nz]
        phi = np.fft.ifft2(np.fft.fft2(rhs) * inv).real
        centred = rhs - np.asarray(mean)[..., None, None]
        residual = float(np.max(np.abs(self.laplacian(phi) - centred)))
        return PoissonResult(phi, mean if np.ndim(mean) else float(mean), residual, flagged)

    def spectral_coefficients(self, f):
        return np.fft.fft2(self._check(f)) / (self.n1 * self.n2)

    def resample(self, f, n1: int, n2: int | None = None):
        """Trigonometric resampling to an ``n1 x n2`` grid of the same lattice."""
        n2 = n2 or n1
        f = self._check(f)
        out = signal.resample(f, n1, axis=-2) if n1 != self.n1 else f
        out = signal.resample(out, n2, axis=-1) if n2 != self.n2 else out
        return out, PeriodicGrid(n1, n2, self.tau)

    def interpolate(self, f, s, t):
        """Evaluate the trigonometric interpolant of ``f`` at lattice points.

        ``s, t`` are arrays of lattice coordinates (any real values; the
        field is periodic). Vector fields are evaluated componentwise.
        Nyquist modes enter as cosines so the interpolant is real.
        """
        f = self._check(f)
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        out_shape = np.broadcast(s, t).shape
        s, t = np.broadcast_arrays(s, t)
        s, t = s.ravel(), t.ravel()
        c = np.fft.fft2(f) / (self.n1 * self.n2)
        flat = c.reshape(-1, self.n2)
        ncomp = flat.shape[0] // self.n1
        out = np.empty((ncomp, s.size))
        # chunk the points so the dense bases stay small
        step = max(1, (1 << 22) // (flat.shape[0] + self.n1 + self.n2))
        for a in range(0, s.size, step):
            b = min(a + step, s.size)
            es = _fourier_basis(s[a:b], self.n1)
            et = _fourier_basis(t[a:b], self.n2)
            # (C*K, L) @ (L, P) then contract K pointwise
            tmp = (flat @ et.T).reshape(ncomp, self.n1, b - a)
            out[:, a:b] = np.einsum("ckp,pk->cp", tmp, es).real
        return out.reshape(f.shape[:-2] + out_shape)


def _fourier_basis(x: np.ndarray, n: int) -> np.ndarray:
    k = np.fft.fftfreq(n, 1.0 / n)
    arg = 2 * np.pi * np.outer(x, k)
    basis = np.exp(1j * arg)
    nyq = np.abs(k) == n // 2
    basis[:, nyq] = np.cos(arg[:, nyq])
    return basis


def relattice(f: np.ndarray, grid: PeriodicGrid, matrix) -> tuple[np.ndarray, PeriodicGrid]:
    """Resample a field onto the lattice basis given by a unimodular matrix.

    ``matrix = [[a, b], [c, d]]`` is the witness returned by
    :func:`reduce_to_moduli`, so the new lattice parameter is
    ``(a*tau + b) / (c*tau + d)``. The new basis vectors are
    ``w1 = c*tau + d`` and ``w2 = a*tau + b`` in the old flat plane; old
    lattice coordinates relate to new ones by ``s = d*s' + b*t'`` and
    ``t = c*s' + a*t'``. On square grids this is an exact permutation of
    samples. The returned grid uses flat coordinates rotated and scaled so
    that ``w1`` becomes ``(1, 0)``, which is a conformal change of chart.
    """
    (a, b), (c, d) = matrix
    if a * d - b * c != 1:
        raise ValueError("relattice needs a matrix of determinant one")
    tau = complex(*grid.tau)
    new_tau = (a * tau + b) / (c * tau + d)
    new_grid = grid.with_tau((new_tau.real, new_tau.imag))
    if grid.n1 != grid.n2:
        s, t = new_grid.lattice_coords()
        old_s = d * s + b * t
        old_t = c * s + a * t
        return grid.interpolate(f, old_s, old_t), new_grid
    n = grid.n1
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    oi = (d * i + b * j) % n
    oj = (c * i + a * j) % n
    return np.asarray(f)[..., oi, oj], new_grid


# --- field serialisation -----------------------------------------------------

def field_to_json(f: np.ndarray, grid: PeriodicGrid, **meta) -> dict:
    f = np.asarray(f, dtype=float)
    return {
        "grid": grid.to_config(),
        "components": 1 if f.ndim == 2 else int(f.shape[0]),
        "values": f.ravel().tolist(),
        **meta,
    }


def field_from_json(doc: dict) -> tuple[np.ndarray, PeriodicGrid]:
    grid = PeriodicGrid.from_config(doc["grid"])
    values = np.asarray(doc["values"], dtype=float)
    m = int(doc.get("components", 1))
    shape = grid.shape if m == 1 else (m,) + grid.shape
    return values.reshape(shape), grid


def field_to_csv(f: np.ndarray, path) -> None:
    """Row-major CSV with columns ``i, j, value...``."""
    f = np.asarray(f, dtype=float)
    vals = f[None] if f.ndim == 2 else f
    m, n1, n2 = vals.shape
    i, j = np.meshgrid(np.arange(n1), np.arange(n2), indexing="ij")
    cols = [i.ravel(), j.ravel()] + [vals[c].ravel() for c in range(m)]
    header = "i,j," + ",".join(f"value{c}" if m > 1 else "value" for c in range(m))
    fmt = ["%d", "%d"] + ["%.17g"] * m
    np.savetxt(path, np.column_stack(cols), delimiter=",", header=header, comments="", fmt=fmt)


def field_from_csv(path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    i = data[:, 0].astype(int)
    j = data[:, 1].astype(int)
    n1, n2 = i.max() + 1, j.max() + 1
    m = data.shape[1] - 2
    out = np.empty((m, n1, n2))
    for c in range(m):
        out[c, i, j] = data[:, 2 + c]
    return out[0] if m == 1 else out
