"""
First variations, Euler-Lagrange residual and energy descent
============================================================

Two kinds of gradient live here.

*Analytic* first variations in a conformal chart of an immersion into R^3,
written as ``int w . div[X] dx`` with the flat divergence: ``first_variation_FT``
for the tangential frame energy of the coordinate frame and
``first_variation_W`` for the Willmore energy. Their sum is the
Euler-Lagrange density of the frame energy.

The *discrete* gradient is the exact derivative of the sampled energy

    E(Phi) = min_theta 1/2 int A (omega - grad theta).(omega - grad theta) dx
             + 1/4 int |II|^2 dvol,

where ``omega`` is the connection form of the Gram-Schmidt frame. ``theta``
enters quadratically, so its minimiser is the Coulomb angle and, by the
envelope theorem, ``dE/dPhi`` is the partial derivative at fixed angle. That
partial derivative is taken with jax through the same spectral pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

import jax

jax.config.update("jax_enable_x64", True)
import jax.numpy as jnp  # noqa: E402

from .frames import (  # noqa: E402
    FrameField, coordinate_frame, coulomb_angle, coulomb_project, frame_energy, metric_weight,
    tangential_energy, willmore_energy,
)
from .geometry import CONFORMAL_TOL, GeometryCache, build_geometry, cross, dot  # noqa: E402
from .grid import PeriodicGrid  # noqa: E402
from .zoo import ImmersionField, random_trig_field  # noqa: E402


# --- analytic first variations (conformal chart, R^3) -------------------------

def _require_r3_conformal(cache: GeometryCache, tol: float = CONFORMAL_TOL):
    if cache.m != 3:
        raise ValueError("the analytic first variations are implemented for immersions into R^3")
    cache.require_conformal(tol)


def _frame_one_form(cache: GeometryCache, frame: FrameField | None):
    """``alpha_j = e2 . d_j e1`` for the given frame (coordinate frame by default)."""
    g = cache.grid
    frame = frame or coordinate_frame(cache)
    e1, e2 = frame.e1, frame.e2
    return frame, (dot(e2, g.partial_x(e1)), dot(e2, g.partial_y(e1)))


def ft_flux(cache: GeometryCache, frame: FrameField | None = None, tol: float = CONFORMAL_TOL):
    """Vector flux ``X`` with ``dF_T(w) = int w . div X dx`` (two ambient fields).

    With ``alpha = e2 . grad e1`` and ``V_i = e^{-2 lam} II_ij alpha_j``,
    ``X = (V_2, -V_1) - 1/2 |alpha|_g^2 grad Phi + alpha (alpha, grad Phi)_g``,
    the flat transcription of ``d[II _| alpha] + d *_g[(alpha x alpha - |alpha|^2 g / 2) _| dPhi]``.
    """
    _require_r3_conformal(cache, tol)
    _, (a1, a2) = _frame_one_form(cache, frame)
    em2 = np.exp(-2 * cache.lam)
    V1 = em2 * (cache.II11 * a1 + cache.II12 * a2)
    V2 = em2 * (cache.II12 * a1 + cache.II22 * a2)
    proj = em2 * (a1 * cache.P1 + a2 * cache.P2)  # (alpha, grad Phi)_g
    sq = em2 * (a1 * a1 + a2 * a2)
    x1 = V2 - 0.5 * sq * cache.P1 + a1 * proj
    x2 = -V1 - 0.5 * sq * cache.P2 + a2 * proj
    return x1, x2


def ft_flux_perp_form(cache: GeometryCache, frame: FrameField | None = None, tol: float = CONFORMAL_TOL):
    """The ``grad^perp`` rewriting of the flux, kept for comparison.

    ``-II _| (alpha^perp) - alpha^perp (alpha, grad Phi)_g + 1/2 |alpha|_g^2 grad^perp Phi``.
    It differs from :func:`ft_flux` by a field that is not divergence free,
    because ``II _| (alpha^perp) != (II _| alpha)^perp`` unless ``II`` is umbilic.
    """
    _require_r3_conformal(cache, tol)
    _, (a1, a2) = _frame_one_form(cache, frame)
    em2 = np.exp(-2 * cache.lam)
    b1, b2 = -a2, a1
    proj = em2 * (a1 * cache.P1 + a2 * cache.P2)
    sq = em2 * (a1 * a1 + a2 * a2)
    x1 = -em2 * (cache.II11 * b1 + cache.II12 * b2) - b1 * proj - 0.5 * sq * cache.P2
    x2 = -em2 * (cache.II12 * b1 + cache.II22 * b2) - b2 * proj + 0.5 * sq * cache.P1
    return x1, x2


def willmore_flux(cache: GeometryCache, tol: float = CONFORMAL_TOL):
    """Vector flux ``Y`` with ``dW(w) = int w . div Y dx``.

    ``Y = -1/2 (grad H_vec - 3 grad H n + grad^perp n x H_vec)`` with
    ``H_vec = H n`` the mean curvature vector; the overall sign is fixed by
    the finite-difference check in the test suite.
    """
    _require_r3_conformal(cache, tol)
    g = cache.grid
    n = cache.normal
    Hs = cache.H_scalar
    Hv = cache.H
    gH = (g.partial_x(Hv), g.partial_y(Hv))
    gh = (g.partial_x(Hs), g.partial_y(Hs))
    gn_perp = (-g.partial_y(n), g.partial_x(n))
    return tuple(-0.5 * (gH[i] - 3 * gh[i] * n + cross(gn_perp[i], Hv)) for i in range(2))


def _pair_div(cache: GeometryCache, flux, w) -> float:
    g = cache.grid
    return float(g.integrate(dot(w, g.div(flux[0], flux[1]))))


def first_variation_FT(cache: GeometryCache, w: np.ndarray, frame: FrameField | None = None,
                       tol: float = CONFORMAL_TOL) -> float:
    return _pair_div(cache, ft_flux(cache, frame, tol), w)


def first_variation_W(cache: GeometryCache, w: np.ndarray, tol: float = CONFORMAL_TOL) -> float:
    return _pair_div(cache, willmore_flux(cache, tol), w)


def first_variation_F(cache: GeometryCache, w: np.ndarray, frame: FrameField | None = None,
                      tol: float = CONFORMAL_TOL) -> float:
    x, y = ft_flux(cache, frame, tol), willmore_flux(cache, tol)
    return _pair_div(cache, (x[0] + y[0], x[1] + y[1]), w)


def el_density(cache: GeometryCache, frame: FrameField | None = None,
               tol: float = CONFORMAL_TOL) -> np.ndarray:
    """Euler-Lagrange density ``div[Y + X]`` (per unit flat area)."""
    g = cache.grid
    x, y = ft_flux(cache, frame, tol), willmore_flux(cache, tol)
    return g.div(x[0] + y[0], x[1] + y[1])


def density_norm(cache: GeometryCache, G: np.ndarray) -> float:
    """``L^2(dvol)`` norm of a flat-area density ``G`` converted to ``G / sqrt(g)``."""
    v = G / cache.sqrt_g
    return float(math.sqrt(cache.grid.integrate(dot(v, v) * cache.sqrt_g)))


# --- discrete energy and exact gradient --------------------------------------

def _energy_kernel(m):

    def d(f, s):
        return jnp.real(jnp.fft.ifft2(jnp.fft.fft2(f) * s))

    def dotj(a, b):
        return jnp.sum(a * b, axis=0)

    def energy(X, theta, d1, d2, jac):
        P1, P2 = d(X, d1), d(X, d2)
        g11, g12, g22 = dotj(P1, P1), dotj(P1, P2), dotj(P2, P2)
        det = g11 * g22 - g12 * g12
        sg = jnp.sqrt(det)
        gi11, gi12, gi22 = g22 / det, -g12 / det, g11 / det
        a11, a12, a22 = sg * gi11, sg * gi12, sg * gi22
        e1 = P1 / jnp.sqrt(g11)
        v = P2 - dotj(P2, e1) * e1
        e2 = v / jnp.sqrt(dotj(v, v))
        u1 = dotj(e1, d(e2, d1)) - d(theta, d1)
        u2 = dotj(e1, d(e2, d2)) - d(theta, d2)
        FT = 0.5 * jac * jnp.sum(a11 * u1 * u1 + 2 * a12 * u1 * u2 + a22 * u2 * u2)
        P11 = d(P1, d1)
        P12 = 0.5 * (d(P1, d2) + d(P2, d1))
        P22 = d(P2, d2)
        if m == 3:
            c = jnp.stack([P1[1] * P2[2] - P1[2] * P2[1],
                           P1[2] * P2[0] - P1[0] * P2[2],
                           P1[0] * P2[1] - P1[1] * P2[0]])
            nrm = c / jnp.sqrt(dotj(c, c))
            h = [dotj(P11, nrm), dotj(P12, nrm), dotj(P22, nrm)]

            def ip(i, j):
                return h[i] * h[j]
        else:
            # normal parts via pi_n v = v - P g^-1 (P^T v)
            def pn(V):
                t1, t2 = dotj(P1, V), dotj(P2, V)
                return V - (gi11 * t1 + gi12 * t2) * P1 - (gi12 * t1 + gi22 * t2) * P2
            N = [pn(P11), pn(P12), pn(P22)]

            def ip(i, j):
                return dotj(N[i], N[j])
        idx = ((0, 1), (1, 2))
        gi = ((gi11, gi12), (gi12, gi22))
        II2 = 0.0
        for i in range(2):
            for j in range(2):
                for k in range(2):
                    for l in range(2):
                        II2 = II2 + gi[i][k] * gi[j][l] * ip(idx[i][j], idx[k][l])
        Q = 0.25 * jac * jnp.sum(II2 * sg)
        return FT + Q, (FT, Q)

    return energy


_KERNELS: dict = {}


def _kernels(m: int) -> dict:
    """Jitted energy and gradient, shared by all grids (lattice data are arguments)."""
    if m not in _KERNELS:
        kern = _energy_kernel(m)
        _KERNELS[m] = {"value": jax.jit(kern),
                       "grad": jax.jit(jax.value_and_grad(kern, argnums=0, has_aux=True))}
    return _KERNELS[m]


@dataclass
class EnergyEval:
    E: float
    F_T: float
    Q: float
    theta: np.ndarray
    grad: np.ndarray | None = None
    solver_residual: float = 0.0


@dataclass
class DiscreteEnergy:
    """Exact discrete frame energy at the Coulomb angle, with its gradient."""

    grid: PeriodicGrid
    m: int
    _fns: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        self._fns.update(_kernels(self.m))
        self._args = (jnp.asarray(self.grid._sym["d1"]), jnp.asarray(self.grid._sym["d2"]),
                      self.grid.jacobian)

    def theta_star(self, X: np.ndarray):
        imm = ImmersionField(X, self.grid)
        cache = build_geometry(imm)
        frame = coordinate_frame(cache)
        return coulomb_angle(cache, frame)

    def __call__(self, X: np.ndarray, with_grad: bool = True) -> EnergyEval:
        theta, res = self.theta_star(X)
        Xj, tj = jnp.asarray(X), jnp.asarray(theta)
        if with_grad:
            (E, (FT, Q)), G = self._fns["grad"](Xj, tj, *self._args)
            G = np.asarray(G)
        else:
            E, (FT, Q) = self._fns["value"](Xj, tj, *self._args)
            G = None
        return EnergyEval(float(E), float(FT), float(Q), theta, G, res)

    def value(self, X: np.ndarray) -> float:
        return self(X, with_grad=False).E


_ENERGY_CACHE: dict = {}


def discrete_energy(grid: PeriodicGrid, m: int) -> DiscreteEnergy:
    key = (grid.n1, grid.n2, grid.tau, m)
    if key not in _ENERGY_CACHE:
        _ENERGY_CACHE[key] = DiscreteEnergy(grid, m)
    return _ENERGY_CACHE[key]


def gradient_F(imm: ImmersionField):
    """Discrete gradient ``dE/dPhi`` (sample-wise) and its flat-area density.

    The density ``G = dE/dPhi / cell_area`` satisfies ``dE(w) ~ int G . w dx``.
    """
    ev = discrete_energy(imm.grid, imm.ambient_dim)(imm.samples)
    return ev, ev.grad / imm.grid.jacobian


def coefficient_gradient(grad: np.ndarray, grid: PeriodicGrid, modes) -> np.ndarray:
    """Derivatives with respect to trigonometric coefficients.

    ``modes`` is an iterable of ``(component, k, l, kind)`` with ``kind`` in
    ``{"cos", "sin"}``, meaning ``Phi_a += c * kind(2 pi (k s + l t))``.
    """
    s, t = grid.lattice_coords()
    out = []
    for a, k, l, kind in modes:
        arg = 2 * np.pi * (k * s + l * t)
        basis = np.cos(arg) if kind == "cos" else np.sin(arg)
        out.append(float(np.sum(grad[a] * basis)))
    return np.array(out)


def trig_mode(grid: PeriodicGrid, m: int, component: int, k: int, l: int, kind: str) -> np.ndarray:
    s, t = grid.lattice_coords()
    arg = 2 * np.pi * (k * s + l * t)
    w = np.zeros((m,) + grid.shape)
    w[component] = np.cos(arg) if kind == "cos" else np.sin(arg)
    return w


def el_residual(imm: ImmersionField, grad: np.ndarray | None = None,
                cache: GeometryCache | None = None) -> float:
    """``L^2(dvol)`` norm of the discrete Euler-Lagrange density.

    Chart independent: the flat-area density is divided by ``sqrt(g)``.
    """
    cache = cache or build_geometry(imm)
    if grad is None:
        _, G = gradient_F(imm)
    else:
        G = grad / imm.grid.jacobian
    return density_norm(cache, G)


# --- finite-difference oracle ------------------------------------------------

def richardson_derivative(fun, h: float) -> float:
    """Centered difference at steps ``h`` and ``h/2`` combined to fourth order."""
    d1 = (fun(h) - fun(-h)) / (2 * h)
    d2 = (fun(h / 2) - fun(-h / 2)) / h
    return (4 * d2 - d1) / 3


def _rel(a: float, b: float, floor: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def _smooth_FT(X, grid):
    cache = build_geometry(ImmersionField(X, grid))
    frame, _ = coulomb_project(cache, coordinate_frame(cache))
    return tangential_energy(cache, frame)


def _smooth_W(X, grid):
    return willmore_energy(build_geometry(ImmersionField(X, grid)))[0]


def gradient_check(imm: ImmersionField, seeds, h: float = 1e-3, max_mode: int = 3,
                   gauge_tol: float = CONFORMAL_TOL) -> list[dict]:
    """Analytic first variations against Richardson differences.

    ``imm`` must be conformal to within ``gauge_tol``; the analytic formulas
    carry an error of the order of the conformality residual. One seeded
    random trigonometric perturbation per seed; relative errors are floored
    at ``1e-8 F``.
    """
    cache = build_geometry(imm)
    _require_r3_conformal(cache, gauge_tol)
    g, X = imm.grid, imm.samples
    frame, _ = coulomb_project(cache, coordinate_frame(cache))
    floor = 1e-8 * frame_energy(cache, frame).F
    rows = []
    for seed in seeds:
        w = random_trig_field(g, imm.ambient_dim, np.random.default_rng(seed), max_mode)
        ft = richardson_derivative(lambda e: _smooth_FT(X + e * w, g), h)
        wl = richardson_derivative(lambda e: _smooth_W(X + e * w, g), h)
        a_ft, a_w = first_variation_FT(cache, w, frame, gauge_tol), first_variation_W(cache, w, gauge_tol)
        rows.append({
            "seed": int(seed), "dFT": a_ft, "dFT_fd": ft, "dW": a_w, "dW_fd": wl,
            "dF": a_ft + a_w, "dF_fd": ft + wl,
            "rel_FT": _rel(a_ft, ft, floor), "rel_W": _rel(a_w, wl, floor),
            "rel_F": _rel(a_ft + a_w, ft + wl, floor),
        })
    return rows


def coefficient_check(imm: ImmersionField, modes, h: float = 1e-4) -> list[dict]:
    """Exact discrete coefficient gradient against Richardson differences of ``E``."""
    de = discrete_energy(imm.grid, imm.ambient_dim)
    ev = de(imm.samples)
    exact = coefficient_gradient(ev.grad, imm.grid, modes)
    floor = 1e-8 * abs(ev.E)
    rows = []
    for mode, a in zip(modes, exact):
        w = trig_mode(imm.grid, imm.ambient_dim, *mode)
        fd = richardson_derivative(lambda e: de.value(imm.samples + e * w), h)
        rows.append({"mode": list(mode), "exact": float(a), "fd": fd, "rel": _rel(float(a), fd, floor)})
    return rows


# --- descent -----------------------------------------------------------------

TRAJECTORY_COLUMNS = ("step", "F", "F_T", "W", "EL_residual", "gauge_residual", "tau2", "class_label")


class DescentError(RuntimeError):
    """Raised on a class-label flip or an unrecoverable step."""


@dataclass
class DescentOptions:
    max_iter: int = 500
    grad_tol: float = 1e-5  # stop once EL residual <= grad_tol * initial residual
    check_class_every: int = 25
    seed: int = 0
    armijo_c: float = 1e-4
    shrink: float = 0.5
    trust_radius: float = 0.05  # first step, relative to the RMS radius
    max_halvings: int = 30
    memory: int = 8
    gauge_threshold: float = 1e-2
    smoothing: float = 0.15  # preconditioner cut-off, fraction of the Nyquist wavenumber
    floor: float = 1e-3
    restore_slack: float = 1e-4  # allowed energy change across a gauge restoration, relative

    @classmethod
    def from_dict(cls, d: dict | None) -> "DescentOptions":
        d = dict(d or {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown descent options {sorted(unknown)}")
        return cls(**d)


@dataclass
class DescentState:
    imm: ImmersionField
    energy: EnergyEval
    el_residual: float
    step: int
    class_label: str
    gauge_residual: float
    trajectory: list = field(default_factory=list)
    restorations: int = 0
    converged: bool = False
    message: str = ""

    def rows(self):
        return [tuple(r[c] for c in TRAJECTORY_COLUMNS) for r in self.trajectory]


class _Preconditioner:
    """Sobolev smoothing ``(1 + |kappa|^2 / kappa0^2)^-2`` with 2/3-rule band limit."""

    def __init__(self, grid: PeriodicGrid, smoothing: float):
        k, l = grid._sym["k"], grid._sym["l"]
        t1, t2 = grid.tau
        kap2 = k**2 + ((l - t1 * k) / t2) ** 2
        k0 = smoothing * min(grid.n1, grid.n2) / 2
        band = (np.abs(k) < grid.n1 / 3) & (np.abs(l) < grid.n2 / 3)
        self.band = band.astype(float)
        self.weight = self.band / (1.0 + kap2 / k0**2) ** 2

    def project(self, x):
        return np.fft.ifft2(np.fft.fft2(x) * self.band).real

    def __call__(self, x):
        return np.fft.ifft2(np.fft.fft2(x) * self.weight).real


def _lbfgs_direction(grad, pairs, precond):
    q = grad.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * np.sum(s * q)
        alphas.append(a)
        q -= a * y
    r = precond(q)
    if pairs:
        s, y, _ = pairs[-1]
        r *= np.sum(s * y) / np.sum(y * precond(y))
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * np.sum(y * r)
        r += (a - b) * s
    return -r


def _label(imm: ImmersionField) -> str:
    from .homotopy import classify
    return classify(imm).label


def _rms_radius(x):
    c = x.mean(axis=(1, 2), keepdims=True)
    return float(np.sqrt(np.mean(np.sum((x - c) ** 2, axis=0))))


def minimize(start: ImmersionField, opts: DescentOptions | dict | None = None,
             callback=None) -> DescentState:
    """Backtracking descent of the discrete frame energy.

    Directions come from limited-memory BFGS with a Sobolev preconditioner,
    restricted to the 2/3-rule band. Steps satisfy the Armijo condition and
    keep the immersion floor. When the conformality residual passes
    ``gauge_threshold`` the chart is restored to conformal gauge (new
    lattice, same image) and the quasi-Newton memory is cleared.
    """
    from .gauge import restore_conformal_gauge
    from .zoo import immersion_margin

    opts = opts if isinstance(opts, DescentOptions) else DescentOptions.from_dict(opts)
    if start.ambient_dim != 3:
        raise ValueError("descent is implemented for immersions into R^3")
    imm = start
    restorations = 0
    cache = build_geometry(imm)
    if cache.conformality_residual > opts.gauge_threshold:
        imm, _ = restore_conformal_gauge(imm)
        cache = build_geometry(imm)
        restorations += 1
    pre = _Preconditioner(imm.grid, opts.smoothing)
    imm = imm.with_samples(pre.project(imm.samples))
    cache = build_geometry(imm)
    label0 = _label(imm)
    de = discrete_energy(imm.grid, 3)
    ev = de(imm.samples)
    el0 = density_norm(cache, ev.grad / imm.grid.jacobian)
    pairs: list = []
    scale = _rms_radius(imm.samples)
    alpha = None
    traj = []

    def record(step, ev, el, cache, label, jump=0.0):
        W = float(cache.grid.integrate(dot(cache.H, cache.H) * cache.sqrt_g))
        row = {"step": step, "F": ev.E, "F_T": ev.F_T, "W": W, "EL_residual": el,
               "gauge_residual": cache.conformality_residual, "tau2": imm.grid.tau[1],
               "class_label": label, "restore_jump": jump}
        traj.append(row)
        if callback is not None:
            callback(row)

    record(0, ev, el0, cache, label0)
    el = el0
    label = label0
    message = "max_iter reached"
    converged = False
    step = 0
    for step in range(1, opts.max_iter + 1):
        g = pre.project(ev.grad)
        d = _lbfgs_direction(g, pairs, pre)
        slope = float(np.sum(g * d))
        if not slope < 0:
            pairs.clear()
            d = -pre(g)
            slope = float(np.sum(g * d))
        if alpha is None or not pairs:
            dn = math.sqrt(float(np.mean(np.sum(d * d, axis=0))))
            alpha = opts.trust_radius * scale / max(dn, 1e-300)
            if alpha is not None and pairs == [] and step > 1:
                alpha = min(alpha, 1.0)
        else:
            alpha = 1.0
        accepted = None
        for _ in range(opts.max_halvings):
            X = imm.samples + alpha * d
            cand = ImmersionField(X, imm.grid, imm.label)
            if immersion_margin(cand) > opts.floor:
                try:
                    trial = de(X)
                except (ValueError, FloatingPointError):
                    trial = None
                if trial is not None and np.isfinite(trial.E) and \
                        trial.E <= ev.E + opts.armijo_c * alpha * slope:
                    accepted = (cand, trial)
                    break
            alpha *= opts.shrink
        if accepted is None:
            message = "line search failed"
            break
        cand, trial = accepted
        gnew = pre.project(trial.grad)
        s_, y_ = alpha * d, gnew - g
        sy = float(np.sum(s_ * y_))
        if sy > 1e-12 * math.sqrt(float(np.sum(s_ * s_)) * float(np.sum(y_ * y_))):
            pairs.append((s_, y_, 1.0 / sy))
            if len(pairs) > opts.memory:
                pairs.pop(0)
        imm, ev = cand, trial
        cache = build_geometry(imm)
        jump = 0.0
        if cache.conformality_residual > opts.gauge_threshold:
            before = ev.E
            imm, _ = restore_conformal_gauge(imm)
            pre = _Preconditioner(imm.grid, opts.smoothing)
            # resampling aliases into the top modes; keep the iterate in band
            imm = imm.with_samples(pre.project(imm.samples))
            cache = build_geometry(imm)
            de = discrete_energy(imm.grid, 3)
            ev = de(imm.samples)
            pairs.clear()
            restorations += 1
            jump = ev.E - before
            if ev.E > before * (1 + opts.restore_slack):
                raise DescentError(f"gauge restoration raised the energy by {ev.E - before:.3e}")
        el = density_norm(cache, ev.grad / imm.grid.jacobian)
        if opts.check_class_every and step % opts.check_class_every == 0:
            label = _label(imm)
            if label != label0:
                raise DescentError(f"class label flipped from {label0} to {label} at step {step}")
        record(step, ev, el, cache, label, jump)
        if el <= opts.grad_tol * el0:
            converged = True
            message = "gradient tolerance reached"
            break
    if opts.check_class_every:
        label = _label(imm)
        if label != label0:
            raise DescentError(f"class label flipped from {label0} to {label}")
        traj[-1]["class_label"] = label
    return DescentState(imm, ev, el, step, label, cache.conformality_residual, traj,
                        restorations, converged, message)


def trajectory_summary(trajectory: list) -> dict:
    """Monotonicity and reduction diagnostics of a descent trajectory.

    An accepted step must not raise the energy. A gauge restoration changes
    the chart but not the surface, so its ``restore_jump`` (a discretisation
    effect) is reported separately rather than counted as a step.
    """
    F = [r["F"] for r in trajectory]
    steps = [F[k] - trajectory[k].get("restore_jump", 0.0) - F[k - 1] for k in range(1, len(F))]
    jumps = [r.get("restore_jump", 0.0) for r in trajectory]
    labels = {r["class_label"] for r in trajectory}
    el0, el1 = trajectory[0]["EL_residual"], trajectory[-1]["EL_residual"]
    return {
        "monotone": all(s <= 0.0 for s in steps),
        "max_step_increase": max(steps, default=0.0),
        "max_restore_jump": max(jumps, default=0.0),
        "restorations": sum(1 for j in jumps if j != 0.0),
        "el_reduction": el0 / el1 if el1 > 0 else math.inf,
        "class_constant": len(labels) == 1,
        "F_final": F[-1],
    }
