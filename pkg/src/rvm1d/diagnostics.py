"""Conservation-law and support diagnostics evaluated on simulation snapshots.

Everything here is a pure function of (particles, fields, grid) at one step,
or a small accumulator fed one snapshot per step. Quantities that the
energy identities need in differences such as e - m are deposited directly
from stable per-particle expressions instead of being formed by subtraction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Grid, energy_minus_v1, energy_plus_v1
from .fields import cumulative_trapezoid
from .particles import deposit_weights


class DiagnosticDomainError(ValueError):
    def __init__(self, code, message):
        self.code = code
        super().__init__(f"{code}: {message}")


class FitError(ValueError):
    def __init__(self, code, message):
        self.code = code
        super().__init__(f"{code}: {message}")


def interpolate_at(grid: Grid, values, y, code="cone-foot-outside-domain"):
    """Linear interpolation of node values at a point y in [x_min, x_max]."""
    s = (y - grid.x_min) / grid.dx
    if s < -1e-9 or s > grid.n_cells + 1e-9:
        raise DiagnosticDomainError(code, f"y={y} outside [{grid.x_min}, {grid.x_max}]")
    k = min(max(int(math.floor(s)), 0), grid.n_cells - 1)
    phi = s - k
    return float((1.0 - phi) * values[k] + phi * values[k + 1])


def integrate_interval(grid: Grid, values, a, b, code="window-outside-domain"):
    """Exact integral over [a, b] of the piecewise-linear interpolant of ``values``."""
    values = np.asarray(values, dtype=float)
    Q = cumulative_trapezoid(values, grid.dx)

    def F(y):
        s = (y - grid.x_min) / grid.dx
        if s < -1e-9 or s > grid.n_cells + 1e-9:
            raise DiagnosticDomainError(code, f"y={y} outside [{grid.x_min}, {grid.x_max}]")
        k = min(max(int(math.floor(s)), 0), grid.n_cells - 1)
        phi = min(max(s - k, 0.0), 1.0)
        return Q[k] + grid.dx * (phi * values[k] + 0.5 * phi * phi * (values[k + 1] - values[k]))

    return float(F(b) - F(a))


@dataclass
class MomentsRecord:
    k: np.ndarray
    sigma_p: np.ndarray
    sigma_m: np.ndarray
    n: np.ndarray


@dataclass
class DensitiesRecord:
    """Energy (e), momentum (m) and stress (l) densities plus their stable combinations."""

    grid: Grid
    e: np.ndarray
    m: np.ndarray
    l: np.ndarray
    e_minus_m: np.ndarray
    e_plus_m: np.ndarray
    e_minus_2m_plus_l: np.ndarray
    e_plus_2m_plus_l: np.ndarray
    particle: dict
    field: dict

    def moments(self) -> MomentsRecord:
        sp = self.particle["e_plus_m"]
        sm = self.particle["e_minus_m"]
        return MomentsRecord(k=0.5 * (sp + sm), sigma_p=sp, sigma_m=sm, n=self.particle["n"])

    @property
    def total_energy(self):
        return self.grid.trapezoid(self.e)

    @property
    def total_momentum(self):
        return self.grid.trapezoid(self.m)


_PARTICLE_KEYS = ("n", "e", "m", "l", "e_minus_m", "e_plus_m", "e_minus_2m_plus_l", "e_plus_2m_plus_l")


def particle_density_columns(p):
    g = p.energy
    emv = energy_minus_v1(p.v1, p.v2, p.species.mass)
    epv = energy_plus_v1(p.v1, p.v2, p.species.mass)
    w = p.w
    return [w, w * g, w * p.v1, w * p.v1 * p.v1 / g, w * emv, w * epv, w * emv * emv / g, w * epv * epv / g]


def compute_densities(particles, fields, workers=1) -> DensitiesRecord:
    grid = fields.grid
    acc = np.zeros((len(_PARTICLE_KEYS), grid.n_nodes))
    for p in particles:
        acc += deposit_weights(grid, p.x, particle_density_columns(p), workers)
    part = dict(zip(_PARTICLE_KEYS, acc))
    E1, E2, B, Gp, Gm = fields.E1, fields.E2, fields.B, fields.Gp, fields.Gm
    half_e1 = 0.5 * E1 * E1
    fld = {
        "e": half_e1 + 0.5 * (E2 * E2 + B * B),
        "m": E2 * B,
        "l": -half_e1 + 0.5 * (E2 * E2 + B * B),
        "e_minus_m": half_e1 + 0.5 * Gm * Gm,
        "e_plus_m": half_e1 + 0.5 * Gp * Gp,
        "e_minus_2m_plus_l": Gm * Gm,
        "e_plus_2m_plus_l": Gp * Gp,
    }
    combined = {k: part[k] + fld[k] for k in fld}
    return DensitiesRecord(grid=grid, particle=part, field=fld, **combined)


def _box_residual(a_old, a_new, f_old, f_new, dt, dx):
    # centred at cell midpoints in both space and time
    dadt = (a_new[1:] + a_new[:-1] - a_old[1:] - a_old[:-1]) / (2.0 * dt)
    dfdx = (f_new[1:] + f_old[1:] - f_new[:-1] - f_old[:-1]) / (2.0 * dx)
    return dadt + dfdx


def conservation_residuals(old: DensitiesRecord, new: DensitiesRecord, dt):
    """Max-norm residuals of ∂t e + ∂x m and ∂t m + ∂x l on the space-time box stencil."""
    dx = new.grid.dx
    r1 = _box_residual(old.e, new.e, old.m, new.m, dt, dx)
    r2 = _box_residual(old.m, new.m, old.l, new.l, dt, dx)
    return float(np.max(np.abs(r1))), float(np.max(np.abs(r2)))


class ConeAccumulator:
    """Running flux integrals along the two sides of the backward cone from (T, x).

    The integrands (e - m) on the rightgoing side x - T + τ and (e + m) on the
    leftgoing side x + T - τ are sampled once per step by linear
    interpolation and summed with trapezoid weights. T is rounded to a whole
    number of steps.
    """

    def __init__(self, T, x, dt, initial: DensitiesRecord):
        self.T_requested = T
        self.x = x
        self.dt = dt
        self.n_steps = int(round(T / dt))
        self.T = self.n_steps * dt
        grid = initial.grid
        for y in (x - self.T, x + self.T):
            if y < grid.x_min - 1e-9 or y > grid.x_max + 1e-9:
                raise DiagnosticDomainError("cone-foot-outside-domain", f"cone of ({T}, {x}) leaves the grid")
        self.initial_cone_energy = integrate_interval(grid, initial.e, x - self.T, x + self.T,
                                                      code="cone-foot-outside-domain")
        self.left_integral = 0.0
        self.right_integral = 0.0
        self._prev = None
        self.steps_seen = 0

    @property
    def done(self):
        return self.steps_seen > self.n_steps

    def sample(self, dens: DensitiesRecord, n):
        tau = n * self.dt
        left = interpolate_at(dens.grid, dens.e_minus_m, self.x - self.T + tau)
        right = interpolate_at(dens.grid, dens.e_plus_m, self.x + self.T - tau)
        return left, right

    def update(self, dens: DensitiesRecord, n):
        if n > self.n_steps:
            return self
        cur = self.sample(dens, n)
        if self._prev is not None:
            self.left_integral += 0.5 * self.dt * (self._prev[0] + cur[0])
            self.right_integral += 0.5 * self.dt * (self._prev[1] + cur[1])
        self._prev = cur
        self.steps_seen = n + 1
        return self

    @property
    def residual(self):
        return self.left_integral + self.right_integral - self.initial_cone_energy

    @property
    def relative_error(self):
        if self.initial_cone_energy == 0:
            return abs(self.residual)
        return abs(self.residual) / self.initial_cone_energy


def update_cone(acc: ConeAccumulator, dens: DensitiesRecord, n):
    return acc.update(dens, n)


class SegmentTracker:
    """Both sides of the moving-segment energy balances through x0 ± τ.

    Right segment: ∫_{x0}^{C0}(e-m)(0) = ∫_0^t (e-2m+l)(τ, x0+τ)dτ + ∫_{x0+t}^{C0+t}(e-m)(t).
    Left segment:  ∫_{-C0}^{x0}(e+m)(0) = ∫_0^t (e+2m+l)(τ, x0-τ)dτ + ∫_{-C0-t}^{x0-t}(e+m)(t).
    The edge fluxes along ±(C0 + τ), which should vanish, are integrated as well.
    """

    def __init__(self, x0, C0, dt, initial: DensitiesRecord):
        self.x0, self.C0, self.dt = x0, C0, dt
        g = initial.grid
        self.lhs_right = integrate_interval(g, initial.e_minus_m, x0, C0)
        self.lhs_left = integrate_interval(g, initial.e_plus_m, -C0, x0)
        self.path_right = self.path_left = 0.0
        self.edge_right = self.edge_left = 0.0
        self._prev = None
        self.t = 0.0

    def _sample(self, dens, tau):
        g = dens.grid
        return (interpolate_at(g, dens.e_minus_2m_plus_l, self.x0 + tau, "window-outside-domain"),
                interpolate_at(g, dens.e_plus_2m_plus_l, self.x0 - tau, "window-outside-domain"),
                interpolate_at(g, dens.e_minus_2m_plus_l, self.C0 + tau, "window-outside-domain"),
                interpolate_at(g, dens.e_plus_2m_plus_l, -self.C0 - tau, "window-outside-domain"))

    def update(self, dens: DensitiesRecord, n):
        tau = n * self.dt
        cur = self._sample(dens, tau)
        if self._prev is not None:
            h = 0.5 * self.dt
            self.path_right += h * (self._prev[0] + cur[0])
            self.path_left += h * (self._prev[1] + cur[1])
            self.edge_right += h * (self._prev[2] + cur[2])
            self.edge_left += h * (self._prev[3] + cur[3])
        self._prev = cur
        self.t = tau
        g = dens.grid
        self.window_right = integrate_interval(g, dens.e_minus_m, self.x0 + tau, self.C0 + tau)
        self.window_left = integrate_interval(g, dens.e_plus_m, -self.C0 - tau, self.x0 - tau)
        return self

    def errors(self):
        rhs_r = self.path_right + self.window_right - self.edge_right
        rhs_l = self.path_left + self.window_left - self.edge_left
        err_r = abs(self.lhs_right - rhs_r) / abs(self.lhs_right) if self.lhs_right else abs(rhs_r)
        err_l = abs(self.lhs_left - rhs_l) / abs(self.lhs_left) if self.lhs_left else abs(rhs_l)
        return err_r, err_l


def segment_identities(history, x0, C0, dt):
    """Relative errors of both segment balances after feeding consecutive per-step records."""
    history = list(history)
    tracker = SegmentTracker(x0, C0, dt, history[0])
    for n, dens in enumerate(history):
        tracker.update(dens, n)
    return tracker.errors(), tracker


@dataclass
class NondecayRecord:
    t: float
    mu: float
    calE: float
    floor: float
    window: tuple
    tail: float
    rho_max: float


def compute_nondecay(moments, dens: DensitiesRecord, t, x0, C0, floor) -> NondecayRecord:
    """Charge μ(t) and (e-m)-energy ℰ(t) in the window [x0 + t, C0 + t]."""
    g = dens.grid
    a, b = x0 + t, C0 + t
    if a < g.x_min or b > g.x_max:
        raise DiagnosticDomainError("window-outside-domain", f"window [{a}, {b}] leaves the grid")
    rho = moments.rho
    mu = integrate_interval(g, rho, a, b)
    calE = integrate_interval(g, dens.e_minus_m, a, b)
    tail = integrate_interval(g, np.abs(rho), b, g.x_max)
    return NondecayRecord(t=t, mu=mu, calE=calE, floor=floor, window=(a, b), tail=tail,
                          rho_max=float(np.max(rho)))


def compute_moments_k_sigma(particles, grid: Grid, workers=1) -> MomentsRecord:
    """k = ∫Σ f ε, σ± = ∫Σ f (ε ± v1), n = ∫Σ f, with k formed as (σ+ + σ-)/2."""
    acc = np.zeros((3, grid.n_nodes))
    for p in particles:
        emv = energy_minus_v1(p.v1, p.v2, p.species.mass)
        epv = energy_plus_v1(p.v1, p.v2, p.species.mass)
        acc += deposit_weights(grid, p.x, [p.w, p.w * epv, p.w * emv], workers)
    n, sp, sm = acc
    return MomentsRecord(k=0.5 * (sp + sm), sigma_p=sp, sigma_m=sm, n=n)


def lemma51_ratio(moments: MomentsRecord) -> float:
    """max n / sqrt(k σ-) over nodes where n exceeds 1e-12 of its maximum (0 for an empty grid)."""
    n = moments.n
    top = float(np.max(n)) if n.size else 0.0
    if not top > 0:
        return 0.0
    mask = n > 1e-12 * top
    return float(np.max(n[mask] / np.sqrt(moments.k[mask] * moments.sigma_m[mask])))


@dataclass
class SupportRecord:
    t: float
    max_v1: float
    max_v2: float
    ratio_v2: float
    ratio_v1: float


def support_radii(particles, t, C0) -> SupportRecord:
    """Momentum-support radii and their values relative to the growth envelopes.

    ratio_v2 uses 1 + sqrt(t - |X| + C0); ratio_v1 uses
    1 + t^(1/2) (t - |X| + 2 C0)^(1/4). Both are maxima over particles.
    """
    mv1 = mv2 = rv1 = rv2 = 0.0
    for p in particles:
        live = p.w > 0
        if not np.any(live):
            continue
        X, a1, a2 = p.x[live], np.abs(p.v1[live]), np.abs(p.v2[live])
        mv1 = max(mv1, float(a1.max()))
        mv2 = max(mv2, float(a2.max()))
        lag = t - np.abs(X)
        rv2 = max(rv2, float(np.max(a2 / (1.0 + np.sqrt(np.maximum(0.0, lag + C0))))))
        env = 1.0 + math.sqrt(t) * np.maximum(0.0, lag + 2 * C0) ** 0.25
        rv1 = max(rv1, float(np.max(a1 / env)))
    return SupportRecord(t=t, max_v1=mv1, max_v2=mv2, ratio_v2=rv2, ratio_v1=rv1)


@dataclass
class DilationRecord:
    t: float
    D: float
    RHS: float
    particle_xv: float
    field_xEB: float
    particle_vv: float
    x_rho_E1: float
    x_rho_E1_alt: float
    transverse_energy: float


def dilation_identity(particles, fields, moments, t=0.0) -> DilationRecord:
    """D = ∬ f x v1 + ∫ x E2 B and its predicted rate ∬ f v1 v̂1 + ∫ x ρ E1 + ½∫(B² + E2²)."""
    g = fields.grid
    x = g.nodes
    pxv = sum(float(np.sum(p.w * p.x * p.v1)) for p in particles)
    pvv = sum(float(np.sum(p.w * p.v1 * p.velocity[0])) for p in particles)
    E1, E2, B = fields.E1, fields.E2, fields.B
    fxeb = g.trapezoid(x * E2 * B)
    xre = g.trapezoid(x * moments.rho * E1)
    M = g.trapezoid(moments.rho)
    alt = 0.5 * g.trapezoid(0.25 * M * M - E1 * E1)
    trans = 0.5 * g.trapezoid(B * B + E2 * E2)
    return DilationRecord(t=t, D=pxv + fxeb, RHS=pvv + xre + trans, particle_xv=pxv, field_xEB=fxeb,
                          particle_vv=pvv, x_rho_E1=xre, x_rho_E1_alt=alt, transverse_energy=trans)


@dataclass
class GrowthFit:
    exponent: float
    amplitude: float
    n_samples: int
    window: tuple


def default_window(t):
    """Final 80% of the run measured in log-time."""
    t = np.asarray(t, dtype=float)
    pos = t[t > 0]
    if pos.size == 0:
        raise FitError("window-too-small", "no positive sample times")
    lo, hi = math.log(pos[0]), math.log(pos[-1])
    return math.exp(hi - 0.8 * (hi - lo)), float(pos[-1])


def fit_growth_exponent(t, y, window=None) -> GrowthFit:
    """Least-squares slope p and amplitude a of log y = log a + p log t over the window."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if window is None:
        window = default_window(t)
    ta, tb = window
    if not ta > 0:
        raise FitError("window-too-small", "window must start at t > 0")
    sel = (t >= ta - 1e-9) & (t <= tb + 1e-9)
    if sel.sum() < 5:
        raise FitError("window-too-small", f"only {int(sel.sum())} samples in [{ta}, {tb}]")
    ys = y[sel]
    if np.any(~(ys > 0)):
        raise FitError("nonpositive-values", "log-log fit needs y > 0 throughout the window")
    slope, intercept = np.polyfit(np.log(t[sel]), np.log(ys), 1)
    return GrowthFit(float(slope), float(math.exp(intercept)), int(sel.sum()), (float(ta), float(tb)))
