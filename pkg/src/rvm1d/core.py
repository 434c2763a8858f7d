"""Shared conventions: species, grid, run configuration, relativistic kinematics.

Units have the speed of light equal to one. Momenta ``v = (v1, v2)`` are
the particle variables; the physical velocity is ``v / sqrt(m^2 + |v|^2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class ConfigError(ValueError):
    """Raised when a run configuration violates one or more invariants.

    ``violations`` is a list of ``(code, message)`` pairs, one per broken
    invariant, so callers can report every problem at once.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        msg = "; ".join(f"{code}: {text}" for code, text in self.violations)
        super().__init__(msg)

    @property
    def codes(self):
        return [code for code, _ in self.violations]


class UnknownKeyError(ConfigError):
    def __init__(self, key, where="config"):
        self.key = key
        super().__init__([("unknown-key", f"unknown key {key!r} in {where}")])


@dataclass(frozen=True)
class SpeciesSpec:
    label: str
    mass: float
    charge: float

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"species {self.label!r}: mass must be positive, got {self.mass}")
        if self.charge == 0:
            raise ValueError(f"species {self.label!r}: charge must be nonzero")


@dataclass(frozen=True)
class Grid:
    """Node-centred uniform grid with ``n_cells + 1`` nodes on [x_min, x_max]."""

    x_min: float
    x_max: float
    n_cells: int

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def n_nodes(self) -> int:
        return self.n_cells + 1

    @property
    def nodes(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_nodes)

    def locate(self, x):
        """Cell index and fractional offset of positions ``x``.

        Raises ``ParticleOutOfDomain`` when any position is outside
        [x_min, x_max).
        """
        s = (np.asarray(x, dtype=float) - self.x_min) / self.dx
        idx = np.floor(s).astype(np.int64)
        bad = (idx < 0) | (idx >= self.n_cells)
        if np.any(bad):
            where = np.flatnonzero(bad)
            raise ParticleOutOfDomain(np.asarray(x)[where[:5]], self)
        return idx, s - idx

    def trapezoid(self, values) -> float:
        v = np.asarray(values, dtype=float)
        return float(self.dx * (v.sum() - 0.5 * (v[0] + v[-1])))


class ParticleOutOfDomain(RuntimeError):
    def __init__(self, positions, grid: Grid):
        self.positions = np.asarray(positions)
        super().__init__(
            f"particle(s) left the domain [{grid.x_min}, {grid.x_max}): "
            f"x = {self.positions.tolist()}"
        )


@dataclass(frozen=True)
class SimConfig:
    x_min: float
    x_max: float
    n_cells: int
    dt: float
    t_final: float
    particles_per_species: int | tuple = 20000  # node budget or explicit (n_x, n_v1, n_v2)
    rng_seed: int = 0
    diagnostic_stride: int = 1
    cone_anchors: tuple = ()
    tracer_count: int = 0
    support_radius_C0: float = 1.0
    snapshot_stride: int = 0

    @property
    def grid(self) -> Grid:
        return Grid(self.x_min, self.x_max, self.n_cells)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def n_steps(self) -> int:
        # tolerate t_final values that are a multiple of dt up to roundoff
        return int(math.ceil(self.t_final / self.dt - 1e-9)) if self.t_final > 0 else 0


def validate_config(cfg: SimConfig, species: Sequence[SpeciesSpec] | None = None) -> SimConfig:
    """Check every SimConfig invariant and return ``cfg`` unchanged on success.

    All violations are collected before raising a single ``ConfigError``.
    """
    problems = []
    if not cfg.x_max > cfg.x_min:
        problems.append(("empty-domain", f"x_max={cfg.x_max} must exceed x_min={cfg.x_min}"))
    if cfg.n_cells < 1:
        problems.append(("bad-n-cells", f"n_cells={cfg.n_cells} must be a positive integer"))
    if cfg.t_final < 0:
        problems.append(("negative-t-final", f"t_final={cfg.t_final} must be >= 0"))
    pps = cfg.particles_per_species
    if (min(pps) if isinstance(pps, (tuple, list)) else pps) < 1:
        problems.append(("bad-particle-count", "particles_per_species must be positive"))
    if cfg.diagnostic_stride < 1:
        problems.append(("bad-stride", "diagnostic_stride must be positive"))
    if cfg.tracer_count < 0:
        problems.append(("bad-tracer-count", "tracer_count must be nonnegative"))
    if not cfg.support_radius_C0 > 0:
        problems.append(("bad-support-radius", "support_radius_C0 must be positive"))
    if species is not None and len(species) == 0:
        problems.append(("empty-species", "at least one particle species is required"))

    if cfg.x_max > cfg.x_min and cfg.n_cells >= 1:
        dx = cfg.dx
        if abs(cfg.dt - dx) > 1e-12 * dx:
            problems.append(("dt-neq-dx", f"dt={cfg.dt!r} must equal the cell width {dx!r}"))
        reach = cfg.support_radius_C0 + cfg.t_final + 2 * dx
        if cfg.x_min > -reach or cfg.x_max < reach:
            problems.append((
                "domain-too-small",
                f"support radius {cfg.support_radius_C0} + t_final {cfg.t_final} reaches "
                f"|x| = {reach:.6g}, outside [{cfg.x_min}, {cfg.x_max}]",
            ))
        for T, xa in cfg.cone_anchors:
            if T < 0 or T > cfg.t_final:
                problems.append(("bad-cone-anchor", f"anchor time {T} not in [0, t_final]"))
            elif xa - T < cfg.x_min or xa + T > cfg.x_max:
                problems.append(("cone-foot-outside-domain", f"cone base of ({T}, {xa}) leaves the domain"))
    if problems:
        raise ConfigError(problems)
    return cfg


def lorentz_factor_energy(v1, v2, mass):
    """sqrt(m^2 + |v|^2), the particle energy."""
    return np.sqrt(mass * mass + v1 * v1 + v2 * v2)


def relativistic_velocity(v1, v2, mass):
    """Return (v̂1, v̂2) = v / sqrt(m^2 + |v|^2); works elementwise on arrays."""
    g = lorentz_factor_energy(v1, v2, mass)
    return v1 / g, v2 / g


def energy_minus_v1(v1, v2, mass):
    """sqrt(m^2+|v|^2) - v1 without cancellation for large positive v1."""
    v1 = np.asarray(v1, dtype=float)
    g = lorentz_factor_energy(v1, v2, mass)
    with np.errstate(divide="ignore", invalid="ignore"):
        alt = (mass * mass + np.square(v2)) / (g + v1)
    return np.where(v1 > 0, alt, g - v1)


def energy_plus_v1(v1, v2, mass):
    """sqrt(m^2+|v|^2) + v1, the mirror of ``energy_minus_v1``."""
    return energy_minus_v1(-np.asarray(v1, dtype=float), v2, mass)
