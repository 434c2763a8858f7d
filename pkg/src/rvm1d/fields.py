"""Self-consistent fields on the node grid.

E1 comes straight from the cumulative charge. The transverse pair is carried
as the light-cone scalars G+ = E2 + B (moving right) and G- = E2 - B (moving
left), which satisfy (d/dt ± d/dx) G± = -j2; with dt = dx each update is an
exact one-node shift plus a trapezoid source term.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import Grid


class CFLViolation(ValueError):
    pass


def cumulative_trapezoid(values, dx):
    """Running trapezoid integral from the first node; starts at 0."""
    v = np.asarray(values, dtype=float)
    out = np.empty_like(v)
    out[0] = 0.0
    np.cumsum(0.5 * dx * (v[1:] + v[:-1]), out=out[1:])
    return out


@dataclass
class FieldState:
    grid: Grid
    E1: np.ndarray
    Gp: np.ndarray
    Gm: np.ndarray

    @property
    def E2(self):
        return 0.5 * (self.Gp + self.Gm)

    @property
    def B(self):
        return 0.5 * (self.Gp - self.Gm)

    @cached_property
    def A(self):
        return vector_potential(self.B, self.grid.dx)

    @classmethod
    def zeros(cls, grid: Grid):
        z = np.zeros(grid.n_nodes)
        return cls(grid, z.copy(), z.copy(), z.copy())

    @classmethod
    def from_E2_B(cls, grid: Grid, E1, E2, B):
        E2 = np.asarray(E2, dtype=float)
        B = np.asarray(B, dtype=float)
        return cls(grid, np.asarray(E1, dtype=float), E2 + B, E2 - B)


def solve_E1(rho, dx, M_total=None):
    """E1 = ½∫_{-∞}^x ρ - ½∫_x^∞ ρ, i.e. Q_left(x) - M_total/2.

    With ``M_total=None`` the grid total is used, so the last node carries
    exactly half of the full cumulative sum.
    """
    q_left = cumulative_trapezoid(rho, dx)
    if M_total is None:
        M_total = q_left[-1]
    return q_left - 0.5 * M_total


def step_light_cone(Gp, Gm, j2_start, j2_end, dt, dx):
    """One CFL-1 step of G± along their characteristics; inflow nodes receive 0."""
    if abs(dt - dx) > 1e-12 * dx:
        raise CFLViolation(f"cfl-violated: dt={dt!r} != dx={dx!r}")
    Gp_new = np.empty_like(Gp)
    Gm_new = np.empty_like(Gm)
    Gp_new[0] = 0.0
    Gm_new[-1] = 0.0
    Gp_new[1:] = Gp[:-1] - dt * 0.5 * (j2_start[:-1] + j2_end[1:])
    Gm_new[:-1] = Gm[1:] - dt * 0.5 * (j2_start[1:] + j2_end[:-1])
    return Gp_new, Gm_new


def vector_potential(B, dx):
    """A(x) = ∫_{x_min}^x B, with A(x_min) = 0."""
    return cumulative_trapezoid(B, dx)


def continuity_residual(moments_old, moments_new, dt):
    """Max over interior nodes of |(E1_new - E1_old)/dt + mean(j1)|.

    E1 is rebuilt from each moment grid's own ρ.
    """
    dx = moments_new.grid.dx
    e_old = solve_E1(moments_old.rho, dx)
    e_new = solve_E1(moments_new.rho, dx)
    r = (e_new - e_old) / dt + 0.5 * (moments_old.j1 + moments_new.j1)
    return float(np.max(np.abs(r[1:-1]))) if r.size > 2 else 0.0
