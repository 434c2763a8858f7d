"""Macro-particles: quiet-start sampling, the midpoint pusher, CIC deposition and tracers."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import Grid, SpeciesSpec, lorentz_factor_energy
from .scenarios import InitialData, ScenarioError

# Fixed chunk size for deposition. Partial grids are merged in chunk order, so
# the result does not depend on how many workers process the chunks.
DEPOSIT_CHUNK = 1 << 15

_executors: dict[int, ThreadPoolExecutor] = {}


def _executor(workers):
    if workers not in _executors:
        _executors[workers] = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="rvm1d")
    return _executors[workers]


@dataclass
class ParticleArray:
    species: SpeciesSpec
    x: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    w: np.ndarray

    def __len__(self):
        return len(self.x)

    @property
    def energy(self):
        return lorentz_factor_energy(self.v1, self.v2, self.species.mass)

    @property
    def velocity(self):
        g = self.energy
        return self.v1 / g, self.v2 / g

    def copy(self):
        return ParticleArray(self.species, self.x.copy(), self.v1.copy(), self.v2.copy(), self.w.copy())

    def replace_state(self, x, v1, v2):
        return ParticleArray(self.species, x, v1, v2, self.w)


def lattice_shape(count):
    """Split a node budget into (n_x, n_v, n_v); an explicit triple passes through."""
    if isinstance(count, (tuple, list)):
        nx, nv1, nv2 = (int(c) for c in count)
        if min(nx, nv1, nv2) < 1:
            raise ValueError("lattice sizes must be positive")
        return nx, nv1, nv2
    count = int(count)
    if count < 1:
        raise ValueError("count must be >= 1")
    nv = max(1, int(round((count / 8.0) ** (1.0 / 3.0))))
    return max(1, count // (nv * nv)), nv, nv


def _midpoints(lo, hi, n, shift):
    h = (hi - lo) / n
    return lo + h * (np.arange(n) + 0.5 + shift), h


def sample_from_density(data: InitialData, species_index: int, count, seed=None) -> ParticleArray:
    """Tensor midpoint nodes over each bump's support box, weight = density x node volume.

    Each bump's weights are then scaled by one common factor so they sum to
    the bump's exact mass.

    With ``seed`` set, each lattice axis is shifted by a seeded offset of at
    most half a node spacing; without it the lattice is centred.
    """
    species = data.species[species_index]
    if data.free_stream:
        ps = [p for p in data.free_particles if p.species_index == species_index]
        arr = [np.array([getattr(p, k) for p in ps], dtype=float) for k in ("x", "v1", "v2", "w")]
        return ParticleArray(species, *arr)

    bumps = data.profiles[species_index]
    if isinstance(count, (tuple, list)):
        per_bump = count
    else:
        per_bump = max(1, int(count) // max(1, len(bumps)))
    nx, nv1, nv2 = lattice_shape(per_bump)
    parts = []
    for b_index, b in enumerate(bumps):
        if seed is None:
            shift = np.zeros(3)
        else:
            rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, species_index, b_index])
            shift = rng.uniform(-0.5, 0.5, size=3)
        xs, hx = _midpoints(b.center_x - b.radius_x, b.center_x + b.radius_x, nx, shift[0])
        u1, h1 = _midpoints(b.center_v1 - b.radius_v, b.center_v1 + b.radius_v, nv1, shift[1])
        u2, h2 = _midpoints(b.center_v2 - b.radius_v, b.center_v2 + b.radius_v, nv2, shift[2])
        X, V1, V2 = np.meshgrid(xs, u1, u2, indexing="ij")
        w = b(X, V1, V2) * (hx * h1 * h2)
        keep = w > 0
        quad = w[keep].sum()
        if not quad > 0:
            raise ScenarioError("zero-mass-density", f"species {species.label!r}: bump {b_index} sampled to zero mass")
        # rescale to the analytic bump mass; relative weights keep the midpoint values
        parts.append((X[keep], V1[keep], V2[keep], w[keep] * (b.mass / quad)))
    x, v1, v2, w = (np.concatenate(cols) for cols in zip(*parts))
    return ParticleArray(species, x, v1, v2, w)


def neutralize_weights(particles):
    """Rescale the last species so the sampled net charge cancels to roundoff."""
    q = [p.species.charge * p.w.sum() for p in particles]
    last = particles[-1]
    factor = -sum(q[:-1]) / q[-1]
    out = list(particles[:-1])
    out.append(ParticleArray(last.species, last.x, last.v1, last.v2, last.w * factor))
    return out, factor


def _deposit_chunk(grid: Grid, x, columns):
    idx, frac = grid.locate(x)
    both = np.concatenate([idx, idx + 1])
    n = grid.n_nodes
    out = np.empty((len(columns), n))
    for k, c in enumerate(columns):
        out[k] = np.bincount(both, np.concatenate([c * (1.0 - frac), c * frac]), minlength=n)
    return out


def deposit_weights(grid: Grid, x, columns, workers=1):
    """CIC-deposit each weight column onto the nodes, returning densities (per unit length).

    The partition of unity makes the trapezoid integral of each row equal the
    column sum whenever no particle sits in the first or last cell.
    """
    x = np.asarray(x, dtype=float)
    columns = [np.asarray(c, dtype=float) for c in columns]
    total = np.zeros((len(columns), grid.n_nodes))
    if x.size == 0:
        return total
    bounds = range(0, x.size, DEPOSIT_CHUNK)
    tasks = [(x[s:s + DEPOSIT_CHUNK], [c[s:s + DEPOSIT_CHUNK] for c in columns]) for s in bounds]
    if workers > 1 and len(tasks) > 1:
        partial = list(_executor(workers).map(lambda t: _deposit_chunk(grid, *t), tasks))
    else:
        partial = [_deposit_chunk(grid, *t) for t in tasks]
    for p in partial:
        total += p
    return total / grid.dx


def gather(grid: Grid, values, x):
    idx, frac = grid.locate(x)
    values = np.asarray(values)
    return (1.0 - frac) * values[idx] + frac * values[idx + 1]


@dataclass
class MomentGrid:
    grid: Grid
    labels: tuple
    rho_s: np.ndarray  # (n_species, n_nodes)
    j1_s: np.ndarray
    j2_s: np.ndarray

    @property
    def rho(self):
        return self.rho_s.sum(axis=0)

    @property
    def j1(self):
        return self.j1_s.sum(axis=0)

    @property
    def j2(self):
        return self.j2_s.sum(axis=0)


def deposit_moments(particles, grid: Grid, workers=1) -> MomentGrid:
    """Charge density and current (ρ, j1, j2), per species and summed."""
    n = grid.n_nodes
    rho, j1, j2 = (np.zeros((len(particles), n)) for _ in range(3))
    for s, p in enumerate(particles):
        qw = p.species.charge * p.w
        vh1, vh2 = p.velocity
        rho[s], j1[s], j2[s] = deposit_weights(grid, p.x, [qw, qw * vh1, qw * vh2], workers)
    return MomentGrid(grid, tuple(p.species.label for p in particles), rho, j1, j2)


def characteristic_rhs(p: ParticleArray, E1, E2, B):
    """Right-hand side of the characteristic system for one species."""
    vh1, vh2 = p.velocity
    q = p.species.charge
    return vh1, q * (E1 + vh2 * B), q * (E2 - vh1 * B)


def _gathered(fields, p):
    grid = fields.grid
    idx, frac = grid.locate(p.x)

    def at(a):
        return (1.0 - frac) * a[idx] + frac * a[idx + 1]
    return at(fields.E1), at(fields.E2), at(fields.B)


def push_step(particles, fields, dt, midpoint_fields=None):
    """Advance every species by one explicit-midpoint step.

    ``fields`` supplies the force at the start of the step. ``midpoint_fields``
    is either a field state for the half step or a callable receiving the
    half-advanced particles and returning one; by default ``fields`` is reused.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    half = []
    for p in particles:
        dx_, dv1, dv2 = characteristic_rhs(p, *_gathered(fields, p))
        half.append(p.replace_state(p.x + 0.5 * dt * dx_, p.v1 + 0.5 * dt * dv1, p.v2 + 0.5 * dt * dv2))
    if midpoint_fields is None:
        mid = fields
    elif callable(midpoint_fields):
        mid = midpoint_fields(half)
    else:
        mid = midpoint_fields
    out = []
    for p, h in zip(particles, half):
        dx_, dv1, dv2 = characteristic_rhs(h, *_gathered(mid, h))
        new = p.replace_state(p.x + dt * dx_, p.v1 + dt * dv1, p.v2 + dt * dv2)
        # raises if the step carried anything off the grid
        mid.grid.locate(new.x)
        out.append(new)
    return out


@dataclass
class TracerSet:
    members: list  # (species_index, particle_index)
    rows: list = field(default_factory=list)

    columns = ("t", "species", "index", "X", "V1", "V2", "I")


def choose_tracers(particles, count, seed) -> TracerSet:
    """Pick ``count`` particles uniformly without replacement, reproducibly."""
    sizes = [len(p) for p in particles]
    total = sum(sizes)
    count = min(int(count), total)
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, 0x7AC3])
    flat = np.sort(rng.choice(total, size=count, replace=False)) if count else np.array([], int)
    offsets = np.cumsum([0] + sizes)
    members = []
    for g in flat:
        s = int(np.searchsorted(offsets, g, side="right") - 1)
        members.append((s, int(g - offsets[s])))
    return TracerSet(members)


def record_tracers(tracers: TracerSet, particles, fields, t):
    """Append (t, X, V1, V2, I = V2 + e A(t, X)) for every tracer."""
    A = fields.A
    rows = []
    for s, i in tracers.members:
        p = particles[s]
        X = p.x[i]
        a = float(gather(fields.grid, A, np.array([X]))[0])
        rows.append((t, p.species.label, i, float(X), float(p.v1[i]), float(p.v2[i]),
                     float(p.v2[i] + p.species.charge * a)))
    tracers.rows.extend(rows)
    return rows
