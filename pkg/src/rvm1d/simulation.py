"""The main time-stepping loop and the in-memory diagnostics ledger.

Per step: deposit moments, rebuild E1, predict j2 at the step end from the
half-pushed particles, advance G±, push with midpoint fields, then redo the
G± update with the deposited end-of-step current. Diagnostics observe the
state (particles, moments, fields) at the start of each step.
"""
from __future__ import annotations

import math
import time
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .core import SimConfig
from .diagnostics import (
    ConeAccumulator, SegmentTracker, compute_densities, compute_nondecay, conservation_residuals,
    dilation_identity, lemma51_ratio, support_radii,
)
from .fields import FieldState, continuity_residual, solve_E1, step_light_cone
from .particles import (
    TracerSet, choose_tracers, deposit_moments, neutralize_weights, push_step, record_tracers,
    sample_from_density,
)
from .scenarios import FloorReport, InitialData, evaluate_pulses


class RunAborted(RuntimeError):
    def __init__(self, step, phase, cause):
        self.step, self.phase, self.cause = step, phase, cause
        super().__init__(f"run aborted at step {step} during {phase}: {cause}")


def timeseries_columns(n_anchors):
    return (["t", "total_energy", "total_momentum", "r1", "r2"]
            + [f"cone_err_{i}" for i in range(n_anchors)]
            + ["mu", "calE", "floor", "max_v1", "max_v2", "ratio_v2", "ratio_v1", "lemma51",
               "D", "RHS", "continuity"])


@dataclass
class DiagnosticsLedger:
    columns: list
    rows: list = field(default_factory=list)
    segment_rows: list = field(default_factory=list)  # (t, err_right, err_left, edge_right, edge_left)
    nondecay_rows: list = field(default_factory=list)
    dilation_rows: list = field(default_factory=list)
    tracers: TracerSet | None = None
    cones: list = field(default_factory=list)
    plateau_right: list = field(default_factory=list)  # per step: E1 at last node
    plateau_left: list = field(default_factory=list)
    charge_from_weights: float = 0.0
    charge_scale: float = 0.0
    min_combinations: dict = field(default_factory=dict)
    weight_totals: list = field(default_factory=list)
    max_speed: float = 0.0
    max_abs_A: float = 0.0
    steps: int = 0

    def column(self, name):
        k = self.columns.index(name)
        return np.array([r[k] for r in self.rows], dtype=float)


@dataclass
class RunResult:
    config: SimConfig
    ledger: DiagnosticsLedger
    particles: list
    fields: FieldState
    initial_particles: list
    timings: dict
    floor: FloorReport | None
    data: InitialData
    version: str = __version__


def initial_particles(cfg: SimConfig, data: InitialData):
    parts = [sample_from_density(data, i, cfg.particles_per_species, seed=cfg.rng_seed)
             for i in range(len(data.species))]
    if data.kind == "neutral":
        parts, _ = neutralize_weights(parts)
    return parts


def initial_fields(cfg: SimConfig, data: InitialData) -> FieldState:
    grid = cfg.grid
    x = grid.nodes
    E2 = evaluate_pulses(data.E20, x)
    B = evaluate_pulses(data.B0, x)
    return FieldState.from_E2_B(grid, np.zeros(grid.n_nodes), E2, B)


def _track_minima(ledger, dens, moments):
    scale = max(float(np.max(np.abs(dens.e))), 1e-300)
    for name in ("e", "e_minus_m", "e_plus_m", "e_minus_2m_plus_l", "e_plus_2m_plus_l"):
        v = float(np.min(getattr(dens, name))) / scale
        ledger.min_combinations[name] = min(ledger.min_combinations.get(name, math.inf), v)
    for name in ("sigma_p", "sigma_m", "n"):
        v = float(np.min(getattr(moments, name))) / scale
        ledger.min_combinations[name] = min(ledger.min_combinations.get(name, math.inf), v)


def run_simulation(cfg: SimConfig, data: InitialData, floor: FloorReport | None = None, workers=1,
                   particles=None, snapshot_hook=None) -> RunResult:
    """Integrate from t = 0 to t_final and populate the diagnostics ledger.

    ``snapshot_hook(step, t, particles, fields)`` is called every
    ``snapshot_stride`` steps and at the final step when the stride is positive.
    """
    grid = cfg.grid
    dt, dx = cfg.dt, grid.dx
    free = data.free_stream
    mono = data.kind == "monocharge"
    timings = defaultdict(float)

    clock = time.perf_counter()
    parts = initial_particles(cfg, data) if particles is None else [p.copy() for p in particles]
    start_parts = [p.copy() for p in parts]
    fields0 = initial_fields(cfg, data)
    Gp, Gm = fields0.Gp, fields0.Gm
    timings["setup"] += time.perf_counter() - clock

    ledger = DiagnosticsLedger(columns=timeseries_columns(len(cfg.cone_anchors)))
    ledger.charge_from_weights = float(sum(p.species.charge * p.w.sum() for p in parts))
    ledger.charge_scale = float(sum(abs(p.species.charge) * p.w.sum() for p in parts))
    if cfg.tracer_count:
        ledger.tracers = choose_tracers(parts, cfg.tracer_count, cfg.rng_seed)

    C0 = cfg.support_radius_C0
    x0 = None
    if mono and floor is not None:
        x0 = floor.x0
    segments = None
    prev_dens = prev_moments = None
    n_steps = cfg.n_steps

    for n in range(n_steps + 1):
        t = n * dt
        phase = "deposit"
        try:
            clock = time.perf_counter()
            moments = deposit_moments(parts, grid, workers)
            timings["deposit"] += time.perf_counter() - clock

            phase = "fields"
            clock = time.perf_counter()
            if free:
                fields = FieldState.zeros(grid)
            else:
                fields = FieldState(grid, solve_E1(moments.rho, dx), Gp, Gm)
            timings["fields"] += time.perf_counter() - clock
            ledger.plateau_right.append(float(fields.E1[-1]))
            ledger.plateau_left.append(float(fields.E1[0]))

            phase = "diagnostics"
            clock = time.perf_counter()
            dens = compute_densities(parts, fields, workers)
            km = dens.moments()
            _track_minima(ledger, dens, km)
            if n == 0:
                ledger.cones = [ConeAccumulator(T, xa, dt, dens) for T, xa in cfg.cone_anchors]
                if x0 is not None:
                    segments = SegmentTracker(x0, C0, dt, dens)
            for acc in ledger.cones:
                acc.update(dens, n)
            if segments is not None:
                segments.update(dens, n)
            if prev_dens is not None:
                r1, r2 = conservation_residuals(prev_dens, dens, dt)
                cont = continuity_residual(prev_moments, moments, dt)
            else:
                r1 = r2 = cont = math.nan
            if n % cfg.diagnostic_stride == 0 or n == n_steps:
                _record_row(ledger, cfg, parts, fields, moments, dens, km, t, (r1, r2, cont),
                            segments, floor, x0, C0)
                ledger.max_abs_A = max(ledger.max_abs_A, float(np.max(np.abs(fields.A))))
                if ledger.tracers is not None:
                    record_tracers(ledger.tracers, parts, fields, t)
            if snapshot_hook and cfg.snapshot_stride and (n % cfg.snapshot_stride == 0 or n == n_steps):
                snapshot_hook(n, t, parts, fields)
            ledger.weight_totals.append([float(p.w.sum()) for p in parts])
            timings["diagnostics"] += time.perf_counter() - clock
            prev_dens, prev_moments = dens, moments
            if n == n_steps:
                break

            phase = "push"
            clock = time.perf_counter()
            if free:
                parts = push_step(parts, fields, dt)
            else:
                predicted = {}

                def midpoint(half):
                    m_half = deposit_moments(half, grid, workers)
                    j2_end = 2.0 * m_half.j2 - moments.j2
                    Gp1, Gm1 = step_light_cone(Gp, Gm, moments.j2, j2_end, dt, dx)
                    predicted["G"] = (Gp1, Gm1)
                    return FieldState(grid, solve_E1(m_half.rho, dx), 0.5 * (Gp + Gp1), 0.5 * (Gm + Gm1))

                parts = push_step(parts, fields, dt, midpoint)
            timings["push"] += time.perf_counter() - clock
            for p in parts:
                ledger.max_speed = max(ledger.max_speed, float(np.max(np.hypot(*p.velocity), initial=0.0)))

            if not free:
                phase = "fields"
                clock = time.perf_counter()
                end = deposit_moments(parts, grid, workers)
                # corrector: the G± trapezoid uses the deposited end-of-step current
                Gp, Gm = step_light_cone(Gp, Gm, moments.j2, end.j2, dt, dx)
                timings["fields"] += time.perf_counter() - clock
        except Exception as exc:  # noqa: BLE001 - rethrown with context
            raise RunAborted(n, phase, exc) from exc
        ledger.steps = n + 1

    return RunResult(cfg, ledger, parts, fields, start_parts, dict(timings), floor, data)


def _record_row(ledger, cfg, parts, fields, moments, dens, km, t, residuals, segments, floor, x0, C0):
    r1, r2, cont = residuals
    cones = []
    for acc in ledger.cones:
        cones.append(acc.relative_error if acc.done else math.nan)
    mu = calE = flo = math.nan
    if floor is not None and x0 is not None:
        nd = compute_nondecay(moments, dens, t, x0, C0, floor.floor)
        mu, calE, flo = nd.mu, nd.calE, nd.floor
        ledger.nondecay_rows.append(nd)
        err_r, err_l = segments.errors()
        ledger.segment_rows.append((t, err_r, err_l, segments.edge_right, segments.edge_left))
    sup = support_radii(parts, t, C0)
    dil = dilation_identity(parts, fields, moments, t)
    ledger.dilation_rows.append(dil)
    row = [t, dens.total_energy, dens.total_momentum, r1, r2, *cones, mu, calE, flo,
           sup.max_v1, sup.max_v2, sup.ratio_v2, sup.ratio_v1, lemma51_ratio(km), dil.D, dil.RHS, cont]
    ledger.rows.append(row)
