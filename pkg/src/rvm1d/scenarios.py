"""Initial data for the neutral, monocharge non-decay and free-stream runs.

Every density is a sum of quartic bumps

    g(x, v) = amplitude * h((x - cx) / rx) * h(|v - cv| / rv),   h(s) = (1 - s^2)^2 on |s| < 1,

which is C^1 with exact compact support.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .core import SpeciesSpec, UnknownKeyError, energy_minus_v1

# closed-form integrals of the profile: ∫h(s)ds over [-1,1] and ∫∫h(|u|)du over the unit disk
BUMP_LINE_INTEGRAL = 16.0 / 15.0
BUMP_DISK_INTEGRAL = math.pi / 3.0


class ScenarioError(ValueError):
    def __init__(self, code, message):
        self.code = code
        super().__init__(f"{code}: {message}")


class NoBoostFound(ScenarioError):
    def __init__(self, reason, reports=()):
        self.reason = reason
        self.reports = list(reports)
        super().__init__("none-found", reason)


def quartic_bump(s):
    s = np.asarray(s, dtype=float)
    return np.where(np.abs(s) < 1.0, np.square(1.0 - s * s), 0.0)


def quartic_bump_antiderivative(s):
    """∫_{-1}^{s} h(u) du, clipped to [-1, 1]."""
    s = np.clip(np.asarray(s, dtype=float), -1.0, 1.0)
    return s - 2.0 * s**3 / 3.0 + s**5 / 5.0 + 8.0 / 15.0


@dataclass(frozen=True)
class BumpProfile:
    center_x: float
    center_v1: float
    center_v2: float
    radius_x: float
    radius_v: float
    amplitude: float

    def __post_init__(self):
        if not (self.radius_x > 0 and self.radius_v > 0):
            raise ValueError("bump radii must be positive")
        if not self.amplitude > 0:
            raise ValueError("bump amplitude must be positive")

    def __call__(self, x, v1, v2):
        x = np.asarray(x, dtype=float)
        sx = (x - self.center_x) / self.radius_x
        r = np.hypot(np.asarray(v1, dtype=float) - self.center_v1,
                     np.asarray(v2, dtype=float) - self.center_v2) / self.radius_v
        lo, hi = self.x_interval
        # the rounded ratio can land just inside |s| < 1 at the support edge
        inside = (x > lo) & (x < hi)
        return np.where(inside, self.amplitude * quartic_bump(sx) * quartic_bump(r), 0.0)

    @property
    def mass(self) -> float:
        return self.amplitude * self.radius_x * BUMP_LINE_INTEGRAL * self.radius_v**2 * BUMP_DISK_INTEGRAL

    @property
    def x_interval(self):
        return self.center_x - self.radius_x, self.center_x + self.radius_x

    def mass_between(self, a, b) -> float:
        """Exact ∬ g over a <= x <= b."""
        lo = quartic_bump_antiderivative((a - self.center_x) / self.radius_x)
        hi = quartic_bump_antiderivative((b - self.center_x) / self.radius_x)
        return self.amplitude * self.radius_x * (hi - lo) * self.radius_v**2 * BUMP_DISK_INTEGRAL

    def shifted(self, dx=0.0, dv1=0.0, dv2=0.0) -> "BumpProfile":
        return replace(self, center_x=self.center_x + dx,
                       center_v1=self.center_v1 + dv1, center_v2=self.center_v2 + dv2)

    def scaled(self, factor) -> "BumpProfile":
        return replace(self, amplitude=self.amplitude * factor)


@dataclass(frozen=True)
class Pulse1D:
    """A C^1_0 field profile ``amplitude * h((x - center) / radius)``; amplitude may be negative."""

    center: float
    radius: float
    amplitude: float

    def __call__(self, x):
        return self.amplitude * quartic_bump((np.asarray(x, dtype=float) - self.center) / self.radius)


def evaluate_pulses(pulses, x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for p in pulses:
        out = out + p(x)
    return out


@dataclass(frozen=True)
class FreeParticle:
    species_index: int
    x: float
    v1: float
    v2: float
    w: float = 1.0


@dataclass(frozen=True)
class InitialData:
    species: tuple
    profiles: tuple = ()
    E20: tuple = ()
    B0: tuple = ()
    kind: str = "generic"
    free_particles: tuple = ()

    def __post_init__(self):
        if self.kind not in ("generic", "neutral", "monocharge", "free_stream"):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.kind != "free_stream" and len(self.profiles) != len(self.species):
            raise ValueError("need one profile list per species")
        if self.kind == "monocharge" and len(self.species) != 1:
            raise ValueError("the monocharge scenario has exactly one species")

    @property
    def free_stream(self) -> bool:
        return self.kind == "free_stream"

    @cached_property
    def C0(self) -> float:
        """Smallest radius outside which every density and field pulse vanishes."""
        if self.free_stream:
            r = max((abs(p.x) for p in self.free_particles), default=0.0)
            return float(np.nextafter(r, np.inf))
        ends = [abs(e) for bumps in self.profiles for b in bumps for e in b.x_interval]
        ends += [abs(p.center) + p.radius for p in (*self.E20, *self.B0)]
        return max(ends)

    def species_mass(self, index) -> float:
        if self.free_stream:
            return sum(p.w for p in self.free_particles if p.species_index == index)
        return sum(b.mass for b in self.profiles[index])

    @property
    def M_total(self) -> float:
        """Net charge ∬ Σ e^α f^α_0."""
        return sum(s.charge * self.species_mass(i) for i, s in enumerate(self.species))

    @property
    def M(self) -> float:
        """Total charge of a single-species run (the mass M for unit charge)."""
        return self.M_total

    def charge_scale(self) -> float:
        return sum(abs(s.charge) * self.species_mass(i) for i, s in enumerate(self.species))


def evaluate_f0(data: InitialData, species_index: int, x, v1, v2):
    if data.free_stream:
        raise ValueError("free-stream data are point particles and have no density")
    bumps = data.profiles[species_index]
    x = np.asarray(x, dtype=float)
    out = np.zeros(np.broadcast(x, np.asarray(v1), np.asarray(v2)).shape)
    for b in bumps:
        out = out + b(x, v1, v2)
    return out


def build_neutral(species, profiles, E20=(), B0=()) -> InitialData:
    """Two oppositely charged species; species 2 is rescaled to cancel the charge of species 1."""
    if len(species) != 2 or len(profiles) != 2:
        raise ValueError("build_neutral needs exactly two species and two profile lists")
    s1, s2 = species
    if np.sign(s1.charge) == np.sign(s2.charge):
        raise ScenarioError("inconsistent-signs", "neutral data need charges of opposite sign")
    q1 = s1.charge * sum(b.mass for b in profiles[0])
    q2 = s2.charge * sum(b.mass for b in profiles[1])
    factor = -q1 / q2
    second = tuple(b.scaled(factor) for b in profiles[1])
    return InitialData(species=(s1, s2), profiles=(tuple(profiles[0]), second),
                       E20=tuple(E20), B0=tuple(B0), kind="neutral")


def build_free_stream(particles, species) -> InitialData:
    """Point particles travelling with all forces switched off."""
    return InitialData(species=tuple(species), kind="free_stream",
                       free_particles=tuple(particles))


MONOCHARGE_SPECIES = SpeciesSpec("p", mass=1.0, charge=1.0)


@dataclass(frozen=True)
class NondecayParams:
    left: tuple
    right: tuple
    W: float
    x0: float = -1.0

    def __post_init__(self):
        if not self.left or not self.right:
            raise ValueError("both left and right profiles are required")
        for b in self.left:
            if b.x_interval[1] > -1.0:
                raise ValueError("left profiles must vanish for x >= -1")
        for b in self.right:
            lo, hi = b.x_interval
            if lo < -1.0 or hi > 0.0:
                raise ValueError("right profiles must be supported in (-1, 0)")
        if not self.W > 1:
            raise ValueError(f"boost W must exceed 1, got {self.W}")
        ml, mr = self.left_mass, self.right_mass
        if not (ml >= 2 * mr > 0):
            raise ValueError(f"need mass(left) >= 2 mass(right) > 0, got {ml:.6g}, {mr:.6g}")
        if not -self.C0 < self.x0 < self.C0:
            raise ValueError(f"x0={self.x0} must lie in (-C0, C0) = ({-self.C0}, {self.C0})")

    @property
    def C0(self) -> float:
        return max(-b.x_interval[0] for b in self.left)

    @property
    def left_mass(self) -> float:
        return sum(b.mass for b in self.left)

    @property
    def right_mass(self) -> float:
        return sum(b.mass for b in self.right)

    def with_boost(self, W) -> "NondecayParams":
        return replace(self, W=W)

    def initial_bumps(self):
        shifted = tuple(b.shifted(dx=self.C0, dv1=self.W) for b in self.right)
        return tuple(self.left) + shifted


@dataclass
class FloorReport:
    M: float
    C0: float
    x0: float
    W: float
    mu0: float
    calE0: float
    kinetic_part: float
    field_part: float
    floor: float
    condition_4_1: bool
    condition_4_2: bool
    quadrature: dict = field(default_factory=dict)

    @property
    def violations(self):
        out = []
        if not self.condition_4_1:
            out.append("condition-4.1-violated")
        if not self.condition_4_2:
            out.append("condition-4.2-violated")
        return out

    def as_dict(self):
        return {
            "M": self.M, "C0": self.C0, "x0": self.x0, "W": self.W,
            "mu0": self.mu0, "calE0": self.calE0,
            "calE0_kinetic": self.kinetic_part, "calE0_field": self.field_part,
            "mu_floor": self.floor,
            "conditions_4_1": self.condition_4_1, "conditions_4_2": self.condition_4_2,
            "violations": self.violations, "quadrature": dict(self.quadrature),
        }


def _disk_midpoint(n_v):
    h = 2.0 / n_v
    u = -1.0 + h * (np.arange(n_v) + 0.5)
    u1, u2 = np.meshgrid(u, u, indexing="ij")
    weight = quartic_bump(np.hypot(u1, u2)) * h * h
    keep = weight > 0
    return u1[keep], u2[keep], weight[keep]


def velocity_factors(bump: BumpProfile, mass=1.0, n_v=256):
    """Midpoint values of ∫h(|v-cv|/rv)dv and ∫h(|v-cv|/rv)(sqrt(m^2+|v|^2) - v1)dv."""
    u1, u2, wq = _disk_midpoint(n_v)
    v1 = bump.center_v1 + bump.radius_v * u1
    v2 = bump.center_v2 + bump.radius_v * u2
    jac = bump.radius_v**2
    return float(wq.sum() * jac), float(np.sum(wq * energy_minus_v1(v1, v2, mass)) * jac)


def nondecay_floor(params: NondecayParams, n_x=8192, n_v=256) -> FloorReport:
    """Pre-run certificate: μ(0), ℰ(0) and the floor M/2 - sqrt(2ℰ(0)/(C0 - x0)).

    Composite midpoint in x (n_x cells on [-C0, C0] and on the window
    [x0, C0]) and on an n_v x n_v grid in each bump's velocity disk.
    """
    bumps = params.initial_bumps()
    C0, x0 = params.C0, params.x0
    factors = [velocity_factors(b, 1.0, n_v) for b in bumps]

    def densities(y):
        rho = np.zeros_like(y)
        sig = np.zeros_like(y)
        for b, (fn, fs) in zip(bumps, factors):
            hx = b.amplitude * quartic_bump((y - b.center_x) / b.radius_x)
            rho += hx * fn
            sig += hx * fs
        return rho, sig

    hf = 2 * C0 / n_x
    y_full = -C0 + hf * (np.arange(n_x) + 0.5)
    rho_full, _ = densities(y_full)
    M = float(rho_full.sum() * hf)

    hw = (C0 - x0) / n_x
    y = x0 + hw * (np.arange(n_x) + 0.5)
    rho, sig = densities(y)
    # charge to the right of each midpoint inside [x0, C0]; nothing lies beyond C0
    right = hw * (np.cumsum(rho[::-1])[::-1] - 0.5 * rho)
    E1 = 0.5 * M - right
    mu0 = float(rho.sum() * hw)
    kinetic = float(sig.sum() * hw)
    field_part = float(0.5 * np.sum(E1 * E1) * hw)
    calE0 = kinetic + field_part
    floor = 0.5 * M - math.sqrt(2.0 * calE0 / (C0 - x0))
    return FloorReport(
        M=M, C0=C0, x0=x0, W=params.W, mu0=mu0, calE0=calE0,
        kinetic_part=kinetic, field_part=field_part, floor=floor,
        condition_4_1=bool(0.5 * M >= mu0),
        condition_4_2=bool(0.5 * (C0 - x0) * (0.5 * M) ** 2 > calE0),
        quadrature={"rule": "composite midpoint", "n_x": n_x, "n_v": n_v},
    )


def build_monocharge_nondecay(params: NondecayParams, n_x=8192, n_v=256):
    """Single unit-charge, unit-mass species with E20 = B0 = 0, plus its floor report."""
    data = InitialData(species=(MONOCHARGE_SPECIES,), profiles=(params.initial_bumps(),),
                       kind="monocharge")
    return data, nondecay_floor(params, n_x=n_x, n_v=n_v)


def scan_boost_W(params: NondecayParams, candidates, n_x=8192, n_v=256):
    """First W in an increasing candidate list for which the energy condition holds.

    Returns ``(W, report)``; raises ``NoBoostFound`` otherwise.
    """
    candidates = list(candidates)
    if any(b <= a for a, b in zip(candidates, candidates[1:])):
        raise ValueError("candidate list must be strictly increasing")
    reports = []
    for W in candidates:
        rep = nondecay_floor(params.with_boost(W), n_x=n_x, n_v=n_v)
        reports.append(rep)
        if not rep.condition_4_1:
            raise NoBoostFound(
                f"charge condition fails (mu0={rep.mu0:.6g} > M/2={0.5 * rep.M:.6g}); "
                "no boost can compensate", reports)
        if rep.condition_4_2:
            return W, rep
    raise NoBoostFound("energy condition fails for every candidate W", reports)


_BUMP_KEYS = {"center_x", "center_v1", "center_v2", "radius_x", "radius_v", "amplitude"}
_PULSE_KEYS = {"center", "radius", "amplitude"}


def _strict(d, allowed, where):
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise UnknownKeyError(unknown[0], where)


def bump_from_dict(d, where):
    _strict(d, _BUMP_KEYS, where)
    return BumpProfile(**{k: float(d.get(k, 0.0)) for k in _BUMP_KEYS})


def pulse_from_dict(d, where):
    _strict(d, _PULSE_KEYS, where)
    return Pulse1D(float(d["center"]), float(d["radius"]), float(d["amplitude"]))


def scenario_from_dict(d):
    """Build ``(InitialData, FloorReport | None)`` from a scenario section."""
    kind = d.get("kind")
    if kind == "neutral":
        _strict(d, {"kind", "species", "E20", "B0"}, "scenario")
        species, profiles = [], []
        for i, s in enumerate(d["species"]):
            _strict(s, {"label", "mass", "charge", "bumps"}, f"scenario.species[{i}]")
            species.append(SpeciesSpec(str(s["label"]), float(s["mass"]), float(s["charge"])))
            profiles.append(tuple(bump_from_dict(b, f"scenario.species[{i}].bumps") for b in s["bumps"]))
        E20 = tuple(pulse_from_dict(p, "scenario.E20") for p in d.get("E20", ()))
        B0 = tuple(pulse_from_dict(p, "scenario.B0") for p in d.get("B0", ()))
        return build_neutral(species, profiles, E20, B0), None
    if kind == "monocharge_nondecay":
        _strict(d, {"kind", "left", "right", "W", "x0", "quadrature_n_x", "quadrature_n_v"}, "scenario")
        params = NondecayParams(
            left=tuple(bump_from_dict(b, "scenario.left") for b in d["left"]),
            right=tuple(bump_from_dict(b, "scenario.right") for b in d["right"]),
            W=float(d["W"]), x0=float(d.get("x0", -1.0)),
        )
        return build_monocharge_nondecay(params, n_x=int(d.get("quadrature_n_x", 8192)),
                                         n_v=int(d.get("quadrature_n_v", 256)))
    if kind == "free_stream":
        _strict(d, {"kind", "species", "particles"}, "scenario")
        species = []
        for i, s in enumerate(d["species"]):
            _strict(s, {"label", "mass", "charge"}, f"scenario.species[{i}]")
            species.append(SpeciesSpec(str(s["label"]), float(s["mass"]), float(s.get("charge", 1.0))))
        labels = [s.label for s in species]
        parts = []
        for p in d["particles"]:
            _strict(p, {"species", "x", "v1", "v2", "w"}, "scenario.particles")
            parts.append(FreeParticle(labels.index(p["species"]), float(p["x"]), float(p.get("v1", 0.0)),
                                      float(p.get("v2", 0.0)), float(p.get("w", 1.0))))
        return build_free_stream(parts, species), None
    raise ValueError(f"unknown scenario kind {kind!r}")
