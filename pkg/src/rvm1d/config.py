"""JSON run configuration: parsing, CLI overrides, and validation.

A config document holds the SimConfig keys at the top level plus a
``scenario`` section (see scenarios.scenario_from_dict) and an optional
``checks`` section. ``dt`` may be omitted, in which case it is set to the
cell width; ``support_radius_C0`` defaults to the scenario's support radius.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .core import ConfigError, SimConfig, UnknownKeyError, validate_config
from .scenarios import FloorReport, InitialData, scenario_from_dict

SIM_KEYS = {f.name for f in fields(SimConfig)}
CHECK_KEYS = {
    "energy_drift", "momentum_drift", "cone", "tracer", "nondecay", "monotone", "segment",
    "rho_floor", "support_v2", "support_v1", "ratio_trend", "lemma51_trend", "dilation",
    "plateau", "fit_window",
}


@dataclass
class RunSpec:
    config: SimConfig
    data: InitialData
    floor: FloorReport | None
    checks: dict
    scenario: dict
    dt_auto: bool


def _load(source):
    if isinstance(source, dict):
        return source
    text = source
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        text = Path(source).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([("parse-error", f"line {exc.lineno} column {exc.colno}: {exc.msg}")]) from None


def parse_config(source, overrides=None) -> RunSpec:
    """Parse a config (path, JSON text, or dict) and apply CLI overrides.

    Override keys: ``seed``, ``cells``, ``particles``, ``stride``. They win
    over the file. Changing ``cells`` also resets ``dt`` to the new width.
    """
    doc = dict(_load(source))
    if not isinstance(doc, dict):
        raise ConfigError([("parse-error", "top level must be an object")])
    for key in doc:
        if key not in SIM_KEYS | {"scenario", "checks"}:
            raise UnknownKeyError(key)
    if "scenario" not in doc:
        raise ConfigError([("missing-scenario", "config needs a 'scenario' section")])
    checks = dict(doc.pop("checks", {}) or {})
    for key in checks:
        if key not in CHECK_KEYS:
            raise UnknownKeyError(key, "checks")
    scenario = doc.pop("scenario")
    data, floor = scenario_from_dict(scenario)

    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    if "seed" in overrides:
        doc["rng_seed"] = int(overrides["seed"])
    if "cells" in overrides:
        doc["n_cells"] = int(overrides["cells"])
        doc.pop("dt", None)
    if "particles" in overrides:
        doc["particles_per_species"] = int(overrides["particles"])
    if "stride" in overrides:
        doc["diagnostic_stride"] = int(overrides["stride"])

    missing = [k for k in ("x_min", "x_max", "n_cells", "t_final") if k not in doc]
    if missing:
        raise ConfigError([("missing-key", f"missing required key {k!r}") for k in missing])
    dt_auto = "dt" not in doc
    if dt_auto:
        doc["dt"] = (float(doc["x_max"]) - float(doc["x_min"])) / int(doc["n_cells"])
    doc.setdefault("support_radius_C0", data.C0)
    if "cone_anchors" in doc:
        doc["cone_anchors"] = tuple((float(T), float(x)) for T, x in doc["cone_anchors"])
    pps = doc.get("particles_per_species")
    if isinstance(pps, list):
        doc["particles_per_species"] = tuple(int(c) for c in pps)
    cfg = SimConfig(**doc)
    validate_config(cfg, data.species)
    return RunSpec(cfg, data, floor, checks, scenario, dt_auto)


def with_overrides(cfg: SimConfig, **changes) -> SimConfig:
    """Copy of ``cfg`` with changes applied and re-validated; ``n_cells`` changes reset ``dt``."""
    if "n_cells" in changes and "dt" not in changes:
        x_min = changes.get("x_min", cfg.x_min)
        x_max = changes.get("x_max", cfg.x_max)
        changes["dt"] = (x_max - x_min) / changes["n_cells"]
    return validate_config(replace(cfg, **changes))


def config_echo(cfg: SimConfig) -> dict:
    out = {f.name: getattr(cfg, f.name) for f in fields(SimConfig)}
    out["cone_anchors"] = [list(a) for a in cfg.cone_anchors]
    if isinstance(out["particles_per_species"], tuple):
        out["particles_per_species"] = list(out["particles_per_species"])
    return out
