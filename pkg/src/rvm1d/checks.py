"""Single-run summary metrics and threshold checks driven by a config's ``checks`` section.

Each enabled check yields ``{"passed", "value", "threshold"}``; the CLI exit
status is 0 only if every enabled check passes. Refinement comparisons that
need two runs live in the acceptance suite, not here.
"""
from __future__ import annotations

import math
from collections import defaultdict

import numpy as np

from .diagnostics import FitError, fit_growth_exponent

DILATION_RHS_CUTOFF = 0.01


def tracer_deviation(tracers):
    """Max over tracers and times of |I(t) - I(0)|."""
    if tracers is None or not tracers.rows:
        return 0.0
    series = defaultdict(list)
    for row in tracers.rows:
        series[(row[1], row[2])].append(row[6])
    return max(float(np.max(np.abs(np.array(v) - v[0]))) for v in series.values())


def dilation_mismatch(t, D, RHS, cutoff=DILATION_RHS_CUTOFF):
    """Max relative gap between centred dD/dt and RHS over rows where |RHS| > cutoff·max|RHS|."""
    t, D, RHS = (np.asarray(a, dtype=float) for a in (t, D, RHS))
    if t.size < 3:
        return math.nan
    dD = (D[2:] - D[:-2]) / (t[2:] - t[:-2])
    rhs = RHS[1:-1]
    keep = np.abs(rhs) > cutoff * np.max(np.abs(RHS))
    if not np.any(keep):
        return math.nan
    return float(np.max(np.abs(dD[keep] - rhs[keep]) / np.abs(rhs[keep])))


def _fit(t, y, window):
    try:
        return fit_growth_exponent(t, y, window).exponent
    except FitError:
        return math.nan


def summarize(result, fit_window=None) -> dict:
    led = result.ledger
    t = led.column("t")
    E = led.column("total_energy")
    P = led.column("total_momentum")
    E0 = E[0] if E.size else math.nan
    out = {
        "steps": led.steps,
        "energy_drift": float(np.max(np.abs(E - E0)) / E0) if E0 else 0.0,
        "momentum_drift": float(np.max(np.abs(P - P[0])) / E0) if E0 else 0.0,
        "cone_errors": [acc.relative_error for acc in led.cones],
        "cone_T_effective": [acc.T for acc in led.cones],
        "tracer_deviation": tracer_deviation(led.tracers),
        "max_abs_A": led.max_abs_A,
        "max_speed": led.max_speed,
        "min_normalized_densities": dict(led.min_combinations),
        "weights_constant": all(w == led.weight_totals[0] for w in led.weight_totals),
        "charge_from_weights": led.charge_from_weights,
        "charge_scale": led.charge_scale,
    }
    half = 0.5 * led.charge_from_weights
    right = np.array(led.plateau_right)
    left = np.array(led.plateau_left)
    if result.data.kind == "monocharge":
        scale = abs(half)
    else:
        scale = led.charge_scale
    out["plateau_deviation"] = float(max(np.max(np.abs(right - half), initial=0.0),
                                         np.max(np.abs(left + half), initial=0.0)) / scale) if scale else 0.0
    out["continuity_max"] = float(np.nanmax(led.column("continuity"), initial=0.0)) if t.size > 1 else 0.0
    fits = {}
    if t.size:
        window = tuple(fit_window) if fit_window else None
        for name in ("max_v1", "max_v2", "ratio_v1", "ratio_v2", "lemma51"):
            fits[name] = _fit(t, led.column(name), window)
    out["fitted_exponents"] = fits
    out["dilation_mismatch"] = dilation_mismatch(t, led.column("D"), led.column("RHS"))
    out["dilation_rhs_min"] = float(np.min(led.column("RHS"))) if t.size else math.nan

    if result.floor is not None and led.nondecay_rows:
        rep = result.floor
        mu = np.array([r.mu for r in led.nondecay_rows])
        cE = np.array([r.calE for r in led.nondecay_rows])
        rho_max = np.array([r.rho_max for r in led.nondecay_rows])
        seg = np.array(led.segment_rows)
        out.update(rep.as_dict())
        out["mu_min_observed"] = float(mu.min())
        out["mu_max_increase"] = float(np.max(np.diff(mu), initial=0.0))
        out["calE_max_increase"] = float(np.max(np.diff(cE), initial=0.0))
        out["segment_error_right"] = float(seg[:, 1].max())
        out["segment_error_left"] = float(seg[:, 2].max())
        out["segment_edge_flux"] = float(np.max(np.abs(seg[:, 3:])))
        out["rho_max_min_observed"] = float(rho_max.min())
        out["rho_bound"] = rep.floor / (rep.C0 - rep.x0)
        out["tail_max"] = float(max(r.tail for r in led.nondecay_rows))
    return out


def _verdict(passed, value, threshold):
    return {"passed": bool(passed), "value": value, "threshold": threshold}


def evaluate_checks(summary: dict, checks: dict) -> dict:
    """Compare summary metrics against the thresholds named in ``checks``."""
    v = {}
    s = summary
    if "energy_drift" in checks:
        v["energy_drift"] = _verdict(s["energy_drift"] <= checks["energy_drift"], s["energy_drift"],
                                     checks["energy_drift"])
    if "momentum_drift" in checks:
        v["momentum_drift"] = _verdict(s["momentum_drift"] <= checks["momentum_drift"],
                                       s["momentum_drift"], checks["momentum_drift"])
    if "cone" in checks:
        worst = max(s["cone_errors"], default=math.nan)
        v["cone"] = _verdict(bool(s["cone_errors"]) and worst <= checks["cone"], worst, checks["cone"])
    if "tracer" in checks:
        lim = checks["tracer"] * (1.0 + s["max_abs_A"])
        v["tracer"] = _verdict(s["tracer_deviation"] <= lim, s["tracer_deviation"], lim)
    if "plateau" in checks:
        v["plateau"] = _verdict(s["plateau_deviation"] <= checks["plateau"], s["plateau_deviation"],
                                checks["plateau"])
    for key, fit in (("support_v2", "max_v2"), ("support_v1", "max_v1"), ("lemma51_trend", "lemma51")):
        if key in checks:
            p = s["fitted_exponents"].get(fit, math.nan)
            v[key] = _verdict(p <= checks[key], p, checks[key])
    if "ratio_trend" in checks:
        p = max(s["fitted_exponents"].get("ratio_v1", math.nan), s["fitted_exponents"].get("ratio_v2", math.nan))
        v["ratio_trend"] = _verdict(p <= checks["ratio_trend"], p, checks["ratio_trend"])
    if "dilation" in checks:
        ok = s["dilation_mismatch"] <= checks["dilation"] and s["dilation_rhs_min"] > 0
        v["dilation"] = _verdict(ok, s["dilation_mismatch"], checks["dilation"])
    monochecks = ("nondecay", "monotone", "segment", "rho_floor")
    if any(k in checks for k in monochecks) and "mu_floor" not in s:
        for k in monochecks:
            if k in checks:
                v[k] = _verdict(False, None, checks[k])
        return v
    M = s.get("M", math.nan)
    if "nondecay" in checks:
        lim = s["mu_floor"] - checks["nondecay"] * M
        ok = s["mu_min_observed"] >= lim and s["mu_floor"] > 0
        v["nondecay"] = _verdict(ok, s["mu_min_observed"], lim)
    if "monotone" in checks:
        worst = max(s["mu_max_increase"], s["calE_max_increase"])
        v["monotone"] = _verdict(worst <= checks["monotone"] * M, worst, checks["monotone"] * M)
    if "segment" in checks:
        v["segment"] = _verdict(s["segment_error_right"] <= checks["segment"], s["segment_error_right"],
                                checks["segment"])
    if "rho_floor" in checks:
        lim = s["rho_bound"] * (1.0 - checks["rho_floor"])
        v["rho_floor"] = _verdict(s["rho_max_min_observed"] >= lim, s["rho_max_min_observed"], lim)
    return v
