import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from rvm1d.core import SpeciesSpec, UnknownKeyError
from rvm1d.fields import solve_E1
from rvm1d.scenarios import (
    BumpProfile, InitialData, NoBoostFound, NondecayParams, ScenarioError, build_monocharge_nondecay,
    build_neutral, evaluate_f0, nondecay_floor, scan_boost_W, scenario_from_dict,
)

LEFT = (BumpProfile(-2.0, 0.0, 0.0, 0.9, 0.5, 1.0),)
RIGHT = (BumpProfile(-0.5, 0.0, 0.0, 0.4, 0.5, 1.0),)
# transverse momentum offset makes the energy condition fail for small boosts
RIGHT_HOT = (BumpProfile(-0.5, 0.0, 2.0, 0.4, 0.5, 1.0),)


def h(s):
    return (1 - s * s) ** 2 if abs(s) < 1 else 0.0


def oracle_mass(b):
    mx = integrate.quad(lambda y: h((y - b.center_x) / b.radius_x), b.x_interval[0], b.x_interval[1])[0]
    mv = integrate.quad(lambda r: 2 * math.pi * r * h(r / b.radius_v), 0, b.radius_v)[0]
    return b.amplitude * mx * mv


def oracle_calE0(params):
    """ℰ(0) by adaptive quadrature: polar velocity integrals, then x integrals of ρ and E1²."""
    bumps = params.initial_bumps()
    C0, x0 = params.C0, params.x0

    def vel(b):
        def emv(r, th):
            v1 = b.center_v1 + r * math.cos(th)
            v2 = b.center_v2 + r * math.sin(th)
            return (1 + v2 * v2) / (math.sqrt(1 + v1 * v1 + v2 * v2) + v1) if v1 > 0 else \
                math.sqrt(1 + v1 * v1 + v2 * v2) - v1
        mass = integrate.quad(lambda r: 2 * math.pi * r * h(r / b.radius_v), 0, b.radius_v)[0]
        kin = integrate.dblquad(lambda th, r: r * h(r / b.radius_v) * emv(r, th), 0, b.radius_v,
                                0, 2 * math.pi, epsabs=1e-12)[0]
        return mass, kin

    factors = [vel(b) for b in bumps]

    def marg(b, y):
        return b.amplitude * h((y - b.center_x) / b.radius_x)

    def rho(y):
        return sum(marg(b, y) * f[0] for b, f in zip(bumps, factors))

    def sig(y):
        return sum(marg(b, y) * f[1] for b, f in zip(bumps, factors))

    pts = sorted({e for b in bumps for e in b.x_interval})
    M = sum(integrate.quad(rho, a, b)[0] for a, b in zip(pts, pts[1:]))

    def E1(y):
        right = sum(integrate.quad(rho, max(y, a), b)[0] for a, b in zip(pts, pts[1:]) if b > y)
        return 0.5 * M - right

    inner = [p for p in pts if x0 < p < C0]
    edges = [x0, *inner, C0]
    kin = sum(integrate.quad(sig, a, b)[0] for a, b in zip(edges, edges[1:]))
    fld = sum(integrate.quad(lambda y: 0.5 * E1(y) ** 2, a, b, limit=200)[0] for a, b in zip(edges, edges[1:]))
    return M, kin + fld


def test_f0_outside_support_is_zero():
    data, _ = build_monocharge_nondecay(NondecayParams(LEFT, RIGHT, 5.0))
    for x in (data.C0, -data.C0, data.C0 + 3.0):
        assert evaluate_f0(data, 0, x, 0.0, 0.0) == 0.0


def test_f0_peak_and_half_radius():
    b = BumpProfile(0.3, 0.1, -0.2, 0.5, 0.4, 2.5)
    assert b(0.3, 0.1, -0.2) == 2.5
    # h(1/2) = (3/4)² = 9/16 in each factor
    assert b(0.3 + 0.25, 0.1 + 0.2, -0.2) == pytest.approx(2.5 * (9 / 16) ** 2, rel=1e-15)


def test_bump_mass_against_quadrature():
    b = BumpProfile(0.3, 0.1, -0.2, 0.7, 0.4, 2.5)
    assert b.mass == pytest.approx(oracle_mass(b), rel=1e-10)
    assert b.mass_between(-10, 10) == pytest.approx(b.mass, rel=1e-14)
    assert b.mass_between(-10, 0.3) == pytest.approx(0.5 * b.mass, rel=1e-14)


def test_bump_is_c1_at_support_edge():
    b = BumpProfile(0.0, 0.0, 0.0, 1.0, 1.0, 1.0)
    for eps in (1e-3, 1e-4):
        inside = b(1.0 - eps, 0.0, 0.0)
        slope = (b(1.0 - eps, 0, 0) - b(1.0 - 2 * eps, 0, 0)) / eps
        assert inside < 5 * eps * eps and abs(slope) < 20 * eps


@settings(max_examples=60)
@given(
    st.floats(-3, 3), st.floats(-2, 2), st.floats(-2, 2), st.floats(0.05, 2), st.floats(0.05, 2),
    st.floats(0.01, 10), st.floats(-6, 6), st.floats(-4, 4), st.floats(-4, 4),
)
def test_density_nonnegative_compact(cx, cv1, cv2, rx, rv, a, x, v1, v2):
    b = BumpProfile(cx, cv1, cv2, rx, rv, a)
    data = InitialData(species=(SpeciesSpec("p", 1, 1),), profiles=((b,),))
    val = evaluate_f0(data, 0, x, v1, v2)
    assert val >= 0
    if abs(x) >= data.C0:
        assert val == 0


def test_neutral_builder_rescales_to_zero_charge():
    sp = (SpeciesSpec("i", 4, 2.0), SpeciesSpec("e", 1, -1.0))
    prof = ((BumpProfile(0, 0, 0, 1, 0.5, 1.0),), (BumpProfile(0.5, 0, 0, 0.6, 0.7, 3.0),))
    data = build_neutral(sp, prof)
    q1 = 2.0 * data.species_mass(0)
    q2 = -1.0 * data.species_mass(1)
    assert abs(q1 + q2) <= 1e-10 * abs(q1)
    assert abs(data.M_total) <= 1e-10 * data.charge_scale()


def test_neutral_builder_mirrored_bumps():
    sp = (SpeciesSpec("i", 1, 1.0), SpeciesSpec("e", 1, -1.0))
    prof = ((BumpProfile(-1, 0, 0, 0.5, 0.5, 1.0),), (BumpProfile(1, 0, 0, 0.5, 0.5, 1.0),))
    data = build_neutral(sp, prof)
    assert data.M_total == 0.0


def test_neutral_builder_inconsistent_signs():
    sp = (SpeciesSpec("a", 1, 1.0), SpeciesSpec("b", 1, 2.0))
    prof = ((BumpProfile(0, 0, 0, 1, 1, 1),), (BumpProfile(0, 0, 0, 1, 1, 1),))
    with pytest.raises(ScenarioError) as err:
        build_neutral(sp, prof)
    assert err.value.code == "inconsistent-signs"


def test_neutral_even_density_gives_odd_E1():
    sp = (SpeciesSpec("i", 1, 1.0), SpeciesSpec("e", 1, -1.0))
    prof = ((BumpProfile(0, 0, 0, 1.0, 0.5, 1.0),), (BumpProfile(0, 0, 0, 2.0, 0.5, 1.0),))
    data = build_neutral(sp, prof)
    x = np.linspace(-3, 3, 601)
    rho = sum(s.charge * b.amplitude * np.where(np.abs((x - b.center_x) / b.radius_x) < 1,
                                                (1 - ((x - b.center_x) / b.radius_x) ** 2) ** 2, 0)
              * b.mass / (b.amplitude * b.radius_x * 16 / 15)
              for s, bumps in zip(data.species, data.profiles) for b in bumps)
    E1 = solve_E1(rho, x[1] - x[0])
    np.testing.assert_allclose(E1, -E1[::-1], atol=1e-14)
    assert abs(E1[300]) < 1e-14


def test_nondecay_params_invariants():
    with pytest.raises(ValueError):
        NondecayParams(LEFT, RIGHT, W=1.0)
    heavy = (BumpProfile(-0.5, 0, 0, 0.4, 0.5, 10.0),)
    with pytest.raises(ValueError):
        NondecayParams(LEFT, heavy, W=5.0)
    with pytest.raises(ValueError):
        NondecayParams(LEFT, (BumpProfile(-0.3, 0, 0, 0.5, 0.5, 1.0),), W=5.0)


def test_quarter_mass_satisfies_charge_condition():
    # right mass tuned to exactly a quarter of the total
    rm = RIGHT[0].mass
    left = (LEFT[0].scaled(3 * rm / LEFT[0].mass),)
    rep = nondecay_floor(NondecayParams(left, RIGHT, 5.0), n_x=2048, n_v=64)
    assert rep.mu0 == pytest.approx(0.25 * rep.M, rel=1e-6)
    assert rep.condition_4_1


def test_kinetic_part_decays_like_inverse_boost():
    p = NondecayParams(LEFT, RIGHT, 2.0)
    kin = [nondecay_floor(p.with_boost(W), n_x=2048, n_v=64).kinetic_part for W in (10, 100, 1000)]
    assert kin[0] > kin[1] > kin[2]
    # integrand (1 + v2²)/(ε + v1) <= C/W
    scaled = [k * W for k, W in zip(kin, (10, 100, 1000))]
    assert max(scaled) / min(scaled) < 1.5


def test_floor_matches_independent_quadrature():
    p = NondecayParams(LEFT, RIGHT, 5.0)
    rep = nondecay_floor(p)
    M, calE0 = oracle_calE0(p)
    assert rep.M == pytest.approx(M, rel=1e-6)
    assert rep.calE0 == pytest.approx(calE0, rel=1e-5)
    floor = 0.5 * M - math.sqrt(2 * calE0 / (p.C0 - p.x0))
    assert rep.floor == pytest.approx(floor, rel=1e-5)
    assert rep.floor > 0 and rep.condition_4_1 and rep.condition_4_2
    assert rep.mu0 == pytest.approx(RIGHT[0].mass, rel=1e-6)


def test_report_schema():
    _, rep = build_monocharge_nondecay(NondecayParams(LEFT, RIGHT, 5.0), n_x=1024, n_v=32)
    d = rep.as_dict()
    assert {"mu_floor", "conditions_4_1", "conditions_4_2", "mu0", "calE0", "quadrature"} <= set(d)
    assert d["violations"] == []


def test_scan_reports_unrescuable_charge_condition():
    # too much charge in the right window: μ(0) > M/2 for every W
    left = (BumpProfile(-2.0, 0, 0, 0.9, 0.5, 1.0),)
    right = (BumpProfile(-0.5, 0, 0, 0.4, 0.5, 1.0),)
    p = NondecayParams(left, right, 2.0, x0=-2.0)  # window now also catches most of the left bump
    with pytest.raises(NoBoostFound) as err:
        scan_boost_W(p, [2.0, 1e3, 1e9], n_x=1024, n_v=32)
    assert err.value.code == "none-found"
    assert "charge condition" in err.value.reason
    assert len(err.value.reports) == 1


def test_scan_single_huge_boost():
    tiny = (RIGHT[0].scaled(1e-3),)
    W, rep = scan_boost_W(NondecayParams(LEFT, tiny, 2.0), [1e6], n_x=1024, n_v=32)
    assert W == 1e6 and rep.condition_4_2


def test_scan_threshold_against_oracle():
    p = NondecayParams(LEFT, RIGHT_HOT, 2.0)
    with pytest.raises(NoBoostFound):
        scan_boost_W(p, [1.5, 2.0, 3.0])
    W, rep = scan_boost_W(p, [2.0, 5.0, 10.0, 20.0])
    assert W == 10.0
    lo, hi = 5.0, 10.0
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if nondecay_floor(p.with_boost(mid)).condition_4_2 else (mid, hi)
    eps = 0.05
    for Wq, expect in ((hi - eps, False), (hi + eps, True)):
        M, calE0 = oracle_calE0(p.with_boost(Wq))
        assert (0.5 * (p.C0 - p.x0) * (0.5 * M) ** 2 > calE0) is expect


def test_scenario_dict_rejects_unknown_key():
    with pytest.raises(UnknownKeyError) as err:
        scenario_from_dict({"kind": "free_stream", "species": [], "particles": [], "dx": 1})
    assert err.value.key == "dx"


def test_free_stream_support_radius():
    data, _ = scenario_from_dict({
        "kind": "free_stream", "species": [{"label": "p", "mass": 1.0, "charge": 1.0}],
        "particles": [{"species": "p", "x": -1.5, "v1": 1.0}, {"species": "p", "x": 0.5}],
    })
    assert data.C0 > 1.5 and data.C0 == pytest.approx(1.5)
    assert data.species_mass(0) == 2.0
