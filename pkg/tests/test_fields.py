import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from rvm1d.core import Grid, SpeciesSpec
from rvm1d.fields import (
    CFLViolation, FieldState, continuity_residual, cumulative_trapezoid, solve_E1, step_light_cone,
    vector_potential,
)
from rvm1d.particles import ParticleArray, deposit_moments, push_step

floats = st.floats(-1e3, 1e3, allow_nan=False)


def bump(x, c, r):
    s = (x - c) / r
    return np.where(np.abs(s) < 1, (1 - s * s) ** 2, 0.0)


def test_monocharge_plateaus():
    x = np.linspace(-5, 5, 1001)
    rho = 0.7 * bump(x, 0.5, 1.2)
    E1 = solve_E1(rho, x[1] - x[0])
    M = cumulative_trapezoid(rho, x[1] - x[0])[-1]
    assert E1[-1] == 0.5 * M
    assert E1[0] == -0.5 * M
    # analytic ∫h = 16/15 per unit radius
    assert E1[-1] == pytest.approx(0.5 * 0.7 * 1.2 * 16 / 15, rel=1e-5)


def test_neutral_plateau_zero():
    x = np.linspace(-5, 5, 1001)
    rho = bump(x, -1, 1) - bump(x, 1, 1)
    E1 = solve_E1(rho, x[1] - x[0])
    assert abs(E1[-1]) < 1e-15 and abs(E1[0]) < 1e-15


def test_even_density_odd_field():
    x = np.linspace(-4, 4, 801)
    rho = bump(x, 0, 1.5) + 0.3 * bump(x, 2, 0.5) + 0.3 * bump(x, -2, 0.5)
    E1 = solve_E1(rho, x[1] - x[0])
    np.testing.assert_allclose(E1, -E1[::-1], atol=1e-14)
    assert abs(E1[400]) < 1e-14


def test_explicit_total_charge():
    rho = np.zeros(11)
    assert np.all(solve_E1(rho, 0.1, M_total=2.0) == -1.0)


def test_light_cone_pure_shift_bitwise():
    rng = np.random.default_rng(1)
    Gp, Gm = rng.normal(size=50), rng.normal(size=50)
    z = np.zeros(50)
    p1, m1 = step_light_cone(Gp, Gm, z, z, 0.1, 0.1)
    assert np.array_equal(p1[1:], Gp[:-1]) and p1[0] == 0.0
    assert np.array_equal(m1[:-1], Gm[1:]) and m1[-1] == 0.0


def test_light_cone_constant_source():
    z = np.zeros(20)
    c = np.full(20, 0.4)
    p1, m1 = step_light_cone(z, z, c, c, 0.05, 0.05)
    np.testing.assert_allclose(p1[1:], -0.4 * 0.05, rtol=1e-15)
    np.testing.assert_allclose(m1[:-1], -0.4 * 0.05, rtol=1e-15)


def test_rightgoing_pulse_keeps_E2_equal_B():
    g = Grid(-5, 5, 100)
    Gp = bump(g.nodes, -2, 1)
    Gm = np.zeros_like(Gp)
    z = np.zeros_like(Gp)
    for _ in range(10):
        Gp, Gm = step_light_cone(Gp, Gm, z, z, g.dx, g.dx)
    f = FieldState(g, z, Gp, Gm)
    assert np.array_equal(f.E2, f.B) and not np.any(Gm)
    np.testing.assert_array_equal(f.E2, Gp / 2)


def test_cfl_enforced():
    z = np.zeros(5)
    with pytest.raises(CFLViolation, match="cfl-violated"):
        step_light_cone(z, z, z, z, 0.05, 0.1)


def test_exact_transport_over_many_steps():
    g = Grid(-10, 10, 400)
    Gp0 = bump(g.nodes, -3, 1.3)
    Gm0 = 0.3 * bump(g.nodes, 2, 0.7)
    Gp, Gm = Gp0, Gm0
    z = np.zeros_like(Gp)
    N = 57
    for _ in range(N):
        Gp, Gm = step_light_cone(Gp, Gm, z, z, g.dx, g.dx)
    assert np.array_equal(Gp[N:], Gp0[:-N]) and not np.any(Gp[:N])
    assert np.array_equal(Gm[:-N], Gm0[N:]) and not np.any(Gm[-N:])


def test_causality_of_sourced_fields():
    g = Grid(-10, 10, 400)
    x = g.nodes
    C0 = 1.5
    Gp = bump(x, 0.3, 1.2)
    Gm = -bump(x, -0.2, 1.0)
    for n in range(60):
        # sources stay inside |x| <= C0
        j_start = np.sin(0.3 * n) * bump(x, 0.0, C0)
        j_end = np.sin(0.3 * (n + 1)) * bump(x, 0.0, C0)
        Gp, Gm = step_light_cone(Gp, Gm, j_start, j_end, g.dx, g.dx)
        outside = np.abs(x) > C0 + (n + 1) * g.dx + 1e-12
        assert not np.any(Gp[outside]) and not np.any(Gm[outside])


@given(arrays(float, 8, elements=floats), arrays(float, 8, elements=floats))
def test_reconstruction_identity(Gp, Gm):
    f = FieldState(Grid(0, 1, 7), np.zeros(8), Gp, Gm)
    np.testing.assert_allclose(f.E2**2 + f.B**2, 0.5 * (Gp**2 + Gm**2), rtol=1e-12, atol=1e-9)
    np.testing.assert_allclose(f.E2 + f.B, Gp, rtol=1e-12, atol=1e-9)


def test_from_E2_B_roundtrip():
    g = Grid(0, 1, 4)
    E2 = np.array([0, 1, 2, 3, 4.0])
    B = np.array([1, 0, -1, 0.5, 0.0])
    f = FieldState.from_E2_B(g, np.zeros(5), E2, B)
    np.testing.assert_array_equal(f.E2, E2)
    np.testing.assert_array_equal(f.B, B)


def test_vector_potential_zero_and_box():
    assert not np.any(vector_potential(np.zeros(10), 0.1))
    dx = 0.1
    B = np.zeros(101)
    B[30:71] = 1.0
    A = vector_potential(B, dx)
    # the linear interpolant of nodes 30..70 spans 40 full cells plus two half ramps
    assert A[0] == 0.0
    assert A[-1] == pytest.approx(41 * dx, rel=1e-14)
    assert np.all(A[71:] == A[-1])


def test_vector_potential_odd_field_even_potential():
    x = np.linspace(-5, 5, 1001)
    B = bump(x, 1.0, 0.8) - bump(x, -1.0, 0.8)
    A = vector_potential(B, x[1] - x[0])
    np.testing.assert_allclose(A, A[::-1], atol=1e-14)


def test_continuity_static_particles():
    g = Grid(-2, 2, 40)
    p = [ParticleArray(SpeciesSpec("p", 1, 1), np.array([0.13, -0.4]), np.zeros(2), np.zeros(2), np.ones(2))]
    m = deposit_moments(p, g)
    assert continuity_residual(m, m, g.dx) == 0.0


def _free_stream_residual(n_cells):
    g = Grid(-4, 4, n_cells)
    # a smooth cloud: many particles so the implied current is resolved
    x = np.linspace(-1, 1, 4001)
    w = bump(x, 0, 1) / 4001
    p = [ParticleArray(SpeciesSpec("p", 1, 1), x, np.full(x.size, 0.5), np.zeros(x.size), w)]
    zero = FieldState.zeros(g)
    m0 = deposit_moments(p, g)
    p1 = push_step(p, zero, g.dx)
    return continuity_residual(m0, deposit_moments(p1, g), g.dx)


def test_continuity_free_stream_refines():
    r = [_free_stream_residual(n) for n in (80, 160, 320)]
    assert r[0] > r[1] > r[2]
