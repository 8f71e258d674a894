import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from benard_da.checks import identity_residuals
from benard_da.dynamics import (
    PhysParams,
    advect_scalar,
    advect_velocity,
    assimilated_rhs,
    leray_project,
    nudging_feedback,
    reference_rhs,
)
from benard_da.field_core import (
    FlowState,
    Parity,
    VelocityField,
    derivative,
    inner,
    norm,
    random_scalar,
    random_velocity,
    to_physical,
    to_spectral,
)
from benard_da.interpolants import InterpolantKind, InterpolantSpec, observe

seeds = st.integers(0, 2**32 - 1)


def state(grid, rng, kmax=8, amp=1.0):
    return FlowState(
        random_velocity(grid, rng, kmax=kmax, amplitude=amp),
        random_scalar(grid, Parity.OddInX2, rng, kmax=kmax, amplitude=amp),
    )


@pytest.mark.parametrize("bad", [0.0, -1.0, float("nan"), float("inf")])
def test_phys_params_validation(bad):
    with pytest.raises(ValueError, match="nu"):
        PhysParams(nu=bad)
    with pytest.raises(ValueError, match="kappa"):
        PhysParams(kappa=bad)


@given(seed=seeds)
def test_trilinear_identities(grid32, seed):
    rng = np.random.default_rng(seed)
    u = random_velocity(grid32, rng, kmax=8)
    th = random_scalar(grid32, Parity.OddInX2, rng, kmax=8)
    assert max(identity_residuals(u, th)) <= 1e-9


def test_conduction_state_is_steady(grid32, phys):
    t = reference_rhs(FlowState.zeros(grid32), phys)
    assert norm(t.dvel) == 0.0 and norm(t.dtemp) == 0.0


@given(seed=seeds)
def test_energy_balances(grid32, phys, seed):
    # (du/dt, u) = -nu |grad u|^2 + (theta, u2);  (dtheta/dt, theta) = -kappa |grad theta|^2 + (u2, theta)
    s = state(grid32, np.random.default_rng(seed))
    t = reference_rhs(s, phys)
    buoy = inner(s.temp, s.vel.u2)
    e_u = -phys.nu * norm(s.vel, "H1_semi") ** 2 + buoy
    e_t = -phys.kappa * norm(s.temp, "H1_semi") ** 2 + buoy
    scale = norm(t.dvel) * norm(s.vel) + abs(e_u)
    assert inner(t.dvel, s.vel) == pytest.approx(e_u, abs=1e-12 * scale)
    assert inner(t.dtemp, s.temp) == pytest.approx(e_t, abs=1e-12 * (norm(t.dtemp) * norm(s.temp) + abs(e_t)))


def test_linear_growth_rate_of_a_roll(grid32):
    """The convective roll is an eigenmode of the linearization with the classical rate."""
    g = grid32
    p = PhysParams(0.02, 0.03)
    k = 2 * np.pi / g.L
    K2 = k**2 + np.pi**2
    sigma = -(p.nu + p.kappa) * K2 / 2 + math.sqrt(((p.nu - p.kappa) * K2 / 2) ** 2 + k**2 / K2)
    A = 1.0
    B = -A * k / (sigma + p.kappa * K2)
    x1, x2 = g.mesh
    psi = to_spectral(A * np.sin(k * x1) * np.sin(np.pi * x2), Parity.OddInX2, g)
    th = to_spectral(B * np.cos(k * x1) * np.sin(np.pi * x2), Parity.OddInX2, g)
    u = VelocityField(derivative(psi, "x2"), -derivative(psi, "x1"))
    plus = reference_rhs(FlowState(u, th), p)
    minus = reference_rhs(FlowState(u * -1.0, th * -1.0), p)
    # odd part in the amplitude removes the quadratic terms exactly
    lin_u1 = (plus.dvel.u1 - minus.dvel.u1) * 0.5
    lin_th = (plus.dtemp - minus.dtemp) * 0.5
    assert np.abs(lin_u1.coeffs - sigma * u.u1.coeffs).max() < 1e-13
    assert np.abs(lin_th.coeffs - sigma * th.coeffs).max() < 1e-13
    assert sigma > 0  # the default box is supercritical at these parameters


def test_leray_projection(grid32, rng):
    f1 = random_scalar(grid32, Parity.EvenInX2, rng)
    f2 = random_scalar(grid32, Parity.OddInX2, rng)
    p = leray_project((f1, f2))
    assert p.max_divergence() <= 1e-13 * norm(p, "V0")
    pp = leray_project(p)
    assert np.allclose(pp.u1.coeffs, p.u1.coeffs, atol=1e-15)
    # the residual is a gradient, orthogonal to the projection
    r = VelocityField(f1 - p.u1, f2 - p.u2, check=False)
    assert abs(inner(r, p)) <= 1e-13 * norm(r) * norm(p)
    phi = random_scalar(grid32, Parity.EvenInX2, rng)
    grad = leray_project((derivative(phi, "x1"), derivative(phi, "x2")))
    assert norm(grad) <= 1e-13 * norm(derivative(phi, "x1"))


def test_advection_of_constant_shear(grid32):
    # shear u = (cos(pi x2), 0) advecting theta = sin(k x1) sin(pi x2)
    g = grid32
    k = 2 * np.pi / g.L
    x1, x2 = g.mesh
    u1 = to_spectral(np.cos(np.pi * x2) + 0 * x1, Parity.EvenInX2, g)
    u = VelocityField(u1, to_spectral(0 * x1, Parity.OddInX2, g))
    th = to_spectral(np.sin(k * x1) * np.sin(np.pi * x2), Parity.OddInX2, g)
    adv = advect_scalar(u, th)
    want = np.cos(np.pi * x2) * k * np.cos(k * x1) * np.sin(np.pi * x2)
    assert np.abs(to_physical(adv) - want).max() < 1e-13
    a1, a2 = advect_velocity(u, u)
    assert norm(a1) < 1e-15 and norm(a2) < 1e-15


# -- nudging ------------------------------------------------------------------


@pytest.mark.parametrize("kind", list(InterpolantKind))
def test_no_feedback_reaches_temperature(grid32, phys, rng, kind):
    spec = InterpolantSpec(kind, 0.25)
    s = state(grid32, rng)
    obs = observe(random_velocity(grid32, rng).u1, spec)
    a = assimilated_rhs(s, obs, 500.0, phys)
    r = reference_rhs(s, phys)
    assert np.array_equal(a.dtemp.coeffs, r.dtemp.coeffs)
    # the velocity tendency does change, and stays solenoidal
    dv = a.dvel - r.dvel
    assert norm(dv) > 0
    assert dv.max_divergence() <= 1e-12 * norm(dv, "V0")


@pytest.mark.parametrize("kind", list(InterpolantKind))
def test_synchronized_manifold_is_invariant(grid32, phys, rng, kind):
    s = state(grid32, rng)
    obs = observe(s.vel.u1, InterpolantSpec(kind, 0.25))
    a = assimilated_rhs(s, obs, 123.0, phys)
    r = reference_rhs(s, phys)
    assert np.array_equal(a.dvel.u1.coeffs, r.dvel.u1.coeffs)
    assert np.array_equal(a.dtemp.coeffs, r.dtemp.coeffs)


def test_zero_gain_is_reference(grid32, phys, rng):
    s = state(grid32, rng)
    obs = observe(random_velocity(grid32, rng).u1, InterpolantSpec())
    a = assimilated_rhs(s, obs, 0.0, phys)
    r = reference_rhs(s, phys)
    assert np.array_equal(a.dvel.u1.coeffs, r.dvel.u1.coeffs)


def test_feedback_is_minus_mu_times_lifted_misfit(grid32, rng):
    spec = InterpolantSpec(InterpolantKind.FourierModes, 0.25)
    u = random_velocity(grid32, rng)
    v = random_velocity(grid32, rng)
    f = nudging_feedback(observe(v.u1, spec), observe(u.u1, spec), 7.0)
    keep = grid32.ksq_half <= 16.0
    want = -7.0 * (v.u1.half - u.u1.half) * keep * grid32.dealias_half
    assert np.abs(f - want).max() < 1e-14


def test_nudging_errors(grid32, phys, rng):
    s = state(grid32, rng)
    obs = observe(s.vel.u1, InterpolantSpec())
    with pytest.raises(ValueError):
        assimilated_rhs(s, obs, -1.0, phys)
    other = observe(s.vel.u1, InterpolantSpec(h=0.2))
    with pytest.raises(ValueError):
        nudging_feedback(obs, other, 1.0)
