import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from benard_da.field_core import Grid, Parity, inner, norm, random_scalar, to_physical, to_spectral
from benard_da.interpolants import (
    InterpolantKind,
    InterpolantSpec,
    c0_profile,
    c0_ratio,
    estimate_c0,
    get_interpolant,
    lift,
    load_signal,
    observe,
    save_signal,
)

seeds = st.integers(0, 2**32 - 1)
kinds = st.sampled_from(list(InterpolantKind))


def even_field(grid, fn):
    x1, x2 = grid.mesh
    return to_spectral(fn(x1, x2), Parity.EvenInX2, grid)


def test_spec_defaults_and_validation(grid32):
    spec = InterpolantSpec()
    assert spec.kind is InterpolantKind.FourierModes
    assert spec.h == pytest.approx(1 / (8 * math.pi))
    assert InterpolantSpec("NodalValues").kind is InterpolantKind.NodalValues
    with pytest.raises(ValueError):
        InterpolantSpec(h=0.0)
    with pytest.raises(ValueError):
        InterpolantSpec("Splines")
    with pytest.raises(ValueError):
        get_interpolant(InterpolantSpec(h=1.5), grid32)


def test_approximation_types():
    assert InterpolantKind.FourierModes.approx_type == "type1"
    assert InterpolantKind.VolumeElements.approx_type == "type1"
    assert InterpolantKind.NodalValues.approx_type == "type2"


def test_layout_and_effective_h(grid32):
    spec = InterpolantSpec(InterpolantKind.VolumeElements, 0.25)
    m, n = spec.layout(grid32)
    assert (m, n) == (math.ceil(grid32.L / 0.25), 8)
    assert spec.effective_h(grid32) == pytest.approx(max(grid32.L / m, 2 / n))
    assert spec.effective_h(grid32) <= 0.25


def test_layout_too_fine_for_grid(grid32):
    with pytest.raises(ValueError):
        get_interpolant(InterpolantSpec(InterpolantKind.NodalValues, 0.05), grid32)


def test_observe_requires_even_field(grid32, rng):
    with pytest.raises(ValueError):
        observe(random_scalar(grid32, Parity.OddInX2, rng), InterpolantSpec())


# -- per-kind semantics ----------------------------------------------------------


def test_fourier_modes_keep_the_ball(grid32, rng):
    h = 0.2
    f = random_scalar(grid32, Parity.EvenInX2, rng, kmax=10)
    pf = lift(observe(f, InterpolantSpec(InterpolantKind.FourierModes, h)), grid32)
    keep = grid32.ksq <= 1 / h**2
    assert np.array_equal(pf.coeffs, np.where(keep, f.coeffs, 0))
    # orthogonal projection
    assert abs(inner(f - pf, pf)) < 1e-14 * norm(f) ** 2


def test_volume_averages_against_closed_form(grid64):
    g = grid64
    k = 2 * np.pi / g.L
    f = even_field(g, lambda x1, x2: 1.5 + np.cos(k * x1) * np.cos(np.pi * x2))
    spec = InterpolantSpec(InterpolantKind.VolumeElements, 0.25)
    op = get_interpolant(spec, g)
    e1, e2 = op.edges
    data = observe(f, spec).data
    avg1 = (np.sin(k * e1[1:]) - np.sin(k * e1[:-1])) / (k * np.diff(e1))
    avg2 = (np.sin(np.pi * e2[1:]) - np.sin(np.pi * e2[:-1])) / (np.pi * np.diff(e2))
    want = 1.5 + avg1[:, None] * avg2[None, :]
    assert np.abs(data - want).max() < 1e-13


def test_volume_lift_is_piecewise_constant_in_the_mean(grid64, rng):
    # the lift has the same cell averages as the data (up to the dropped Nyquist modes)
    spec = InterpolantSpec(InterpolantKind.VolumeElements, 0.5)
    f = random_scalar(grid64, Parity.EvenInX2, rng, kmax=3)
    obs = observe(f, spec)
    again = observe(lift(obs, grid64), spec)
    assert np.abs(again.data - obs.data).max() < 0.05 * np.abs(obs.data).max()


def test_nodal_values_are_point_samples(grid64, rng):
    g = grid64
    spec = InterpolantSpec(InterpolantKind.NodalValues, 0.25)
    op = get_interpolant(spec, g)
    x1n, x2n = op.nodes
    f = random_scalar(g, Parity.EvenInX2, rng, kmax=6)
    phys = to_physical(f)
    i = np.searchsorted(g.x1, x1n)
    j = np.array([np.argmin(np.abs(g.x2 - y)) for y in x2n])
    assert np.abs(observe(f, spec).data - phys[np.ix_(i, j)]).max() < 1e-13
    # nodes are mirror symmetric about x2 = 0
    assert np.allclose(np.sort(np.abs(x2n[x2n != 0])), np.sort(np.abs(-x2n[x2n != 0])))


def test_nodal_lift_reproduces_node_values(grid64, rng):
    g = grid64
    spec = InterpolantSpec(InterpolantKind.NodalValues, 0.5)
    f = random_scalar(g, Parity.EvenInX2, rng, kmax=2)
    obs = observe(f, spec)
    again = observe(lift(obs, g), spec)
    # spectral truncation of the hat interpolant smears the nodes slightly
    assert np.abs(again.data - obs.data).max() < 0.1 * np.abs(obs.data).max()


@given(seed=seeds, kind=kinds)
def test_linearity(grid32, seed, kind):
    rng = np.random.default_rng(seed)
    spec = InterpolantSpec(kind, 0.5)
    op = get_interpolant(spec, grid32)
    f = random_scalar(grid32, Parity.EvenInX2, rng)
    g = random_scalar(grid32, Parity.EvenInX2, rng)
    a, b = rng.standard_normal(2)
    lhs = op.observe_half((f * a + g * b).half)
    rhs = a * op.observe_half(f.half) + b * op.observe_half(g.half)
    assert np.abs(lhs - rhs).max() <= 1e-13 * (np.abs(rhs).max() + 1)
    lifted = lift(observe(f, spec), grid32)
    assert lifted.parity is Parity.EvenInX2


@pytest.mark.parametrize("kind", list(InterpolantKind))
def test_error_shrinks_with_h(grid64, kind):
    g = grid64
    k = 2 * np.pi / g.L
    f = even_field(g, lambda x1, x2: np.cos(k * x1) * np.cos(np.pi * x2) + 0.5 * np.cos(2 * np.pi * x2))
    errs = [norm(f - lift(observe(f, InterpolantSpec(kind, h)), g)) for h in (0.5, 0.25, 0.125)]
    assert errs[2] < errs[0]


# -- approximation constant --------------------------------------------------------


def test_c0_ratio_closed_form(grid32):
    # a single mode just outside the Fourier ball: r = ||phi||, so ratio = ||phi|| / (h ||phi||_V0)
    g = grid32
    phi = even_field(g, lambda x1, x2: np.cos(np.pi * x2) + 0 * x1)
    h = 0.5  # keeps |k| <= 2 < pi
    want = 1.0 / (h * math.sqrt(1 + math.pi**2))
    assert c0_ratio(phi, InterpolantSpec(InterpolantKind.FourierModes, h)) == pytest.approx(want, rel=1e-13)


def test_type2_ratio_solves_the_quadratic(grid32, rng):
    phi = random_scalar(grid32, Parity.EvenInX2, rng, kmax=6)
    spec = InterpolantSpec(InterpolantKind.NodalValues, 0.5)
    c = c0_ratio(phi, spec)
    h = spec.effective_h(grid32)
    from benard_da.field_core import h2_norm_sq

    r = norm(phi - lift(observe(phi, spec), grid32))
    assert c * h * norm(phi, "V0") + c**2 * h**2 * math.sqrt(h2_norm_sq(phi)) == pytest.approx(r, rel=1e-12)


def test_c0_needs_enough_samples(grid32):
    with pytest.raises(ValueError):
        c0_profile("FourierModes", grid32, n_samples=5)


@pytest.mark.parametrize("kind", list(InterpolantKind))
def test_c0_finite_and_stable(grid64, kind):
    prof = c0_profile(kind, grid64, n_samples=20)
    v = np.array(list(prof.values()))
    assert np.isfinite(v).all() and (v > 0).all()
    assert np.abs(v / v.mean() - 1).max() <= 0.2
    if kind is InterpolantKind.FourierModes:
        assert v.max() <= 1.0
    assert estimate_c0(kind, grid64, n_samples=20) == pytest.approx(v.max())


# -- replay files --------------------------------------------------------------------


@pytest.mark.parametrize("kind", list(InterpolantKind))
def test_signal_roundtrip(tmp_path, grid32, rng, kind):
    obs = observe(random_scalar(grid32, Parity.EvenInX2, rng), InterpolantSpec(kind, 0.5), time=3.25)
    path = tmp_path / "sig.bin"
    save_signal(path, obs)
    back = load_signal(path)
    assert back.spec == obs.spec and back.grid == obs.grid and back.time == 3.25
    assert np.array_equal(back.data, obs.data)


def test_signal_difference_checks_specs(grid32, rng):
    f = random_scalar(grid32, Parity.EvenInX2, rng)
    a = observe(f, InterpolantSpec(h=0.5))
    b = observe(f, InterpolantSpec(h=0.25))
    assert np.all((a - a).data == 0)
    with pytest.raises(ValueError):
        a - b


def test_grid_mismatch_on_lift(grid32, rng):
    obs = observe(random_scalar(grid32, Parity.EvenInX2, rng), InterpolantSpec(h=0.5))
    with pytest.raises(ValueError):
        lift(obs, Grid(nx=16, ny=16))
