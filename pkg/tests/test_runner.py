import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from benard_da.dynamics import PhysParams
from benard_da.field_core import FlowState, Grid, norm
from benard_da.interpolants import InterpolantKind, InterpolantSpec, estimate_c0
from benard_da.runner import (
    SYNC_COLUMNS,
    ConfigError,
    DAConfig,
    SyncRecord,
    alpha_monitor,
    capped_mu,
    decreases_on_average,
    feasibility,
    fit_decay_rate,
    initial_reference,
    predicted_gamma,
    resolve_mu,
    run_twin,
    run_twin_experiment,
    spin_up,
    suggest_mu,
    sweep,
    sweep_to_csv,
    theta_excess_monitor,
)
from benard_da.time_integrator import StepperConfig

finite = st.floats(-1e300, 1e300, allow_nan=False)


def small_cfg(**kw):
    base = dict(
        grid=Grid(nx=32, ny=32),
        stepper=StepperConfig(dt=0.01),
        spec=InterpolantSpec(h=0.25),
        mu=20.0,
        spinup_T=5.0,
        run_T=2.0,
        sample_every=0.1,
    )
    base.update(kw)
    return DAConfig(**base)


# -- configuration ------------------------------------------------------------


def test_defaults():
    cfg = DAConfig()
    assert cfg.grid.nx == cfg.grid.ny == 128
    assert cfg.grid.L == pytest.approx(2 * math.sqrt(2))
    assert cfg.phys == PhysParams(0.02, 0.02)
    assert cfg.mu is None  # resolved after spin-up
    assert cfg.stepper.dt == 2.5e-3
    assert (cfg.spinup_T, cfg.run_T, cfg.assim_init) == (100.0, 50.0, "zero")


@pytest.mark.parametrize(
    "kw,key",
    [
        (dict(mu=-1.0), "mu"),
        (dict(mu=1e4), "mu"),
        (dict(run_T=0.0), "run_T"),
        (dict(spinup_T=-1.0), "spinup_T"),
        (dict(assim_init="random"), "assim_init"),
        (dict(sample_every=1e-4), "sample_every"),
        (dict(init_amplitude=-1.0), "init_amplitude"),
    ],
)
def test_config_errors_name_the_key(kw, key):
    with pytest.raises(ConfigError) as err:
        small_cfg(**kw)
    assert err.value.key == key


def test_mu_guard_boundary():
    small_cfg(mu=50.0)  # mu dt = cfl_safety exactly
    with pytest.raises(ConfigError):
        small_cfg(mu=50.000001)


# -- theorem hypotheses ------------------------------------------------------------


def test_feasibility_exact_boundaries():
    # binary fractions: both sides exact in floating point
    assert feasibility(1.0, 0.5, 1.0, 1.0, "type1").feasible
    assert feasibility(1.0, 0.5, 1.0, 1.0, "type1").slack == 1.0
    assert not feasibility(1.0, 0.5, 1.0, 1.0 - 2**-30, "type1").feasible
    assert feasibility(0.125, 0.5, 1.0, 1.0, "type2").feasible
    assert not feasibility(0.125 + 2**-40, 0.5, 1.0, 1.0, "type2").feasible
    assert feasibility(0.0, 0.5, 1.0, 1.0).slack == math.inf
    with pytest.raises(ValueError):
        feasibility(1.0, 0.5, 1.0, 1.0, "type3")


@given(
    mu=st.floats(1e-3, 1e4),
    h=st.floats(1e-3, 1.0),
    c0=st.floats(1e-2, 10.0),
    nu=st.floats(1e-4, 10.0),
    typ=st.sampled_from(["type1", "type2"]),
)
def test_feasibility_matches_direct_comparison(mu, h, c0, nu, typ):
    f = feasibility(mu, h, c0, nu, typ)
    if typ == "type1":
        assert f.feasible == (4 * mu * c0**2 * h**2 <= nu)
    else:
        assert f.feasible == (2 * mu * c0**2 * h**2 <= nu / 16)
    assert f.feasible == (f.slack >= 1.0) or math.isclose(f.slack, 1.0)
    # shrinking h never breaks feasibility
    assert not f.feasible or feasibility(mu, h / 2, c0, nu, typ).feasible


def test_suggest_mu():
    assert suggest_mu(10.0, 0.5) == 21.0
    assert suggest_mu(10.0, 0.5, "strong", K2_hat=3.0) == 27.0
    with pytest.raises(ValueError):
        suggest_mu(1.0, 1.0, "medium")
    assert capped_mu(1e6, StepperConfig(dt=0.01, cfl_safety=0.5)) == 50.0
    assert capped_mu(10.0, StepperConfig(dt=0.01)) == 10.0


def test_predicted_gamma(grid32):
    lam = grid32.lambda1
    assert predicted_gamma(PhysParams(0.02, 0.02), grid32, 200.0) == 0.02 / 16
    assert predicted_gamma(PhysParams(100.0, 1e-3), grid32, 200.0) == pytest.approx(1e-3 * lam / 8)
    assert predicted_gamma(PhysParams(100.0, 100.0), grid32, 0.5) == 0.25


def test_alpha_monitor_lower_bound(grid32):
    p = PhysParams(0.1, 0.2)
    s = FlowState.zeros(grid32)
    want = 1 / (p.kappa * grid32.lambda1) + 1 / (p.nu * p.kappa**2)
    assert alpha_monitor(s, p) == pytest.approx(want, rel=1e-14)
    assert theta_excess_monitor(s, p) == 0.0


# -- records and fits -------------------------------------------------------------


@given(rows=st.lists(st.lists(finite, min_size=9, max_size=9), min_size=1, max_size=5))
def test_csv_roundtrip_is_exact(rows):
    rec = SyncRecord.from_rows(rows)
    back = SyncRecord.from_csv(rec.to_csv())
    for k in SYNC_COLUMNS:
        assert np.array_equal(back[k], rec[k])
    assert back.to_csv() == rec.to_csv()


def test_csv_header():
    text = SyncRecord.from_rows([[0.0] * 9]).to_csv()
    assert text.splitlines()[0] == ",".join(SYNC_COLUMNS)
    with pytest.raises(ValueError):
        SyncRecord.from_csv("a,b\n1,2\n")


def synthetic(gamma, t_end=30.0, n=301, e0=1.0, noise=0.0, seed=0):
    t = np.linspace(0, t_end, n)
    e = e0 * np.exp(-gamma * t) * np.exp(noise * np.random.default_rng(seed).standard_normal(n))
    rows = np.zeros((n, 9))
    rows[:, 0] = t
    rows[:, 3] = np.sqrt(e)  # w_V0^2 = e, xi = 0
    return SyncRecord.from_rows(rows)


def test_fit_recovers_exponential_rate():
    fit = fit_decay_rate(synthetic(0.9))
    assert fit.gamma_hat == pytest.approx(0.9, rel=1e-10)
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.decays
    assert 1e-10 <= math.exp(-0.9 * fit.t_end) and math.exp(-0.9 * fit.t_start) <= 1e-2
    assert decreases_on_average(synthetic(0.9, noise=0.3))


def test_fit_without_window_reports_no_decay():
    fit = fit_decay_rate(synthetic(0.0, e0=5.0))
    assert math.isnan(fit.gamma_hat) and not fit.decays
    assert not decreases_on_average(synthetic(0.0, e0=5.0))


def test_growth_is_not_decay():
    fit = fit_decay_rate(synthetic(-0.5, e0=1e-9, t_end=14))
    assert fit.gamma_hat < 0 and not fit.decays


# -- runs -----------------------------------------------------------------------


@pytest.fixture(scope="module")
def spun():
    return spin_up(small_cfg())


def test_initial_reference_is_seeded():
    a = initial_reference(small_cfg(seed=4))
    b = initial_reference(small_cfg(seed=4))
    c = initial_reference(small_cfg(seed=5))
    assert np.array_equal(a.temp.coeffs, b.temp.coeffs)
    assert not np.array_equal(a.temp.coeffs, c.temp.coeffs)
    assert norm(a.temp) == pytest.approx(0.1)
    assert norm(a.vel) == 0.0


def test_spin_up_monitors(spun):
    assert spun.state.time == pytest.approx(5.0)
    assert len(spun.times) == 5
    assert spun.K1_hat() >= 1 / (0.02 * 0.02**2)
    assert np.all(np.isfinite(spun.alpha))


def test_copy_start_never_desynchronizes(spun):
    rec = run_twin(small_cfg(assim_init="copy"), spun.state)
    assert np.all(rec["sync_error"] == 0.0)


def test_perturbed_start(spun):
    rec = run_twin(small_cfg(assim_init="perturb"), spun.state)
    assert rec["w_V0"][0] == 0.0 and rec["xi_L2"][0] > 0


def test_record_layout(spun):
    cfg = small_cfg()
    rec = run_twin(cfg, spun.state)
    assert len(rec) == 21
    assert np.allclose(np.diff(rec.time), 0.1)
    assert rec["w_V0"][0] == pytest.approx(norm(spun.state.vel, "V0"))
    assert rec.meta["mu"] == 20.0
    assert rec.meta["predicted_gamma"] == predicted_gamma(cfg.phys, cfg.grid, 20.0)
    with pytest.raises(ConfigError):
        run_twin(replace(cfg, mu=None), spun.state)


def test_resolve_mu(spun):
    cfg = small_cfg(mu=None)
    got = resolve_mu(cfg, spun)
    assert got.mu == capped_mu(suggest_mu(spun.K1_hat(), cfg.phys.nu), cfg.stepper) == 50.0
    assert resolve_mu(small_cfg(mu=3.0), spun).mu == 3.0


def test_experiment_reuses_spin_up(spun):
    rec = run_twin_experiment(small_cfg(run_T=0.5), spun=spun)
    assert rec.meta["K1_hat"] == spun.K1_hat()


def test_sweep_order_and_parallel_equivalence(spun, tmp_path):
    cfg = small_cfg(run_T=0.5)
    serial = sweep(cfg, [5.0, 20.0], [0.25, 0.5, 2.0], c0=0.8, ref0=spun.state)
    par = sweep(cfg, [5.0, 20.0], [0.25, 0.5, 2.0], parallelism=2, c0=0.8, ref0=spun.state, out_dir=str(tmp_path))
    assert [(r.mu, r.h) for r in serial] == [(5.0, 0.25), (5.0, 0.5), (5.0, 2.0), (20.0, 0.25), (20.0, 0.5), (20.0, 2.0)]
    assert sweep_to_csv(serial) == sweep_to_csv(par)
    assert serial[2].error and math.isnan(serial[2].gamma_hat)  # h too coarse for the box
    assert (tmp_path / "cell_000" / "sync.csv").exists() and not (tmp_path / "cell_002").exists()
    with pytest.raises(ValueError):
        sweep(cfg, [], [0.25], ref0=spun.state)


def test_theorem_shape_at_subcritical_parameters():
    """Feasible (mu, h) with mu >= the weak suggestion: the error decays on average with gamma > 0.

    At the supercritical defaults the suggested gain exceeds 2 / (nu kappa^2) = 2.5e5,
    which the explicit step guard cannot reach, so the hypotheses are met here at nu = kappa = 1.
    """
    grid = Grid(nx=32, ny=32)
    cfg = DAConfig(
        phys=PhysParams(1.0, 1.0),
        grid=grid,
        spec=InterpolantSpec(InterpolantKind.FourierModes, 0.2),
        mu=0.0,
        stepper=StepperConfig(dt=2e-3),
        spinup_T=0.2,
        run_T=3.0,
        sample_every=0.01,
        init_amplitude=1.0,
    )
    sp = spin_up(cfg, sample_every=0.01)
    mu = suggest_mu(sp.K1_hat(), cfg.phys.nu, "weak")
    c0 = estimate_c0(InterpolantKind.FourierModes, grid, n_samples=20)
    assert feasibility(mu, cfg.spec.h, c0, cfg.phys.nu, "type1").feasible
    rec = run_twin(replace(cfg, mu=mu), sp.state)
    fit = fit_decay_rate(rec)
    assert fit.decays and fit.r_squared > 0.95
    assert decreases_on_average(rec)
