"""Identical-twin experiments: spin-up, co-evolution, monitors, rate fits, sweeps."""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Callable

import numpy as np

from .dynamics import PhysParams, get_kernel
from .field_core import FlowState, Grid, Parity, VelocityField, half_weights, random_scalar
from .interpolants import InterpolantSpec, get_interpolant
from .time_integrator import BlowUpError, Stepper, StepperConfig, TwinStepper

__all__ = [
    "DAConfig",
    "ConfigError",
    "SyncRecord",
    "SYNC_COLUMNS",
    "Feasibility",
    "feasibility",
    "alpha_monitor",
    "theta_excess_monitor",
    "suggest_mu",
    "capped_mu",
    "predicted_gamma",
    "resolve_mu",
    "initial_reference",
    "spin_up",
    "SpinUp",
    "run_twin",
    "run_twin_experiment",
    "DecayFit",
    "fit_decay_rate",
    "decreases_on_average",
    "SweepRow",
    "sweep",
    "sweep_to_csv",
]


class ConfigError(ValueError):
    """Invalid experiment configuration; ``key`` names the offending field."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class DAConfig:
    phys: PhysParams = field(default_factory=PhysParams)
    grid: Grid = field(default_factory=Grid)
    spec: InterpolantSpec = field(default_factory=InterpolantSpec)
    mu: float | None = None  # None: capped suggest_mu(weak) after spin-up
    stepper: StepperConfig = field(default_factory=StepperConfig)
    spinup_T: float = 100.0
    run_T: float = 50.0
    seed: int = 0
    init_amplitude: float = 0.1
    sample_every: float = 0.1
    assim_init: str = "zero"

    def __post_init__(self):
        for key in ("spinup_T", "run_T", "sample_every"):
            if not getattr(self, key) > 0:
                raise ConfigError(key, "must be > 0")
        if self.mu is not None and not self.mu >= 0:
            raise ConfigError("mu", "must be >= 0")
        if self.init_amplitude < 0:
            raise ConfigError("init_amplitude", "must be >= 0")
        if self.assim_init not in ("zero", "copy", "perturb"):
            raise ConfigError("assim_init", "must be one of zero, copy, perturb")
        if self.mu is not None and self.mu * self.stepper.dt > self.stepper.cfl_safety:
            raise ConfigError(
                "mu", f"mu*dt = {self.mu * self.stepper.dt:.4g} exceeds cfl_safety = {self.stepper.cfl_safety}"
            )
        if self.sample_every < self.stepper.dt:
            raise ConfigError("sample_every", "must be >= dt")

    def nsteps(self, duration: float) -> int:
        return int(round(duration / self.stepper.dt))

    @property
    def sample_stride(self) -> int:
        return max(1, int(round(self.sample_every / self.stepper.dt)))


# --------------------------------------------------------------------------
# record


SYNC_COLUMNS = (
    "time",
    "w_L2",
    "grad_w_L2",
    "w_V0",
    "xi_L2",
    "grad_xi_L2",
    "u_V0",
    "theta_V1",
    "alpha_monitor",
)


@dataclass
class SyncRecord:
    """Column store of per-sample diagnostics (see ``SYNC_COLUMNS``)."""

    data: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_rows(cls, rows, meta=None) -> "SyncRecord":
        arr = np.asarray(rows, dtype=float).reshape(-1, len(SYNC_COLUMNS))
        return cls({k: arr[:, i].copy() for i, k in enumerate(SYNC_COLUMNS)}, dict(meta or {}))

    def __getitem__(self, key: str) -> np.ndarray:
        if key == "sync_error":
            # ||w||_V0^2 + ||xi||_L2^2
            return self.data["w_V0"] ** 2 + self.data["xi_L2"] ** 2
        if key == "strong_error":
            return self.data["w_V0"] ** 2 + self.data["grad_xi_L2"] ** 2
        return self.data[key]

    def __len__(self) -> int:
        return len(self.data["time"])

    @property
    def time(self) -> np.ndarray:
        return self.data["time"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SYNC_COLUMNS)
        for i in range(len(self)):
            w.writerow([f"{self.data[k][i]:.17g}" for k in SYNC_COLUMNS])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SyncRecord":
        rows = list(csv.reader(io.StringIO(text)))
        if tuple(rows[0]) != SYNC_COLUMNS:
            raise ValueError(f"unexpected CSV header {rows[0]}")
        return cls.from_rows([[float(x) for x in r] for r in rows[1:]])


# --------------------------------------------------------------------------
# diagnostics on stacked half spectra


class _Diagnostics:
    def __init__(self, grid: Grid, phys: PhysParams):
        self.grid = grid
        self.phys = phys
        self.kernel = get_kernel(grid, phys)
        w = half_weights(grid.ny)[None, :] * grid.area
        self.w0 = w
        self.w1 = w * grid.ksq_half
        self.w2 = w * grid.ksq_half**2
        self.lam1 = grid.lambda1

    def sq(self, c: np.ndarray, weight: np.ndarray) -> float:
        return float(np.sum(weight * (c.real**2 + c.imag**2)))

    def alpha(self, c: np.ndarray) -> float:
        p = self.phys
        grad_u = math.sqrt(self.sq(c[0], self.w1) + self.sq(c[1], self.w1))
        lap_u = math.sqrt(self.sq(c[0], self.w2) + self.sq(c[1], self.w2))
        th_inf = float(np.abs(self.kernel.to_grid(c[2])).max())
        return (
            1.0 / (p.kappa * self.lam1)
            + 1.0 / (p.nu * p.kappa**2)
            + th_inf**2 / p.kappa
            + grad_u * (1.0 + grad_u / p.nu)
            + lap_u * (1.0 + (lap_u / p.nu) ** (1.0 / 3.0) + lap_u / p.nu)
        )

    def theta_excess(self, c: np.ndarray) -> float:
        g = math.sqrt(self.sq(c[2], self.w1))
        lap = math.sqrt(self.sq(c[2], self.w2))
        return g * lap * (1.0 + g * lap) / self.phys.kappa

    def row(self, t: float, x: np.ndarray, y: np.ndarray) -> list[float]:
        d = x - y
        w_l2 = self.sq(d[0], self.w0) + self.sq(d[1], self.w0)
        w_h1 = self.sq(d[0], self.w1) + self.sq(d[1], self.w1)
        u_v0 = sum(self.sq(x[i], self.w0) + self.sq(x[i], self.w1) for i in (0, 1))
        return [
            t,
            math.sqrt(w_l2),
            math.sqrt(w_h1),
            math.sqrt(w_l2 + w_h1),
            math.sqrt(self.sq(d[2], self.w0)),
            math.sqrt(self.sq(d[2], self.w1)),
            math.sqrt(u_v0),
            math.sqrt(self.sq(x[2], self.w1)),
            self.alpha(x),
        ]


def alpha_monitor(state: FlowState, p: PhysParams) -> float:
    """The damping threshold of the convergence proof with every generic constant set to 1."""
    d = _Diagnostics(state.grid, p)
    return d.alpha(state.stacked_half() * state.grid.dealias_half)


def theta_excess_monitor(state: FlowState, p: PhysParams) -> float:
    """Extra temperature term of the strong-norm threshold: ``|grad th||Lap th|(1+|grad th||Lap th|)/kappa``."""
    d = _Diagnostics(state.grid, p)
    return d.theta_excess(state.stacked_half())


# --------------------------------------------------------------------------
# theorem hypotheses


@dataclass(frozen=True)
class Feasibility:
    feasible: bool
    slack: float  # rhs / lhs of the resolution condition; >= 1 when feasible
    lhs: float
    rhs: float


def feasibility(mu: float, h: float, c0: float, nu: float, interp_type: str = "type1") -> Feasibility:
    """Resolution condition ``4 mu c0^2 h^2 <= nu`` (type1) or ``2 mu c0^2 h^2 <= nu/16`` (type2)."""
    if interp_type == "type1":
        lhs, rhs = 4.0 * mu * c0**2 * h**2, nu
    elif interp_type == "type2":
        lhs, rhs = 2.0 * mu * c0**2 * h**2, nu / 16.0
    else:
        raise ValueError(f"interp_type must be 'type1' or 'type2', got {interp_type!r}")
    slack = rhs / lhs if lhs > 0 else math.inf
    return Feasibility(lhs <= rhs, slack, lhs, rhs)


def suggest_mu(K1_hat: float, nu: float, mode: str = "weak", K2_hat: float = 0.0) -> float:
    if mode == "weak":
        return 2.0 * (K1_hat + nu)
    if mode == "strong":
        return 2.0 * (K1_hat + nu) + 2.0 * K2_hat
    raise ValueError(f"mode must be 'weak' or 'strong', got {mode!r}")


def capped_mu(mu: float, stepper: StepperConfig) -> float:
    """Largest admissible gain not above ``mu`` under the explicit nudging guard."""
    return min(mu, stepper.cfl_safety / stepper.dt)


def predicted_gamma(p: PhysParams, grid: Grid, mu: float) -> float:
    """Rate ``min(nu/16, nu lambda1/16, kappa lambda1/8, mu/2)`` from the convergence proof.

    Built from worst-case estimates; reported next to fitted rates, never asserted.
    """
    lam = grid.lambda1
    return min(p.nu / 16, p.nu * lam / 16, p.kappa * lam / 8, mu / 2)


# --------------------------------------------------------------------------
# runs


def initial_reference(cfg: DAConfig) -> FlowState:
    """Fluid at rest with a seeded low-mode temperature perturbation."""
    rng = np.random.default_rng(cfg.seed)
    th = random_scalar(cfg.grid, Parity.OddInX2, rng, kmax=3, amplitude=cfg.init_amplitude)
    return FlowState(VelocityField.zeros(cfg.grid), th, 0.0)


@dataclass
class SpinUp:
    state: FlowState
    times: np.ndarray
    alpha: np.ndarray
    theta_excess: np.ndarray
    u_V0: np.ndarray
    theta_V1: np.ndarray

    def K1_hat(self, window: float = 50.0) -> float:
        sel = self.times >= self.times[-1] - window
        return float(self.alpha[sel].max())

    def K2_hat(self, window: float = 50.0) -> float:
        sel = self.times >= self.times[-1] - window
        return float(self.theta_excess[sel].max())


def spin_up(cfg: DAConfig, state: FlowState | None = None, sample_every: float = 1.0) -> SpinUp:
    """Integrate the reference for ``spinup_T`` and monitor it along the way."""
    state = state or initial_reference(cfg)
    g = cfg.grid
    st = Stepper(g, cfg.phys, cfg.stepper)
    diag = _Diagnostics(g, cfg.phys)
    c = state.stacked_half() * g.dealias_half
    n = cfg.nsteps(cfg.spinup_T)
    stride = max(1, int(round(sample_every / cfg.stepper.dt)))
    t0 = state.time
    rows = []
    for i in range(1, n + 1):
        c = st.advance(c)
        if i % stride == 0 or i == n:
            if not np.isfinite(c).all():
                raise BlowUpError(i, t0 + i * cfg.stepper.dt, "reference")
            u_v0 = math.sqrt(sum(diag.sq(c[j], diag.w0) + diag.sq(c[j], diag.w1) for j in (0, 1)))
            rows.append((t0 + i * cfg.stepper.dt, diag.alpha(c), diag.theta_excess(c), u_v0, math.sqrt(diag.sq(c[2], diag.w1))))
    arr = np.array(rows)
    final = FlowState.from_stacked_half(g, c, t0 + n * cfg.stepper.dt, check=False)
    return SpinUp(final, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4])


def _assim_initial(cfg: DAConfig, ref: FlowState) -> np.ndarray:
    x = ref.stacked_half() * cfg.grid.dealias_half
    if cfg.assim_init == "zero":
        return np.zeros_like(x)
    if cfg.assim_init == "copy":
        return x.copy()
    rng = np.random.default_rng([cfg.seed, 1])
    th = random_scalar(cfg.grid, Parity.OddInX2, rng, kmax=3, amplitude=cfg.init_amplitude)
    y = x.copy()
    y[2] += th.half * cfg.grid.dealias_half
    return y


def run_twin(
    cfg: DAConfig,
    ref0: FlowState,
    assim0: FlowState | None = None,
    on_sample: Callable[[float, np.ndarray, np.ndarray], None] | None = None,
) -> SyncRecord:
    """Co-evolve ``ref0`` and the assimilated twin for ``run_T``, sampling every ``sample_every``."""
    if cfg.mu is None:
        raise ConfigError("mu", "unresolved; call resolve_mu first")
    g = cfg.grid
    st = TwinStepper(g, cfg.phys, cfg.stepper, cfg.spec, cfg.mu)
    diag = _Diagnostics(g, cfg.phys)
    x = ref0.stacked_half() * g.dealias_half
    y = assim0.stacked_half() * g.dealias_half if assim0 is not None else _assim_initial(cfg, ref0)
    t0 = ref0.time
    rows = [diag.row(t0, x, y)]
    n = cfg.nsteps(cfg.run_T)
    stride = cfg.sample_stride
    dt = cfg.stepper.dt
    for i in range(1, n + 1):
        x, y = st.advance(x, y)
        if i % stride == 0 or i == n:
            t = t0 + i * dt
            if not np.isfinite(x).all():
                raise BlowUpError(i, t, "reference")
            if not np.isfinite(y).all():
                raise BlowUpError(i, t, "assimilated state")
            rows.append(diag.row(t, x, y))
            if on_sample is not None:
                on_sample(t, x, y)
    meta = {
        "mu": cfg.mu,
        "h": cfg.spec.h,
        "kind": cfg.spec.kind.value,
        "seed": cfg.seed,
        "nsteps": n,
        "predicted_gamma": predicted_gamma(cfg.phys, g, cfg.mu),
    }
    return SyncRecord.from_rows(rows, meta)


def resolve_mu(cfg: DAConfig, spun: SpinUp) -> DAConfig:
    """Fill an automatic gain with ``suggest_mu(weak)`` capped by the nudging guard."""
    if cfg.mu is not None:
        return cfg
    mu = capped_mu(suggest_mu(spun.K1_hat(), cfg.phys.nu, "weak"), cfg.stepper)
    return replace(cfg, mu=mu)


def run_twin_experiment(cfg: DAConfig, on_sample=None, spun: SpinUp | None = None) -> SyncRecord:
    """Spin up the reference, start the twin from ``assim_init`` and co-evolve."""
    spun = spun or spin_up(cfg)
    cfg = resolve_mu(cfg, spun)
    rec = run_twin(cfg, spun.state, on_sample=on_sample)
    rec.meta["K1_hat"] = spun.K1_hat()
    rec.meta["K2_hat"] = spun.K2_hat()
    return rec


# --------------------------------------------------------------------------
# decay-rate fit


@dataclass(frozen=True)
class DecayFit:
    gamma_hat: float
    r_squared: float
    n_points: int
    t_start: float = math.nan
    t_end: float = math.nan

    @property
    def decays(self) -> bool:
        return self.n_points >= 10 and self.gamma_hat > 0


def fit_decay_rate(rec: SyncRecord, quantity: str = "sync_error", lo: float = 1e-10, hi: float = 1e-2) -> DecayFit:
    """Least-squares slope of ``log(quantity)`` over samples with ``lo <= quantity <= hi``.

    Fewer than 10 samples in the window is reported as no decay
    (``gamma_hat = nan``), not raised.
    """
    q = rec[quantity]
    t = rec.time
    sel = (q >= lo) & (q <= hi)
    if sel.sum() < 10:
        return DecayFit(math.nan, math.nan, int(sel.sum()))
    tt, yy = t[sel], np.log(q[sel])
    A = np.column_stack([tt, np.ones_like(tt)])
    (slope, icpt), *_ = np.linalg.lstsq(A, yy, rcond=None)
    resid = yy - (slope * tt + icpt)
    ss_tot = float(np.sum((yy - yy.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(float(-slope), r2, int(sel.sum()), float(tt[0]), float(tt[-1]))


def decreases_on_average(
    rec: SyncRecord, quantity: str = "sync_error", n_segments: int = 5, lo: float = 1e-10, hi: float = 1e-2
) -> bool:
    """Split the fit window into ``n_segments`` equal time spans; means must strictly decrease."""
    fit = fit_decay_rate(rec, quantity, lo, hi)
    if fit.n_points < 10:
        return False
    q, t = rec[quantity], rec.time
    edges = np.linspace(fit.t_start, fit.t_end, n_segments + 1)
    means = []
    for a, b in zip(edges[:-1], edges[1:]):
        sel = (t >= a) & (t <= b)
        if not sel.any():
            return False
        means.append(float(q[sel].mean()))
    return all(m2 < m1 for m1, m2 in zip(means, means[1:]))


# --------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepRow:
    mu: float
    h: float
    feasible: bool
    gamma_hat: float
    final_error: float
    error: str = ""


SWEEP_COLUMNS = tuple(f.name for f in fields(SweepRow))


def _sweep_cell(args) -> SweepRow:
    cfg, ref0, c0, out_dir = args
    feas = feasibility(cfg.mu, cfg.spec.effective_h(cfg.grid), c0, cfg.phys.nu, cfg.spec.kind.approx_type)
    try:
        rec = run_twin(cfg, ref0)
    except (BlowUpError, ValueError) as exc:
        return SweepRow(cfg.mu, cfg.spec.h, feas.feasible, math.nan, math.nan, str(exc))
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "sync.csv"), "w") as fh:
            fh.write(rec.to_csv())
    fit = fit_decay_rate(rec)
    err = rec["sync_error"]
    return SweepRow(cfg.mu, cfg.spec.h, feas.feasible, fit.gamma_hat, float(err[-1] / err[0]))


def sweep(
    cfg_base: DAConfig,
    mu_list,
    h_list,
    parallelism: int = 1,
    c0: float | None = None,
    ref0: FlowState | None = None,
    out_dir: str | None = None,
) -> list[SweepRow]:
    """One twin run per ``(mu, h)``, all started from one shared spun-up reference.

    Rows come back in ``mu``-major order regardless of completion order.
    ``final_error`` is the sync error at ``run_T`` relative to its initial value.
    With ``out_dir`` each cell writes its record to ``out_dir/cell_XXX/sync.csv``.
    """
    mu_list, h_list = list(mu_list), list(h_list)
    if not mu_list or not h_list:
        raise ValueError("mu_list and h_list must be non-empty")
    if ref0 is None:
        ref0 = spin_up(cfg_base).state
    if c0 is None:
        c0 = 1.0
    cells = []
    for mu in mu_list:
        for h in h_list:
            cell_dir = None if out_dir is None else os.path.join(out_dir, f"cell_{len(cells):03d}")
            try:
                cfg = replace(cfg_base, mu=float(mu), spec=replace(cfg_base.spec, h=float(h)))
                get_interpolant(cfg.spec, cfg.grid)
            except ValueError as exc:
                cells.append(SweepRow(float(mu), float(h), False, math.nan, math.nan, str(exc)))
                continue
            cells.append((cfg, ref0, c0, cell_dir))
    todo = [(i, c) for i, c in enumerate(cells) if isinstance(c, tuple)]
    if parallelism > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as ex:
            results = list(ex.map(_sweep_cell, [c for _, c in todo]))
    else:
        results = [_sweep_cell(c) for _, c in todo]
    for (i, _), r in zip(todo, results):
        cells[i] = r
    return cells


def sweep_to_csv(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([f"{v:.17g}" if isinstance(v, float) else (int(v) if isinstance(v, bool) else v) for v in (r.mu, r.h, r.feasible, r.gamma_hat, r.final_error, r.error)])
    return buf.getvalue()
