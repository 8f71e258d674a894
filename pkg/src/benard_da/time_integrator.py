"""IMEX stepping of one state or of a reference/nudged twin pair.

Diffusion is treated per mode (Crank-Nicolson for ``CNAB2``, backward Euler
for ``ImexEuler``); advection, buoyancy, the ``u2`` source and the nudging
feedback are explicit (Adams-Bashforth 2, forward Euler on the first step).
After each step the state is re-projected onto its parity classes.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import PhysParams, SpectralKernel, get_kernel
from .field_core import FlowState, Grid, parity_project_half
from .interpolants import InterpolantSpec, get_interpolant

__all__ = [
    "Scheme",
    "StepperConfig",
    "BlowUpError",
    "StabilityError",
    "Stepper",
    "TwinStepper",
    "step_reference",
    "step_twin",
    "max_stable_dt",
]

_SIGNS = np.array([1.0, -1.0, -1.0])[:, None, None]


class Scheme(str, enum.Enum):
    ImexEuler = "ImexEuler"
    CNAB2 = "CNAB2"


class BlowUpError(FloatingPointError):
    def __init__(self, step: int, time: float, what: str = "state"):
        super().__init__(f"non-finite {what} at step {step} (t = {time:.6g})")
        self.step = step
        self.time = time


class StabilityError(ValueError):
    """Time step violates the explicit-stepping guard."""


@dataclass(frozen=True)
class StepperConfig:
    dt: float = 2.5e-3
    scheme: Scheme = Scheme.CNAB2
    cfl_safety: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety!r}")


def max_stable_dt(grid: Grid, cfg: StepperConfig, mu: float = 0.0, umax: float = 0.0, eps: float = 1e-12) -> float:
    """``cfl_safety * min(1 / (mu + eps), dx / max|u|)``."""
    bound = 1.0 / (mu + eps)
    if umax > 0:
        bound = min(bound, min(grid.dx) / umax)
    return cfg.cfl_safety * bound


def _umax(kernel: SpectralKernel, c: np.ndarray) -> float:
    g = kernel.to_grid(c[:2])
    return float(np.sqrt(g[0] ** 2 + g[1] ** 2).max())


class Stepper:
    """Advances stacked half spectra ``(3, nx, ny//2+1)`` of one flow.

    ``forcing`` hooks let :class:`TwinStepper` inject the nudging term into
    the first velocity component.
    """

    def __init__(self, grid: Grid, phys: PhysParams, cfg: StepperConfig, mu: float = 0.0, track_drift: bool = False):
        if mu < 0:
            raise ValueError("mu must be >= 0")
        if mu * cfg.dt > cfg.cfl_safety:
            raise StabilityError(
                f"mu*dt = {mu * cfg.dt:.3g} exceeds cfl_safety = {cfg.cfl_safety} (explicit nudging)"
            )
        self.grid, self.phys, self.cfg = grid, phys, cfg
        self.kernel = get_kernel(grid, phys)
        a = cfg.dt * self.kernel.lin
        self._be = 1.0 / (1.0 + a)
        self._cn_num = (1.0 - 0.5 * a) / (1.0 + 0.5 * a)
        self._cn_rhs = cfg.dt / (1.0 + 0.5 * a)
        self._prev = None
        self.nsteps = 0
        self.track_drift = track_drift
        self.last_parity_drift = 0.0

    def check_cfl(self, c: np.ndarray, mu: float = 0.0):
        umax = _umax(self.kernel, c)
        limit = max_stable_dt(self.grid, self.cfg, mu, umax)
        if self.cfg.dt > limit:
            raise StabilityError(f"dt = {self.cfg.dt:.3g} exceeds the stability limit {limit:.3g} (max|u| = {umax:.3g})")

    def reset(self):
        self._prev = None
        self.nsteps = 0

    def advance(self, c: np.ndarray, forcing1: np.ndarray | None = None) -> np.ndarray:
        n = self.kernel.explicit(c, forcing1)
        if self.cfg.scheme is Scheme.ImexEuler or self._prev is None:
            new = (c + self.cfg.dt * n) * self._be
        else:
            new = self._cn_num * c + self._cn_rhs * (1.5 * n - 0.5 * self._prev)
        self._prev = n
        self.nsteps += 1
        proj = parity_project_half(new, _SIGNS)
        if self.track_drift:
            scale = np.abs(proj).max()
            self.last_parity_drift = float(np.abs(new - proj).max() / scale) if scale > 0 else 0.0
        return proj

    def run(self, c: np.ndarray, nsteps: int, t0: float = 0.0, check_every: int = 200) -> np.ndarray:
        for i in range(nsteps):
            c = self.advance(c)
            if (i + 1) % check_every == 0 and not np.isfinite(c).all():
                raise BlowUpError(self.nsteps, t0 + (i + 1) * self.cfg.dt)
        if not np.isfinite(c).all():
            raise BlowUpError(self.nsteps, t0 + nsteps * self.cfg.dt)
        return c


class TwinStepper:
    """Co-evolves a reference flow and its nudged twin.

    The reference horizontal velocity is observed once per step at the
    current time; the feedback ``-mu (I_h v1 - I_h u1)`` enters the twin's
    u1 equation before the Leray projection.
    """

    def __init__(self, grid: Grid, phys: PhysParams, cfg: StepperConfig, spec: InterpolantSpec, mu: float):
        self.ref = Stepper(grid, phys, cfg)
        self.assim = Stepper(grid, phys, cfg, mu=mu)
        self.mu = float(mu)
        self.spec = spec
        self.op = get_interpolant(spec, grid)
        self.mask = grid.dealias_half.astype(float)
        self.last_feedback = None

    @property
    def nsteps(self) -> int:
        return self.ref.nsteps

    def advance(self, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        forcing = None
        if self.mu > 0:
            obs_ref = self.op.observe_half(x[0])
            obs_model = self.op.observe_half(y[0])
            forcing = -self.mu * self.op.lift_half(obs_model - obs_ref) * self.mask
        self.last_feedback = forcing
        return self.ref.advance(x), self.assim.advance(y, forcing)


# --------------------------------------------------------------------------
# single-step convenience wrappers on FlowState


def step_reference(state: FlowState, p: PhysParams, cfg: StepperConfig, stepper: Stepper | None = None) -> FlowState:
    """One step of the reference system.

    Pass the same ``stepper`` across calls to keep the Adams-Bashforth history;
    without it every call is a first (ImexEuler) step.
    """
    st = stepper or Stepper(state.grid, p, cfg)
    new = st.advance(state.stacked_half() * st.kernel.mask)
    if not np.isfinite(new).all():
        raise BlowUpError(st.nsteps, state.time + cfg.dt)
    return FlowState.from_stacked_half(state.grid, new, state.time + cfg.dt, check=False)


def step_twin(
    ref: FlowState,
    assim: FlowState,
    spec: InterpolantSpec,
    mu: float,
    p: PhysParams,
    cfg: StepperConfig,
    stepper: TwinStepper | None = None,
) -> tuple[FlowState, FlowState]:
    if ref.grid != assim.grid:
        raise ValueError("twin states live on different grids")
    st = stepper or TwinStepper(ref.grid, p, cfg, spec, mu)
    m = st.mask
    x, y = st.advance(ref.stacked_half() * m, assim.stacked_half() * m)
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise BlowUpError(st.nsteps, ref.time + cfg.dt)
    t = ref.time + cfg.dt
    return (
        FlowState.from_stacked_half(ref.grid, x, t, check=False),
        FlowState.from_stacked_half(ref.grid, y, t, check=False),
    )
