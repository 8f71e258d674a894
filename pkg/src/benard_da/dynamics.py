"""Tendencies of the Boussinesq system and of its nudged twin.

Reference system, with ``theta`` the temperature fluctuation::

    du/dt     = P[ -(u.grad)u + theta e2 ] + nu Lap u
    dtheta/dt = kappa Lap theta - (u.grad)theta + u2

The assimilated system adds ``-mu P[(I_h v1 - I_h u1) e1]`` to the velocity
tendency only; the temperature equation receives no observations.

Everything lives in the 2/3-dealiased subspace: products are formed on the
grid from truncated inputs and truncated again, and every tendency is masked.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .field_core import FlowState, Grid, Parity, ScalarField, VelocityField, derivative, product
from .interpolants import ObservedSignal, get_interpolant

__all__ = [
    "PhysParams",
    "Tendency",
    "SpectralKernel",
    "get_kernel",
    "leray_project",
    "advect_velocity",
    "advect_scalar",
    "reference_rhs",
    "assimilated_rhs",
    "nudging_feedback",
]


@dataclass(frozen=True)
class PhysParams:
    nu: float = 0.02
    kappa: float = 0.02

    def __post_init__(self):
        for name in ("nu", "kappa"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and v > 0 and np.isfinite(v)):
                raise ValueError(f"{name} must be a positive number, got {v!r}")


@dataclass(frozen=True, eq=False)
class Tendency:
    dvel: VelocityField
    dtemp: ScalarField


class SpectralKernel:
    """Explicit and diffusive tendencies on stacked half spectra ``(u1, u2, theta)``."""

    def __init__(self, grid: Grid, phys: PhysParams):
        self.grid = grid
        self.phys = phys
        nh = grid.ny // 2 + 1
        self.s = (grid.nx, grid.ny)
        nyq = grid.nyquist_free[:, :nh]
        self.k1 = grid.k1 * np.ones((1, nh))
        self.k2 = grid.k2_half * np.ones((grid.nx, 1))
        self.ik1 = 1j * self.k1 * nyq
        self.ik2 = 1j * self.k2 * nyq
        ksq = grid.ksq_half
        self.inv_ksq = np.where(ksq > 0, 1.0 / np.where(ksq > 0, ksq, 1.0), 0.0)
        self.mask = grid.dealias_half.astype(float)
        self.ksq = ksq
        # diffusion rates for (u1, u2, theta)
        self.lin = np.stack([phys.nu * ksq, phys.nu * ksq, phys.kappa * ksq])

    def to_grid(self, spec: np.ndarray) -> np.ndarray:
        return sfft.irfftn(spec, s=self.s, axes=(-2, -1), norm="forward")

    def from_grid(self, phys: np.ndarray) -> np.ndarray:
        return sfft.rfftn(phys, axes=(-2, -1), norm="forward")

    def project(self, f1: np.ndarray, f2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        kf = (self.k1 * f1 + self.k2 * f2) * self.inv_ksq
        return f1 - self.k1 * kf, f2 - self.k2 * kf

    def explicit(self, c: np.ndarray, forcing1: np.ndarray | None = None) -> np.ndarray:
        """Advection, buoyancy and the ``u2`` source; ``forcing1`` joins the u1 equation before projection.

        ``c`` and ``forcing1`` must already be dealiased; the result then is too.
        """
        u1, u2, th = c
        ik1, ik2 = self.ik1, self.ik2
        g = self.to_grid(np.stack([u1, u2, ik1 * u1, ik2 * u1, ik1 * u2, ik1 * th, ik2 * th]))
        U1, U2, d1u1, d2u1, d1u2, d1th, d2th = g
        # d2 u2 = -d1 u1 on solenoidal fields
        nl = self.from_grid(np.stack([U1 * d1u1 + U2 * d2u1, U1 * d1u2 - U2 * d1u1, U1 * d1th + U2 * d2th]))
        nl *= self.mask
        f1 = -nl[0] if forcing1 is None else forcing1 - nl[0]
        f1, f2 = self.project(f1, th - nl[1])
        return np.stack([f1, f2, u2 - nl[2]])

    def diffusive(self, c: np.ndarray) -> np.ndarray:
        return -self.lin * c * self.mask


@lru_cache(maxsize=16)
def get_kernel(grid: Grid, phys: PhysParams) -> SpectralKernel:
    return SpectralKernel(grid, phys)


# --------------------------------------------------------------------------
# field-level operators


def leray_project(f) -> VelocityField:
    """Helmholtz-Leray projection of a pair ``(f1 even, f2 odd)``."""
    f1, f2 = f if not isinstance(f, VelocityField) else (f.u1, f.u2)
    g = f1.grid
    k1, k2 = g.k1, g.k2
    ksq = np.where(g.ksq > 0, g.ksq, 1.0)
    kf = np.where(g.ksq > 0, (k1 * f1.coeffs + k2 * f2.coeffs) / ksq, 0.0)
    return VelocityField(
        ScalarField(g, Parity.EvenInX2, f1.coeffs - k1 * kf),
        ScalarField(g, Parity.OddInX2, f2.coeffs - k2 * kf),
        check=False,  # solenoidal by construction; a relative check misfires on ~0 results
    )


def advect_scalar(a: VelocityField, s: ScalarField) -> ScalarField:
    """Dealiased ``(a.grad) s``."""
    return product(a.u1, derivative(s, "x1")) + product(a.u2, derivative(s, "x2"))


def advect_velocity(a: VelocityField, b: VelocityField) -> tuple[ScalarField, ScalarField]:
    """Dealiased ``(a.grad) b``, returned as a (not solenoidal) pair (even, odd)."""
    return advect_scalar(a, b.u1), advect_scalar(a, b.u2)


def _tendency(grid: Grid, t: np.ndarray) -> Tendency:
    return Tendency(
        VelocityField(
            ScalarField.from_half(grid, Parity.EvenInX2, t[0]),
            ScalarField.from_half(grid, Parity.OddInX2, t[1]),
        ),
        ScalarField.from_half(grid, Parity.OddInX2, t[2]),
    )


def reference_rhs(state: FlowState, p: PhysParams) -> Tendency:
    k = get_kernel(state.grid, p)
    c = state.stacked_half() * k.mask
    return _tendency(state.grid, k.explicit(c) + k.diffusive(c))


def nudging_feedback(obs_model: ObservedSignal, obs_ref: ObservedSignal, mu: float) -> np.ndarray:
    """Half spectrum of ``-mu (I_h v1 - I_h u1)``, dealiased, before projection."""
    if obs_model.grid != obs_ref.grid or obs_model.spec != obs_ref.spec:
        raise ValueError("model and reference observations use different interpolants or grids")
    op = get_interpolant(obs_ref.spec, obs_ref.grid)
    return -mu * op.lift_half(obs_model.data - obs_ref.data) * obs_ref.grid.dealias_half


def assimilated_rhs(state: FlowState, obs: ObservedSignal, mu: float, p: PhysParams) -> Tendency:
    """Tendency of the nudged model given the reference observation ``obs``."""
    if mu < 0:
        raise ValueError("mu must be >= 0")
    grid = state.grid
    if obs.grid != grid:
        raise ValueError("observation grid does not match the state grid")
    op = get_interpolant(obs.spec, grid)
    k = get_kernel(grid, p)
    c = state.stacked_half() * k.mask
    own = ObservedSignal(obs.spec, grid, op.observe_half(c[0]), state.time)
    forcing = nudging_feedback(own, obs, mu) if mu > 0 else None
    return _tendency(grid, k.explicit(c, forcing) + k.diffusive(c))
