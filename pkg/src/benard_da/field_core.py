"""Parity-constrained spectral fields on the extended periodic box.

The physical layer ``(0, L) x (0, 1)`` is reflected across ``x2 = 0`` onto
``(0, L) x (-1, 1)``, which is fully periodic.  The horizontal velocity is
even in ``x2`` and the vertical velocity and temperature fluctuation are odd.

Coefficient convention
----------------------
A field is stored as ``c[i, j]`` in numpy FFT ordering with

    f(x1, x2) = sum_{i,j} c[i, j] exp(i (k1[i] x1 + k2[j] x2)),

``k1 = 2 pi n / L`` and ``k2 = pi m``.  Grid points sit at ``x1 = i L / nx``
and ``x2 = -1 + 2 j / ny``.  The forward transform carries ``1 / (nx ny)``,
so Parseval reads ``int_Omega |f|^2 = 2 L sum |c|^2``.

The time stepper works on the half spectrum ``c[:, :ny//2 + 1]`` of a real
field (see :func:`full_to_half`).  Products in physical space do not depend
on where the ``x2`` origin is, so the hot loop skips the ``(-1)^m`` offset
factor entirely; only :func:`to_physical` / :func:`to_spectral` apply it.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

__all__ = [
    "Grid",
    "Parity",
    "ScalarField",
    "VelocityField",
    "FlowState",
    "ParityError",
    "to_physical",
    "to_spectral",
    "derivative",
    "laplacian",
    "product",
    "norm",
    "inner",
    "div_lemma_gap",
    "h2_norm_sq",
    "random_scalar",
    "velocity_from_streamfunction",
    "random_velocity",
    "full_to_half",
    "half_to_full",
    "parity_project_half",
    "half_weights",
]

PARITY_TOL = 1e-13


class ParityError(ValueError):
    """Data handed to :func:`to_spectral` does not belong to the requested class."""


class Parity(enum.Enum):
    EvenInX2 = 1
    OddInX2 = -1

    @property
    def sign(self) -> int:
        return self.value

    def __mul__(self, other: "Parity") -> "Parity":
        return Parity(self.value * other.value)

    def flipped(self) -> "Parity":
        return Parity(-self.value)


@dataclass(frozen=True)
class Grid:
    """Geometry and wavenumbers of the extended box ``(0, L) x (-1, 1)``."""

    L: float = 2.0 * np.sqrt(2.0)
    nx: int = 128
    ny: int = 128
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        object.__setattr__(self, "L", float(self.L))
        for name in ("nx", "ny"):
            n = getattr(self, name)
            if int(n) != n or n < 8 or n % 2:
                raise ValueError(f"{name} must be an even integer >= 8, got {n!r}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L!r}")
        if not 0 < self.dealias_fraction <= 1:
            raise ValueError("dealias_fraction must lie in (0, 1]")

    @property
    def area(self) -> float:
        return 2.0 * self.L

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def half_shape(self) -> tuple[int, int]:
        return (self.nx, self.ny // 2 + 1)

    @property
    def dx(self) -> tuple[float, float]:
        return (self.L / self.nx, 2.0 / self.ny)

    @cached_property
    def x1(self) -> np.ndarray:
        return np.arange(self.nx) * (self.L / self.nx)

    @cached_property
    def x2(self) -> np.ndarray:
        return -1.0 + np.arange(self.ny) * (2.0 / self.ny)

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x1, self.x2, indexing="ij")

    # integer mode indices in FFT order
    @cached_property
    def n1(self) -> np.ndarray:
        return np.fft.fftfreq(self.nx, 1.0 / self.nx).round().astype(int)

    @cached_property
    def n2(self) -> np.ndarray:
        return np.fft.fftfreq(self.ny, 1.0 / self.ny).round().astype(int)

    @cached_property
    def k1(self) -> np.ndarray:
        """Physical x1 wavenumbers, shape ``(nx, 1)``."""
        return (2.0 * np.pi / self.L * self.n1)[:, None]

    @cached_property
    def k2(self) -> np.ndarray:
        """Physical x2 wavenumbers, shape ``(1, ny)``."""
        return (np.pi * self.n2)[None, :]

    @cached_property
    def ksq(self) -> np.ndarray:
        return self.k1**2 + self.k2**2

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        keep1 = np.abs(self.n1) <= self.dealias_fraction * (self.nx // 2)
        keep2 = np.abs(self.n2) <= self.dealias_fraction * (self.ny // 2)
        return keep1[:, None] & keep2[None, :]

    @cached_property
    def nyquist_free(self) -> np.ndarray:
        """Mask that drops the Nyquist row and column (no well-defined derivative)."""
        return (np.abs(self.n1) != self.nx // 2)[:, None] & (np.abs(self.n2) != self.ny // 2)[None, :]

    @cached_property
    def offset_sign(self) -> np.ndarray:
        """``(-1)^m``: moves the x2 origin from the first grid row to ``x2 = 0``."""
        return np.where(self.n2 % 2 == 0, 1.0, -1.0)[None, :]

    @cached_property
    def reflect2(self) -> np.ndarray:
        """Index map ``m -> -m`` along the x2 axis (full spectrum)."""
        return (-np.arange(self.ny)) % self.ny

    @cached_property
    def reflect1(self) -> np.ndarray:
        return (-np.arange(self.nx)) % self.nx

    @cached_property
    def lambda1(self) -> float:
        """Smallest eigenvalue of ``-Delta`` on retained odd-in-x2 modes."""
        odd_ok = (self.n2 != 0)[None, :] & self.dealias_mask
        return float(self.ksq[odd_ok].min())

    # half-spectrum views used by the time stepper
    @cached_property
    def k2_half(self) -> np.ndarray:
        return self.k2[:, : self.ny // 2 + 1]

    @cached_property
    def ksq_half(self) -> np.ndarray:
        return self.ksq[:, : self.ny // 2 + 1]

    @cached_property
    def dealias_half(self) -> np.ndarray:
        return self.dealias_mask[:, : self.ny // 2 + 1]


def full_to_half(c: np.ndarray, ny: int) -> np.ndarray:
    return c[..., : ny // 2 + 1]


def half_to_full(ch: np.ndarray, nx: int, ny: int) -> np.ndarray:
    """Rebuild the full spectrum of a real field from its ``m >= 0`` half."""
    nh = ny // 2 + 1
    out = np.empty(ch.shape[:-2] + (nx, ny), dtype=complex)
    out[..., :nh] = ch
    neg = np.arange(nh, ny)
    # c(k1, -m) = conj(c(-k1, m))
    src = ch[..., (-np.arange(nx)) % nx, :][..., (-neg) % ny]
    out[..., nh:] = np.conj(src)
    return out


def half_weights(ny: int) -> np.ndarray:
    """Multiplicity of each stored half-spectrum column in the full sum."""
    w = np.full(ny // 2 + 1, 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    return w


def parity_project_half(ch: np.ndarray, sign: int | np.ndarray) -> np.ndarray:
    """Project half-spectrum coefficients onto a parity class.

    In the half spectrum the x2 reflection reads ``c(-k1, m) = s conj(c(k1, m))``.
    ``sign`` may be an array broadcasting against the leading axes.
    """
    nx = ch.shape[-2]
    flipped = np.conj(ch[..., (-np.arange(nx)) % nx, :])
    return 0.5 * (ch + sign * flipped)


def _project_full(c: np.ndarray, grid: Grid, parity: Parity) -> np.ndarray:
    c = 0.5 * (c + np.conj(c[grid.reflect1][:, grid.reflect2]))  # Hermitian
    c = 0.5 * (c + parity.sign * c[:, grid.reflect2])
    if parity is Parity.OddInX2:
        c[0, 0] = 0.0
    return c


@dataclass(frozen=True, eq=False)
class ScalarField:
    """One real scalar on the extended box with a declared x2 parity.

    Construction projects ``coeffs`` onto the real, parity-symmetric subspace,
    so every instance satisfies its invariants exactly.
    """

    grid: Grid
    parity: Parity
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != self.grid.shape:
            raise ValueError(f"coeffs shape {c.shape} != grid shape {self.grid.shape}")
        c = _project_full(c.copy(), self.grid, self.parity)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, grid: Grid, parity: Parity) -> "ScalarField":
        return cls(grid, parity, np.zeros(grid.shape, dtype=complex))

    @classmethod
    def from_half(cls, grid: Grid, parity: Parity, ch: np.ndarray) -> "ScalarField":
        return cls(grid, parity, half_to_full(ch, grid.nx, grid.ny))

    @property
    def half(self) -> np.ndarray:
        return full_to_half(self.coeffs, self.grid.ny)

    def _like(self, c: np.ndarray, parity: Parity | None = None) -> "ScalarField":
        return ScalarField(self.grid, parity or self.parity, c)

    def _check(self, other: "ScalarField"):
        if other.grid != self.grid or other.parity is not self.parity:
            raise ValueError("fields differ in grid or parity")

    def __add__(self, other: "ScalarField") -> "ScalarField":
        self._check(other)
        return self._like(self.coeffs + other.coeffs)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        self._check(other)
        return self._like(self.coeffs - other.coeffs)

    def __mul__(self, a: float) -> "ScalarField":
        return self._like(a * self.coeffs)

    __rmul__ = __mul__

    def __neg__(self) -> "ScalarField":
        return self._like(-self.coeffs)

    def dealiased(self) -> "ScalarField":
        return self._like(self.coeffs * self.grid.dealias_mask)


@dataclass(frozen=True, eq=False)
class VelocityField:
    """Solenoidal velocity with ``u1`` even and ``u2`` odd in x2."""

    u1: ScalarField
    u2: ScalarField
    check: bool = field(default=True, repr=False, compare=False)

    DIV_TOL = 1e-12

    def __post_init__(self):
        if self.u1.parity is not Parity.EvenInX2 or self.u2.parity is not Parity.OddInX2:
            raise ValueError("VelocityField needs u1 EvenInX2 and u2 OddInX2")
        if self.u1.grid != self.u2.grid:
            raise ValueError("velocity components live on different grids")
        if self.check:
            div = self.max_divergence()
            scale = norm(self, "V0")
            if div > self.DIV_TOL * max(scale, 1e-300) and div > 1e-300:
                raise ValueError(f"velocity field is not divergence free (max |k.u| = {div:.3e})")

    @property
    def grid(self) -> Grid:
        return self.u1.grid

    @classmethod
    def zeros(cls, grid: Grid) -> "VelocityField":
        return cls(ScalarField.zeros(grid, Parity.EvenInX2), ScalarField.zeros(grid, Parity.OddInX2))

    def max_divergence(self) -> float:
        g = self.grid
        d = g.k1 * self.u1.coeffs + g.k2 * self.u2.coeffs
        return float(np.abs(d).max())

    def __add__(self, other: "VelocityField") -> "VelocityField":
        return VelocityField(self.u1 + other.u1, self.u2 + other.u2)

    def __sub__(self, other: "VelocityField") -> "VelocityField":
        return VelocityField(self.u1 - other.u1, self.u2 - other.u2)

    def __mul__(self, a: float) -> "VelocityField":
        return VelocityField(a * self.u1, a * self.u2)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class FlowState:
    vel: VelocityField
    temp: ScalarField
    time: float = 0.0

    def __post_init__(self):
        if self.temp.parity is not Parity.OddInX2:
            raise ValueError("temperature must be OddInX2")
        if self.temp.grid != self.vel.grid:
            raise ValueError("temperature and velocity live on different grids")

    @property
    def grid(self) -> Grid:
        return self.temp.grid

    @classmethod
    def zeros(cls, grid: Grid, time: float = 0.0) -> "FlowState":
        return cls(VelocityField.zeros(grid), ScalarField.zeros(grid, Parity.OddInX2), time)

    def stacked_half(self) -> np.ndarray:
        """``(3, nx, ny//2+1)`` half spectra of ``(u1, u2, temp)``."""
        return np.stack([self.vel.u1.half, self.vel.u2.half, self.temp.half])

    @classmethod
    def from_stacked_half(cls, grid: Grid, ch: np.ndarray, time: float = 0.0, check: bool = True) -> "FlowState":
        u1 = ScalarField.from_half(grid, Parity.EvenInX2, ch[0])
        u2 = ScalarField.from_half(grid, Parity.OddInX2, ch[1])
        th = ScalarField.from_half(grid, Parity.OddInX2, ch[2])
        return cls(VelocityField(u1, u2, check=check), th, float(time))


# --------------------------------------------------------------------------
# transforms


def to_physical(f: ScalarField) -> np.ndarray:
    g = f.grid
    return sfft.ifft2(f.coeffs * g.offset_sign, norm="forward").real


def to_spectral(a: np.ndarray, parity: Parity, grid: Grid) -> ScalarField:
    """Forward transform followed by parity projection.

    Raises :class:`ParityError` if the projection discards more than half of
    the energy, which means ``a`` belongs to the other symmetry class.
    """
    a = np.asarray(a, dtype=float)
    if a.shape != grid.shape:
        raise ValueError(f"array shape {a.shape} != grid shape {grid.shape}")
    c = sfft.fft2(a, norm="forward") * grid.offset_sign
    f = ScalarField(grid, parity, c)
    e_in = np.sum(np.abs(c) ** 2)
    e_out = np.sum(np.abs(f.coeffs) ** 2)
    if e_in > 0 and e_out < 0.5 * e_in:
        raise ParityError(
            f"parity projection onto {parity.name} kept only {e_out / e_in:.1%} of the energy"
        )
    return f


def derivative(f: ScalarField, axis: str) -> ScalarField:
    g = f.grid
    if axis == "x1":
        return f._like(1j * g.k1 * f.coeffs * g.nyquist_free)
    if axis == "x2":
        return f._like(1j * g.k2 * f.coeffs * g.nyquist_free, f.parity.flipped())
    raise ValueError(f"axis must be 'x1' or 'x2', got {axis!r}")


def laplacian(f: ScalarField) -> ScalarField:
    return f._like(-f.grid.ksq * f.coeffs)


def product(f: ScalarField, g: ScalarField, dealias: bool = True) -> ScalarField:
    """Pointwise product; inputs and output are 2/3-truncated when ``dealias``."""
    grid = f.grid
    if dealias:
        f, g = f.dealiased(), g.dealiased()
    c = sfft.fft2(to_physical(f) * to_physical(g), norm="forward") * grid.offset_sign
    if dealias:
        c = c * grid.dealias_mask
    return ScalarField(grid, f.parity * g.parity, c)


# --------------------------------------------------------------------------
# inner products and norms


def _ip(a: np.ndarray, b: np.ndarray, area: float) -> float:
    return float(area * np.real(np.vdot(a, b)))


def inner(f, g) -> float:
    """L2 inner product over Omega of two scalars or two velocity fields."""
    if isinstance(f, VelocityField):
        return inner(f.u1, g.u1) + inner(f.u2, g.u2)
    return _ip(f.coeffs, g.coeffs, f.grid.area)


def _sq(f: ScalarField, kind: str) -> float:
    a = np.abs(f.coeffs) ** 2
    g = f.grid
    if kind == "L2":
        s = a.sum()
    elif kind in ("H1_semi", "V1"):
        s = (g.ksq * a).sum()
    elif kind == "V0":
        s = ((1.0 + g.ksq) * a).sum()
    elif kind == "Lap":
        s = (g.ksq**2 * a).sum()
    else:
        raise ValueError(f"unknown norm kind {kind!r}")
    return float(g.area * s)


def norm(f, kind: str = "L2") -> float:
    """Parseval-exact norms: ``L2``, ``H1_semi``, ``V0`` (full H1), ``V1`` (H1 seminorm), ``Lap``."""
    if isinstance(f, VelocityField):
        return float(np.sqrt(_sq(f.u1, kind) + _sq(f.u2, kind)))
    return float(np.sqrt(_sq(f, kind)))


def h2_norm_sq(f: ScalarField) -> float:
    """``||f||^2 + ||grad f||^2 + sum_jk ||d_j d_k f||^2``."""
    g = f.grid
    k1, k2 = g.k1, g.k2
    a = np.abs(f.coeffs) ** 2
    hess = (k1**4 + 2 * k1**2 * k2**2 + k2**4) * a
    return float(g.area * (a + g.ksq * a + hess).sum())


def div_lemma_gap(u: VelocityField) -> float:
    """``||grad u1||^2 - ||u2||^2``; nonnegative on divergence-free fields."""
    return _sq(u.u1, "H1_semi") - _sq(u.u2, "L2")


# --------------------------------------------------------------------------
# random fields for tests and initial conditions


def random_scalar(
    grid: Grid,
    parity: Parity,
    rng: np.random.Generator,
    kmax: int = 6,
    slope: float = 0.0,
    amplitude: float = 1.0,
) -> ScalarField:
    """Gaussian random field on integer modes ``|n1|, |n2| <= kmax``.

    Coefficient variance scales like ``(1 + |k|^2)^(-slope)``; the result is
    rescaled to L2 norm ``amplitude`` (zero fields stay zero).
    """
    c = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    keep = (np.abs(grid.n1)[:, None] <= kmax) & (np.abs(grid.n2)[None, :] <= kmax)
    c = c * keep * grid.dealias_mask * (1.0 + grid.ksq) ** (-slope / 2.0)
    f = ScalarField(grid, parity, c)
    n = norm(f)
    return f * (amplitude / n) if n > 0 else f


def velocity_from_streamfunction(psi: ScalarField) -> VelocityField:
    """``u1 = d psi / dx2``, ``u2 = -d psi / dx1`` for an odd streamfunction."""
    if psi.parity is not Parity.OddInX2:
        raise ValueError("streamfunction must be OddInX2")
    return VelocityField(derivative(psi, "x2"), -derivative(psi, "x1"))


def random_velocity(grid: Grid, rng: np.random.Generator, kmax: int = 6, slope: float = 0.0, amplitude: float = 1.0) -> VelocityField:
    psi = random_scalar(grid, Parity.OddInX2, rng, kmax=kmax, slope=slope)
    u = velocity_from_streamfunction(psi)
    n = norm(u)
    return u * (amplitude / n) if n > 0 else u
