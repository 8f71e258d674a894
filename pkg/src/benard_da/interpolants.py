"""Observation operators ``I_h`` for the horizontal velocity.

Three kinds are provided:

``FourierModes``
    orthogonal projection onto modes with physical ``|k| <= 1 / h``;
``VolumeElements``
    averages over an ``m x n`` partition of the box, mirror symmetric about
    ``x2 = 0`` (``n`` even), lifted back as a piecewise-constant field;
``NodalValues``
    grid values nearest an ``m x n`` node lattice, lifted back by periodic
    bilinear interpolation.

All operators act on half-spectrum coefficients (see ``field_core``) through
small precomputed separable matrices, so observing and lifting cost no FFTs.

Signal file layout (``save_signal``): ASCII header lines ``key value`` closed
by a line ``END``, then the payload as little-endian float64.  Payload order:
FourierModes stores the retained ``m >= 0`` coefficients in row-major
``(k1, m)`` order as interleaved ``(re, im)``; the other kinds store the
``(m, n)`` value array row-major, x1 index slowest.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .field_core import (
    Grid,
    Parity,
    ScalarField,
    h2_norm_sq,
    half_weights,
    norm,
    parity_project_half,
    random_scalar,
)

__all__ = [
    "InterpolantKind",
    "InterpolantSpec",
    "ObservedSignal",
    "Interpolant",
    "get_interpolant",
    "observe",
    "lift",
    "c0_ratio",
    "c0_profile",
    "estimate_c0",
    "save_signal",
    "load_signal",
]


class InterpolantKind(str, enum.Enum):
    FourierModes = "FourierModes"
    VolumeElements = "VolumeElements"
    NodalValues = "NodalValues"

    @property
    def approx_type(self) -> str:
        """Which approximation inequality the kind is analysed under."""
        return "type2" if self is InterpolantKind.NodalValues else "type1"


@dataclass(frozen=True)
class InterpolantSpec:
    kind: InterpolantKind = InterpolantKind.FourierModes
    h: float = 1.0 / (8.0 * math.pi)

    def __post_init__(self):
        object.__setattr__(self, "kind", InterpolantKind(self.kind))
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ValueError(f"h must be positive, got {self.h!r}")

    def check_grid(self, grid: Grid):
        if self.h > min(grid.L, 2.0) / 2.0:
            raise ValueError(f"h={self.h} exceeds min(L, 2)/2 = {min(grid.L, 2.0) / 2.0}")

    def layout(self, grid: Grid) -> tuple[int, int]:
        """Element / node counts ``(m, n)`` along x1 and x2."""
        m = math.ceil(grid.L / self.h - 1e-9)
        n = 2 * math.ceil(1.0 / self.h - 1e-9)
        return m, n

    def effective_h(self, grid: Grid) -> float:
        if self.kind is InterpolantKind.FourierModes:
            return self.h
        m, n = self.layout(grid)
        return max(grid.L / m, 2.0 / n)


@dataclass(frozen=True, eq=False)
class ObservedSignal:
    spec: InterpolantSpec
    grid: Grid
    data: np.ndarray = field(repr=False)
    time: float = 0.0

    def __sub__(self, other: "ObservedSignal") -> "ObservedSignal":
        if other.spec != self.spec or other.grid != self.grid:
            raise ValueError("signals come from different interpolants")
        return ObservedSignal(self.spec, self.grid, self.data - other.data, self.time)


def _cell_avg(k: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Average of ``exp(i k x)`` over ``[a, b)``: rows index cells, columns ``k``."""
    mid = 0.5 * (a + b)[:, None]
    width = (b - a)[:, None]
    return np.exp(1j * k[None, :] * mid) * np.sinc(k[None, :] * width / (2 * np.pi))


def _hats(x: np.ndarray, origin: float, spacing: float, count: int) -> np.ndarray:
    """Periodic piecewise-linear interpolation weights, shape ``(len(x), count)``."""
    s = (x - origin) / spacing
    p0 = np.floor(s + 1e-12).astype(int)
    t = s - p0
    t[np.abs(t) < 1e-12] = 0.0
    w = np.zeros((x.size, count))
    rows = np.arange(x.size)
    np.add.at(w, (rows, p0 % count), 1.0 - t)
    np.add.at(w, (rows, (p0 + 1) % count), t)
    return w


def _nearest_symmetric(ny: int, n: int) -> np.ndarray:
    """Grid rows nearest the x2 nodes, mirrored so that row ``j`` pairs with ``ny - j``."""
    j = np.empty(n, dtype=int)
    for q in range(n // 2 + 1):
        j[q] = int(math.floor(q * ny / n + 0.5))
    for q in range(n // 2 + 1, n):
        j[q] = (ny - j[n - q]) % ny
    return j


class Interpolant:
    """``I_h`` for one ``(spec, grid)`` pair, acting on half spectra."""

    def __init__(self, spec: InterpolantSpec, grid: Grid):
        spec.check_grid(grid)
        self.spec = spec
        self.grid = grid
        self.kind = spec.kind
        nh = grid.ny // 2 + 1
        k1 = grid.k1[:, 0]
        k2 = grid.k2_half[0]
        w = half_weights(grid.ny)
        nyq = grid.nyquist_free[:, :nh]

        if self.kind is InterpolantKind.FourierModes:
            self.mask = grid.ksq_half <= 1.0 / spec.h**2
            self.shape = (int(self.mask.sum()),)
            return

        m, n = spec.layout(grid)
        if m < 2 or n < 2 or m > grid.nx // 2 or n > grid.ny // 2:
            raise ValueError(f"h={spec.h} gives a {m}x{n} layout incompatible with grid {grid.nx}x{grid.ny}")
        self.shape = (m, n)
        e1 = np.arange(m + 1) * (grid.L / m)
        e2 = -1.0 + np.arange(n + 1) * (2.0 / n)
        self.edges = (e1, e2)

        if self.kind is InterpolantKind.VolumeElements:
            a1 = _cell_avg(k1, e1[:-1], e1[1:])  # (m, nx)
            a2 = _cell_avg(k2, e2[:-1], e2[1:])  # (n, nh)
            self._obs1 = a1
            self._obs2 = (a2 * w[None, :]).T
            # Fourier coefficients of the indicator of each cell
            self._lift1 = np.conj(a1).T * (grid.L / m) / grid.L
            self._lift2 = np.conj(a2) * (2.0 / n) / 2.0
        else:
            i_nodes = np.round(np.arange(m) * grid.nx / m).astype(int) % grid.nx
            j_nodes = _nearest_symmetric(grid.ny, n)
            x1n = grid.x1[i_nodes]
            x2n = grid.x2[j_nodes]
            self.nodes = (x1n, x2n)
            self._obs1 = np.exp(1j * k1[None, :] * x1n[:, None])
            self._obs2 = (np.exp(1j * k2[None, :] * x2n[:, None]) * w[None, :]).T
            w1 = _hats(grid.x1, 0.0, grid.L / m, m)  # (nx, m)
            w2 = _hats(grid.x2, -1.0, 2.0 / n, n)  # (ny, n)
            f1 = np.exp(-1j * k1[:, None] * grid.x1[None, :]) / grid.nx
            f2 = np.exp(-1j * k2[:, None] * grid.x2[None, :]) / grid.ny
            self._lift1 = f1 @ w1
            self._lift2 = (f2 @ w2).T
        self._nyq = nyq

    def observe_half(self, ch: np.ndarray) -> np.ndarray:
        if self.kind is InterpolantKind.FourierModes:
            return ch[self.mask]
        return np.real(self._obs1 @ ch @ self._obs2)

    def lift_half(self, data: np.ndarray) -> np.ndarray:
        if self.kind is InterpolantKind.FourierModes:
            out = np.zeros(self.grid.half_shape, dtype=complex)
            out[self.mask] = data
            return out
        ch = (self._lift1 @ data @ self._lift2) * self._nyq
        return parity_project_half(ch, Parity.EvenInX2.sign)


@lru_cache(maxsize=64)
def get_interpolant(spec: InterpolantSpec, grid: Grid) -> Interpolant:
    return Interpolant(spec, grid)


def observe(u1: ScalarField, spec: InterpolantSpec, time: float = 0.0) -> ObservedSignal:
    if u1.parity is not Parity.EvenInX2:
        raise ValueError("observations are taken of the even (horizontal) velocity component")
    op = get_interpolant(spec, u1.grid)
    return ObservedSignal(spec, u1.grid, op.observe_half(u1.half), float(time))


def lift(obs: ObservedSignal, grid: Grid) -> ScalarField:
    if obs.grid != grid:
        raise ValueError("observation was taken on a different grid")
    op = get_interpolant(obs.spec, grid)
    return ScalarField.from_half(grid, Parity.EvenInX2, op.lift_half(obs.data))


# --------------------------------------------------------------------------
# approximation constant


def c0_ratio(phi: ScalarField, spec: InterpolantSpec, approx_type: str | None = None) -> float:
    """Smallest ``c0`` for which ``phi`` satisfies the approximation inequality.

    type1: ``||phi - I_h phi|| <= c0 h ||phi||_H1``.
    type2: ``||phi - I_h phi|| <= c0 h ||phi||_H1 + c0^2 h^2 ||phi||_H2``.
    """
    grid = phi.grid
    approx_type = approx_type or spec.kind.approx_type
    h = spec.effective_h(grid)
    r = norm(phi - lift(observe(phi, spec), grid), "L2")
    a = norm(phi, "V0")
    if r == 0.0:
        return 0.0
    if approx_type == "type1":
        return r / (h * a)
    b = math.sqrt(h2_norm_sq(phi))
    # positive root of (h^2 b) c^2 + (h a) c - r = 0
    return 2.0 * r / (h * a + math.sqrt((h * a) ** 2 + 4.0 * h**2 * b * r))


def _c0_sample(grid: Grid, h: float, rng: np.random.Generator) -> ScalarField:
    # content spread around the observation scale, with a random band emphasis
    kc = rng.uniform(0.5, 2.0) / h
    c = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    k = np.sqrt(grid.ksq)
    c = c * np.exp(-0.5 * (k / kc) ** 2) * grid.dealias_mask
    c[0, 0] = 0.0
    return ScalarField(grid, Parity.EvenInX2, c)


def c0_profile(kind, grid: Grid, n_samples: int = 50, h_list=(0.5, 0.25, 0.125), seed: int = 0) -> dict[float, float]:
    """Max ratio over ``n_samples`` random even fields, separately for each ``h``."""
    if n_samples < 20:
        raise ValueError("n_samples must be >= 20")
    kind = InterpolantKind(kind)
    out = {}
    for h in h_list:
        spec = InterpolantSpec(kind, h)
        rng = np.random.default_rng([seed, int(round(1e6 * h))])
        out[float(h)] = max(c0_ratio(_c0_sample(grid, spec.effective_h(grid), rng), spec) for _ in range(n_samples))
    return out


def estimate_c0(kind, grid: Grid, n_samples: int = 50, h_list=(0.5, 0.25, 0.125), seed: int = 0) -> float:
    return max(c0_profile(kind, grid, n_samples, h_list, seed).values())


# --------------------------------------------------------------------------
# replay files


def save_signal(path, obs: ObservedSignal):
    d = np.asarray(obs.data)
    payload = np.column_stack([d.real, d.imag]).ravel() if np.iscomplexobj(d) else d.ravel()
    header = (
        f"kind {obs.spec.kind.value}\nh {float(obs.spec.h):.17g}\ntime {float(obs.time):.17g}\n"
        f"grid {float(obs.grid.L):.17g} {obs.grid.nx} {obs.grid.ny} {float(obs.grid.dealias_fraction):.17g}\n"
        f"count {payload.size}\nEND\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(payload.astype("<f8").tobytes())


def load_signal(path) -> ObservedSignal:
    raw = Path(path).read_bytes()
    end = raw.index(b"END\n") + 4
    meta = {}
    for line in raw[:end].decode("ascii").splitlines()[:-1]:
        key, _, val = line.partition(" ")
        meta[key] = val
    L, nx, ny, frac = meta["grid"].split()
    grid = Grid(float(L), int(nx), int(ny), float(frac))
    spec = InterpolantSpec(InterpolantKind(meta["kind"]), float(meta["h"]))
    payload = np.frombuffer(raw[end:], dtype="<f8").astype(float)
    if payload.size != int(meta["count"]):
        raise ValueError("truncated signal payload")
    if spec.kind is InterpolantKind.FourierModes:
        data = payload[0::2] + 1j * payload[1::2]
    else:
        data = payload.reshape(get_interpolant(spec, grid).shape)
    return ObservedSignal(spec, grid, data, float(meta["time"]))
