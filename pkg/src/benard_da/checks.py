"""Named invariant checks run by ``benard-da verify`` and the test suite.

Each check returns a :class:`CheckResult` with the worst measured value and
the tolerance it was held to.  Checks run on a small grid by default so the
whole suite takes a few seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
import numpy as np

from .dynamics import (
    PhysParams,
    advect_scalar,
    advect_velocity,
    assimilated_rhs,
    leray_project,
    reference_rhs,
)
from .field_core import (
    FlowState,
    Grid,
    Parity,
    ScalarField,
    VelocityField,
    derivative,
    div_lemma_gap,
    h2_norm_sq,
    inner,
    laplacian,
    norm,
    product,
    random_scalar,
    random_velocity,
    to_physical,
    to_spectral,
)
from .interpolants import InterpolantKind, InterpolantSpec, c0_profile, get_interpolant, lift, observe
from .runner import feasibility
from .time_integrator import Stepper, StepperConfig

__all__ = ["CheckResult", "run_checks", "identity_residuals"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    tol: float
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.name}: worst={self.value:.3e} tol={self.tol:.1e} {self.detail}".rstrip()


def _le(name, value, tol, detail=""):
    return CheckResult(name, bool(value <= tol), float(value), tol, detail)


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    s = np.abs(b).max()
    return float(np.abs(a - b).max() / s) if s > 0 else float(np.abs(a).max())


def _rng(seed: int, tag: int) -> np.random.Generator:
    return np.random.default_rng([seed, tag])


# -- field_core -------------------------------------------------------------


def check_roundtrip(grid: Grid, seed: int) -> CheckResult:
    rng = _rng(seed, 1)
    worst = 0.0
    for parity in Parity:
        for _ in range(10):
            f = random_scalar(grid, parity, rng, kmax=grid.nx // 3)
            g = to_spectral(to_physical(f), parity, grid)
            worst = max(worst, _rel(g.coeffs, f.coeffs))
    return _le("field_core.roundtrip", worst, 1e-13)


def check_parity_closure(grid: Grid, seed: int) -> CheckResult:
    """Physical-space products land in the predicted class before any projection."""
    rng = _rng(seed, 2)
    worst = 0.0
    for p in Parity:
        for q in Parity:
            for _ in range(5):
                a = to_physical(random_scalar(grid, p, rng))
                b = to_physical(random_scalar(grid, q, rng))
                prod = a * b
                # reflect x2 -> -x2 on the grid: row j maps to (ny - j) mod ny
                refl = prod[:, (-np.arange(grid.ny)) % grid.ny]
                s = (p * q).sign
                worst = max(worst, float(np.abs(refl - s * prod).max() / np.abs(prod).max()))
                # the dealiased product keeps the predicted class
                f = product(to_spectral(a, p, grid), to_spectral(b, q, grid))
                if f.parity is not p * q:
                    worst = math.inf
    return _le("field_core.parity_closure", worst, 1e-13)


def check_div_lemma(grid: Grid, seed: int, n: int = 100) -> CheckResult:
    rng = _rng(seed, 3)
    worst = 0.0  # most negative relative gap, reported as a positive deficit
    for _ in range(n):
        u = random_velocity(grid, rng, kmax=int(rng.integers(1, grid.nx // 3)))
        gap = div_lemma_gap(u) / norm(u.u1, "H1_semi") ** 2
        worst = max(worst, -gap)
    return _le("field_core.div_lemma", worst, 1e-10, f"over {n} fields")


def check_poincare(grid: Grid, seed: int, n: int = 50) -> CheckResult:
    rng = _rng(seed, 4)
    lam = grid.lambda1
    worst = -math.inf
    for _ in range(n):
        f = random_scalar(grid, Parity.OddInX2, rng, kmax=int(rng.integers(1, grid.nx // 3)))
        worst = max(worst, norm(f) ** 2 * lam / norm(f, "H1_semi") ** 2 - 1.0)
    return _le("field_core.poincare", worst, 1e-12, f"lambda1={lam:.6g}")


def check_h2_identity(grid: Grid, seed: int, n: int = 20) -> CheckResult:
    """On the periodic box ``sum_jk ||d_j d_k w||^2 = ||Lap w||^2`` for each velocity component."""
    rng = _rng(seed, 5)
    worst = 0.0
    for _ in range(n):
        u = random_velocity(grid, rng)
        for w in (u.u1, u.u2):
            want = norm(w) ** 2 + norm(w, "H1_semi") ** 2 + norm(w, "Lap") ** 2
            worst = max(worst, abs(h2_norm_sq(w) - want) / want)
    return _le("field_core.h2_identity", worst, 1e-12)


# -- boussinesq_dynamics ------------------------------------------------------


def identity_residuals(u: VelocityField, th: ScalarField) -> tuple[float, float, float]:
    """Relative sizes of ``(B(u,u),u)``, ``(B(u,th),th)`` and ``(B(u,u),Lap u)``."""
    b1, b2 = advect_velocity(u, u)
    bu = VelocityField(b1, b2, check=False)
    r1 = abs(inner(bu, u)) / (norm(bu) * norm(u))
    bt = advect_scalar(u, th)
    r2 = abs(inner(bt, th)) / (norm(bt) * norm(th))
    lap = VelocityField(laplacian(u.u1), laplacian(u.u2), check=False)
    r3 = abs(inner(bu, lap)) / (norm(bu) * norm(lap))
    return r1, r2, r3


def check_trilinear(grid: Grid, seed: int, n: int = 20) -> list[CheckResult]:
    rng = _rng(seed, 6)
    worst = np.zeros(3)
    for _ in range(n):
        u = random_velocity(grid, rng, kmax=grid.nx // 4)
        th = random_scalar(grid, Parity.OddInX2, rng, kmax=grid.nx // 4)
        worst = np.maximum(worst, identity_residuals(u, th))
    names = ("dynamics.B_orthogonality", "dynamics.scalar_orthogonality", "dynamics.enstrophy_orthogonality")
    return [_le(nm, w, 1e-9, f"over {n} fields") for nm, w in zip(names, worst)]


def check_leray(grid: Grid, seed: int) -> CheckResult:
    rng = _rng(seed, 7)
    worst = 0.0
    for _ in range(5):
        f1 = random_scalar(grid, Parity.EvenInX2, rng)
        f2 = random_scalar(grid, Parity.OddInX2, rng)
        p = leray_project((f1, f2))
        pp = leray_project(p)
        worst = max(worst, p.max_divergence() / norm(p, "V0"), _rel(pp.u1.coeffs, p.u1.coeffs), _rel(pp.u2.coeffs, p.u2.coeffs))
        # gradients are annihilated
        phi = random_scalar(grid, Parity.EvenInX2, rng)
        grad = leray_project((derivative(phi, "x1"), derivative(phi, "x2")))
        worst = max(worst, norm(grad) / norm(derivative(phi, "x1")))
    return _le("dynamics.leray", worst, 1e-12)


def _random_state(grid: Grid, rng) -> FlowState:
    return FlowState(random_velocity(grid, rng, kmax=grid.nx // 4), random_scalar(grid, Parity.OddInX2, rng, kmax=grid.nx // 4))


def check_no_temperature_feedback(grid: Grid, seed: int, p: PhysParams) -> CheckResult:
    """The nudged temperature tendency ignores the observations entirely."""
    rng = _rng(seed, 8)
    spec = InterpolantSpec(InterpolantKind.FourierModes, min(grid.L, 2.0) / 8)
    worst = 0.0
    for _ in range(5):
        s = _random_state(grid, rng)
        other = random_velocity(grid, rng)
        obs = observe(other.u1, spec)
        a = assimilated_rhs(s, obs, 1e3, p)
        r = reference_rhs(s, p)
        worst = max(worst, float(np.abs(a.dtemp.coeffs - r.dtemp.coeffs).max()))
    return _le("dynamics.no_temperature_feedback", worst, 0.0)


def check_synchronized_manifold(grid: Grid, seed: int, p: PhysParams) -> CheckResult:
    """Observing the state itself makes the nudged and reference tendencies agree."""
    rng = _rng(seed, 9)
    worst = 0.0
    for kind in InterpolantKind:
        spec = InterpolantSpec(kind, min(grid.L, 2.0) / 4)
        s = _random_state(grid, rng)
        a = assimilated_rhs(s, observe(s.vel.u1.dealiased(), spec), 50.0, p)
        r = reference_rhs(s, p)
        for x, y in ((a.dvel.u1, r.dvel.u1), (a.dvel.u2, r.dvel.u2), (a.dtemp, r.dtemp)):
            worst = max(worst, _rel(x.coeffs, y.coeffs))
    return _le("dynamics.synchronized_manifold", worst, 1e-12)


# -- interpolants -------------------------------------------------------------


def check_interpolant_linearity(grid: Grid, seed: int) -> CheckResult:
    rng = _rng(seed, 10)
    worst = 0.0
    for kind in InterpolantKind:
        spec = InterpolantSpec(kind, min(grid.L, 2.0) / 4)
        op = get_interpolant(spec, grid)
        f = random_scalar(grid, Parity.EvenInX2, rng)
        g = random_scalar(grid, Parity.EvenInX2, rng)
        a, b = rng.standard_normal(2)
        lhs = op.observe_half((f * a + g * b).half)
        rhs = a * op.observe_half(f.half) + b * op.observe_half(g.half)
        worst = max(worst, _rel(lhs, rhs))
        # lifted fields keep the even class
        lf = lift(observe(f, spec), grid)
        worst = max(worst, float(lf.parity is not Parity.EvenInX2))
    return _le("interpolants.linearity", worst, 1e-12)


def check_fourier_projection(grid: Grid, seed: int) -> CheckResult:
    """Fourier truncation is an orthogonal projection."""
    rng = _rng(seed, 11)
    spec = InterpolantSpec(InterpolantKind.FourierModes, min(grid.L, 2.0) / 6)
    f = random_scalar(grid, Parity.EvenInX2, rng)
    pf = lift(observe(f, spec), grid)
    ppf = lift(observe(pf, spec), grid)
    resid = f - pf
    worst = max(_rel(ppf.coeffs, pf.coeffs), abs(inner(resid, pf)) / (norm(f) ** 2))
    return _le("interpolants.fourier_projection", worst, 1e-13)


def check_c0(grid: Grid, seed: int, n_samples: int = 20) -> list[CheckResult]:
    out = []
    for kind in InterpolantKind:
        prof = c0_profile(kind, grid, n_samples=n_samples, h_list=(0.5, 0.25), seed=seed)
        v = np.array(list(prof.values()))
        ok = bool(np.isfinite(v).all())
        bound = 1.0 if kind is InterpolantKind.FourierModes else math.inf
        out.append(CheckResult(f"interpolants.c0_{kind.value}", bool(ok and v.max() <= bound), float(v.max()), bound, f"profile={np.round(v, 4).tolist()}"))
    return out


# -- runner / integrator --------------------------------------------------------


def check_feasibility_boundary() -> CheckResult:
    # exact binary fractions so both sides are computed without rounding
    cases = [
        (feasibility(1.0, 0.5, 1.0, 1.0, "type1").feasible, True),  # 4*1*1*0.25 = 1 = nu
        (feasibility(1.0, 0.5, 1.0, 0.96875, "type1").feasible, False),
        (feasibility(0.125, 0.5, 1.0, 1.0, "type2").feasible, True),  # 2*0.125*0.25 = 1/16
        (feasibility(0.25, 0.5, 1.0, 1.0, "type2").feasible, False),
    ]
    bad = sum(got is not want for got, want in cases)
    return _le("runner.feasibility_boundary", bad, 0, f"{len(cases)} cases")


def check_zero_state(grid: Grid, p: PhysParams, nsteps: int = 200) -> CheckResult:
    st = Stepper(grid, p, StepperConfig(dt=1e-2))
    c = st.run(np.zeros((3,) + grid.half_shape, dtype=complex), nsteps)
    return _le("time_integrator.zero_state", float(np.abs(c).max()), 1e-14, f"{nsteps} steps")


def check_kernel_matches_fields(grid: Grid, seed: int, p: PhysParams) -> CheckResult:
    """The fused half-spectrum tendency agrees with the field-level operators."""
    rng = _rng(seed, 12)
    s = _random_state(grid, rng)
    t = reference_rhs(s, p)
    b1, b2 = advect_velocity(s.vel, s.vel)
    f = leray_project((-b1 + laplacian(s.vel.u1) * p.nu, -b2 + s.temp + laplacian(s.vel.u2) * p.nu))
    dtemp = -advect_scalar(s.vel, s.temp) + s.vel.u2 + laplacian(s.temp) * p.kappa
    m = grid.dealias_mask
    worst = max(
        _rel(t.dvel.u1.coeffs, f.u1.coeffs * m),
        _rel(t.dvel.u2.coeffs, f.u2.coeffs * m),
        _rel(t.dtemp.coeffs, dtemp.coeffs * m),
    )
    return _le("dynamics.kernel_consistency", worst, 1e-12)


def run_checks(grid: Grid | None = None, seed: int = 0, p: PhysParams | None = None) -> list[CheckResult]:
    grid = grid or Grid(nx=32, ny=32)
    p = p or PhysParams()
    out: list[CheckResult] = [
        check_roundtrip(grid, seed),
        check_parity_closure(grid, seed),
        check_div_lemma(grid, seed),
        check_poincare(grid, seed),
        check_h2_identity(grid, seed),
        *check_trilinear(grid, seed),
        check_leray(grid, seed),
        check_kernel_matches_fields(grid, seed, p),
        check_no_temperature_feedback(grid, seed, p),
        check_synchronized_manifold(grid, seed, p),
        check_interpolant_linearity(grid, seed),
        check_fourier_projection(grid, seed),
        *check_c0(Grid(nx=64, ny=64), seed),
        check_feasibility_boundary(),
        check_zero_state(grid, p),
    ]
    return out
