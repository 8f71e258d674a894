"""``benard-da`` command line: ``run``, ``sweep`` and ``verify``.

Exit status: 0 success, 1 failed check, 2 configuration error, 3 numerical blow-up.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import RunManifest, atomic_write, close_logger, gnuplot_script, run_logger, write_checkpoint
from .checks import run_checks
from .config import ConfigFileError, IOSettings, load_config, serialize, with_overrides
from .field_core import FlowState
from .interpolants import estimate_c0
from .runner import (
    DAConfig,
    feasibility,
    fit_decay_rate,
    resolve_mu,
    run_twin,
    spin_up,
    sweep,
    sweep_to_csv,
)
from .time_integrator import BlowUpError, StabilityError

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_BLOWUP = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="benard-da", description="Nudging data assimilation for 2D Boussinesq convection.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out_default):
        p.add_argument("--config", metavar="PATH", help="INI configuration (defaults if omitted)")
        p.add_argument("--seed", type=int, help="override assimilation_runner.seed")
        p.add_argument("--out", metavar="DIR", default=out_default, help="run directory (default: %(default)s)")
        p.add_argument("--parallelism", type=int, help="override cli_io.parallelism")
        p.add_argument("--quiet", action="store_true", help="log to run.log only")

    r = sub.add_parser("run", help="one twin experiment")
    common(r, "runs/run")
    r.add_argument("--mu", type=float, help="override the nudging gain")
    r.add_argument("--h", type=float, help="override the observation resolution")

    s = sub.add_parser("sweep", help="twin runs over a (mu, h) grid")
    common(s, "runs/sweep")
    s.add_argument("--mu", type=float, nargs="+", help="override cli_io.mu_list")
    s.add_argument("--h", type=float, nargs="+", help="override cli_io.h_list")

    v = sub.add_parser("verify", help="invariant suite")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", metavar="DIR", help="also write verify.txt and a manifest here")
    v.add_argument("--config", metavar="PATH", help="take the physical parameters from this file")
    return ap


def _load(args) -> tuple[DAConfig, IOSettings]:
    if args.config:
        cfg, io = load_config(args.config)
    else:
        cfg, io = DAConfig(), IOSettings()
    cfg = with_overrides(
        cfg,
        seed=args.seed,
        mu=args.mu if args.command == "run" else None,
        h=args.h if args.command == "run" else None,
    )
    if args.command == "sweep":
        io = replace(io, mu_list=tuple(args.mu or io.mu_list), h_list=tuple(args.h or io.h_list))
    if getattr(args, "parallelism", None) is not None:
        io = replace(io, parallelism=args.parallelism)
    return cfg, io


def _fmt_kv(**kw) -> str:
    return " ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in kw.items())


def _rel_divergence(s: FlowState) -> float:
    scale = max(np.abs(s.vel.u1.coeffs).max(), np.abs(s.vel.u2.coeffs).max())
    return s.vel.max_divergence() / scale if scale > 0 else 0.0


def _prepare(out: str, cfg: DAConfig, io: IOSettings) -> Path:
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    atomic_write(d / "config.ini", serialize(cfg, io))
    return d


def cmd_run(args) -> int:
    try:
        cfg, io = _load(args)
    except (ConfigFileError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    run_dir = _prepare(args.out, cfg, io)
    log = run_logger(run_dir, echo=not args.quiet)
    man = RunManifest("run", serialize(cfg, io), __version__, cfg.seed, outputs=["config.ini", "run.log"])
    try:
        log.info(_fmt_kv(event="start", command="run", seed=cfg.seed, nx=cfg.grid.nx, ny=cfg.grid.ny))
        spun = spin_up(cfg)
        log.info(_fmt_kv(event="spinup_done", t=spun.state.time, K1_hat=spun.K1_hat(), u_V0=float(spun.u_V0[-1])))
        cfg = resolve_mu(cfg, spun)
        c0 = estimate_c0(cfg.spec.kind, cfg.grid, seed=cfg.seed)
        feas = feasibility(cfg.mu, cfg.spec.effective_h(cfg.grid), c0, cfg.phys.nu, cfg.spec.kind.approx_type)
        log.info(_fmt_kv(event="gain", mu=cfg.mu, h=cfg.spec.h, c0=c0, feasible=feas.feasible, slack=feas.slack))

        ckpts = []

        def save(tag: str, t: float, x: np.ndarray, y: np.ndarray):
            for who, c in (("ref", x), ("assim", y)):
                name = f"ckpt_{who}_{tag}.bsyn"
                write_checkpoint(run_dir / name, FlowState.from_stacked_half(cfg.grid, c, t, check=False))
                ckpts.append(name)
            log.info(_fmt_kv(event="checkpoint", t=t, tag=tag))

        every = io.checkpoint_every
        next_ck = [spun.state.time + every] if every > 0 else [math.inf]
        final = {}

        def on_sample(t, x, y):
            final["state"] = (t, x, y)
            if t >= next_ck[0] - 1e-9 * max(1.0, abs(t)):
                save(f"t{t:010.4f}", t, x, y)
                next_ck[0] += every

        rec = run_twin(cfg, spun.state, on_sample=on_sample)
        t, x, y = final["state"]
        if not ckpts or not ckpts[-1].endswith(f"t{t:010.4f}.bsyn"):
            save(f"t{t:010.4f}", t, x, y)
        (run_dir / "sync.csv").write_text(rec.to_csv())
        outputs = ["sync.csv", *ckpts]
        if io.gnuplot:
            (run_dir / "sync.gp").write_text(gnuplot_script("sync.csv", "sync.png"))
            outputs.append("sync.gp")

        fit = fit_decay_rate(rec)
        err = rec["sync_error"]
        ref_final = FlowState.from_stacked_half(cfg.grid, x, t, check=False)
        assim_final = FlowState.from_stacked_half(cfg.grid, y, t, check=False)
        div = max(_rel_divergence(s) for s in (ref_final, assim_final))
        man.checks = {
            "finite": bool(np.isfinite(x).all() and np.isfinite(y).all()),
            "divergence_free": bool(div <= 1e-10),
        }
        man.extra = {
            "mu": cfg.mu,
            "c0": c0,
            "feasible": feas.feasible,
            "feasibility_slack": feas.slack,
            "K1_hat": spun.K1_hat(),
            "gamma_hat": fit.gamma_hat,
            "predicted_gamma": rec.meta["predicted_gamma"],
            "r_squared": fit.r_squared,
            "final_relative_sync_error": float(err[-1] / err[0]) if err[0] > 0 else 0.0,
        }
        log.info(_fmt_kv(event="done", gamma_hat=fit.gamma_hat, r2=fit.r_squared, rel_err=man.extra["final_relative_sync_error"]))
        man.outputs += outputs
        status = EXIT_OK if all(man.checks.values()) else EXIT_CHECK
        man.status = "ok" if status == EXIT_OK else "check_failed"
    except BlowUpError as exc:
        log.error(_fmt_kv(event="blowup", step=exc.step, t=exc.time, message=str(exc).replace(" ", "_")))
        man.status = "blowup"
        status = EXIT_BLOWUP
    except StabilityError as exc:
        log.error(_fmt_kv(event="config_error", message=str(exc).replace(" ", "_")))
        man.status = "config_error"
        status = EXIT_CONFIG
    finally:
        close_logger(log)
    man.write(run_dir)
    return status


def cmd_sweep(args) -> int:
    try:
        cfg, io = _load(args)
        for mu in io.mu_list:
            replace(cfg, mu=mu)  # validates the step guard for every gain
    except (ConfigFileError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    run_dir = _prepare(args.out, cfg, io)
    log = run_logger(run_dir, echo=not args.quiet)
    man = RunManifest("sweep", serialize(cfg, io), __version__, cfg.seed, outputs=["config.ini", "run.log"])
    try:
        log.info(_fmt_kv(event="start", command="sweep", cells=len(io.mu_list) * len(io.h_list), parallelism=io.parallelism))
        spun = spin_up(cfg)
        c0 = estimate_c0(cfg.spec.kind, cfg.grid, seed=cfg.seed)
        log.info(_fmt_kv(event="spinup_done", K1_hat=spun.K1_hat(), c0=c0))
        rows = sweep(cfg, io.mu_list, io.h_list, io.parallelism, c0=c0, ref0=spun.state, out_dir=str(run_dir))
        for i, r in enumerate(rows):
            log.info(_fmt_kv(event="cell", index=i, mu=r.mu, h=r.h, feasible=r.feasible, gamma_hat=r.gamma_hat, final_error=r.final_error, error=r.error.replace(" ", "_") or "-"))
        (run_dir / "sweep.csv").write_text(sweep_to_csv(rows))
        cells = sorted(p.relative_to(run_dir).as_posix() for p in run_dir.glob("cell_*/sync.csv"))
        man.outputs += ["sweep.csv", *cells]
        man.checks = {"all_cells_ran": all(not r.error for r in rows)}
        man.extra = {"c0": c0, "K1_hat": spun.K1_hat()}
        status = EXIT_OK
    except BlowUpError as exc:
        log.error(_fmt_kv(event="blowup", step=exc.step, t=exc.time))
        man.status = "blowup"
        status = EXIT_BLOWUP
    finally:
        close_logger(log)
    man.write(run_dir)
    return status


def cmd_verify(args) -> int:
    try:
        phys = load_config(args.config)[0].phys if args.config else None
    except ConfigFileError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    results = run_checks(seed=args.seed, p=phys)
    lines = [r.line() for r in results]
    failed = [r.name for r in results if not r.passed]
    lines.append(f"{len(results) - len(failed)}/{len(results)} checks passed" + (f"; failed: {', '.join(failed)}" if failed else ""))
    print("\n".join(lines))
    if args.out:
        d = Path(args.out)
        d.mkdir(parents=True, exist_ok=True)
        (d / "verify.txt").write_text("\n".join(lines) + "\n")
        man = RunManifest("verify", "", __version__, args.seed, outputs=["verify.txt"])
        man.checks = {r.name: r.passed for r in results}
        man.status = "ok" if not failed else "check_failed"
        man.write(d)
    return EXIT_CHECK if failed else EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handler = {"run": cmd_run, "sweep": cmd_sweep, "verify": cmd_verify}[args.command]
    # overflow on the way to a blow-up is reported through BlowUpError instead
    with np.errstate(over="ignore", invalid="ignore"):
        return handler(args)


if __name__ == "__main__":
    sys.exit(main())
