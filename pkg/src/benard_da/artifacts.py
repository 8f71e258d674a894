"""Run-directory artifacts: checkpoints, manifest, gnuplot script and log.

Checkpoint layout (little-endian)::

    b"BSYN1"                       5-byte magic
    nx, ny                         int32
    L, time                        float64
    u1, u2, temp                   nx*ny complex coefficients each, stored as
                                   interleaved (re, im) float64, row-major
                                   (k1 index outer), numpy FFT ordering

Coefficients are the ``ScalarField.coeffs`` arrays, so a checkpoint together
with ``L`` fully determines the state.  The dealias fraction is not stored;
readers assume the default unless told otherwise.
"""

from __future__ import annotations

import datetime as _dt
import json
import logging
import os
import struct
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .field_core import FlowState, Grid, Parity, ScalarField, VelocityField

__all__ = [
    "MAGIC",
    "write_checkpoint",
    "read_checkpoint",
    "RunManifest",
    "atomic_write",
    "gnuplot_script",
    "run_logger",
    "LOG_PREFIX",
]

MAGIC = b"BSYN1"
_HEAD = struct.Struct("<5sii dd")
LOG_PREFIX = "BSYN"


def atomic_write(path, data: bytes | str):
    """Write via a temporary file in the same directory and ``os.replace``."""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def checkpoint_bytes(state: FlowState) -> bytes:
    g = state.grid
    parts = [_HEAD.pack(MAGIC, g.nx, g.ny, g.L, state.time)]
    for f in (state.vel.u1, state.vel.u2, state.temp):
        parts.append(np.ascontiguousarray(f.coeffs).astype("<c16").tobytes())
    return b"".join(parts)


def write_checkpoint(path, state: FlowState):
    atomic_write(path, checkpoint_bytes(state))


def read_checkpoint(path, dealias_fraction: float = 2.0 / 3.0) -> FlowState:
    raw = Path(path).read_bytes()
    if len(raw) < _HEAD.size or raw[:5] != MAGIC:
        raise ValueError(f"{path}: not a BSYN1 checkpoint")
    _, nx, ny, L, t = _HEAD.unpack_from(raw)
    n = nx * ny * 16
    if len(raw) != _HEAD.size + 3 * n:
        raise ValueError(f"{path}: expected {_HEAD.size + 3 * n} bytes, found {len(raw)}")
    grid = Grid(L, nx, ny, dealias_fraction)
    blocks = [
        np.frombuffer(raw, dtype="<c16", count=nx * ny, offset=_HEAD.size + i * n).reshape(nx, ny)
        for i in range(3)
    ]
    vel = VelocityField(
        ScalarField(grid, Parity.EvenInX2, blocks[0]),
        ScalarField(grid, Parity.OddInX2, blocks[1]),
        check=False,
    )
    return FlowState(vel, ScalarField(grid, Parity.OddInX2, blocks[2]), t)


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _plain(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"{type(o).__name__} is not JSON serializable")


@dataclass
class RunManifest:
    """Summary of one run directory; ``outputs`` are paths relative to it."""

    command: str
    config: str
    version: str
    seed: int
    started: str = field(default_factory=_now)
    finished: str = ""
    outputs: list[str] = field(default_factory=list)
    checks: dict[str, bool] = field(default_factory=dict)
    status: str = "ok"
    extra: dict = field(default_factory=dict)

    def write(self, run_dir):
        """Stamp ``finished`` and write ``manifest.json`` atomically.

        Raises ``FileNotFoundError`` if a listed output is missing, so a
        manifest never names files that do not exist.
        """
        run_dir = Path(run_dir)
        missing = [p for p in self.outputs if not (run_dir / p).exists()]
        if missing:
            raise FileNotFoundError(f"manifest outputs missing: {missing}")
        self.finished = _now()
        atomic_write(run_dir / "manifest.json", json.dumps(asdict(self), indent=2, sort_keys=True, default=_plain) + "\n")

    @classmethod
    def read(cls, run_dir) -> "RunManifest":
        return cls(**json.loads((Path(run_dir) / "manifest.json").read_text()))


def gnuplot_script(csv_name: str = "sync.csv", out_png: str = "sync.png") -> str:
    """Semilog plot of the synchronization error against time."""
    return (
        "set datafile separator ','\n"
        "set terminal pngcairo size 900,600\n"
        f"set output '{out_png}'\n"
        "set logscale y\n"
        "set format y '10^{%L}'\n"
        "set xlabel 't'\n"
        "set key top right\n"
        f"plot '{csv_name}' using 1:($4*$4+$5*$5) skip 1 with lines title '|w|_{{V0}}^2+|xi|^2', \\\n"
        f"     '{csv_name}' using 1:6 skip 1 with lines title '|grad xi|'\n"
    )


class _Formatter(logging.Formatter):
    def format(self, record):
        ts = _dt.datetime.fromtimestamp(record.created, _dt.timezone.utc).isoformat(timespec="milliseconds")
        return f"{LOG_PREFIX}|{ts}|{record.levelname}|{record.getMessage()}"


def run_logger(run_dir, name: str = "benard_da.run", echo: bool = True) -> logging.Logger:
    """Logger writing ``BSYN|<iso time>|<LEVEL>|key=value ...`` lines to ``run.log``."""
    log = logging.getLogger(f"{name}.{os.getpid()}.{Path(run_dir).resolve()}")
    log.setLevel(logging.INFO)
    log.propagate = False
    for h in list(log.handlers):
        log.removeHandler(h)
        h.close()
    fh = logging.FileHandler(Path(run_dir) / "run.log", mode="w", encoding="utf-8")
    fh.setFormatter(_Formatter())
    log.addHandler(fh)
    if echo:
        sh = logging.StreamHandler()
        sh.setFormatter(_Formatter())
        log.addHandler(sh)
    return log


def close_logger(log: logging.Logger):
    for h in list(log.handlers):
        log.removeHandler(h)
        h.close()
