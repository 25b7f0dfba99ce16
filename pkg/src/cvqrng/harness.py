"""Parameter sweeps over the mean photon number of a coherent source."""

from __future__ import annotations

import configparser
import csv
import dataclasses
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .certify import DualCertificate, RandomnessResult, certify, verify_certificate
from .detector import TmdConfig, build_tmd_povm
from .errors import CertificationError, InvalidParameterError, VerificationError
from .fock import (
    MeasurementStatistics,
    coherent_source,
    default_eval_horizon,
    expected_outcome_probabilities,
)
from .reduction import TAIL_MODES, TruncationContext, build_truncation_context

__all__ = [
    "CSV_HEADER",
    "RunConfig",
    "PointRecord",
    "SweepReport",
    "load_config",
    "prepare_point",
    "run_point",
    "run_sweep",
    "emit_csv",
    "format_csv",
    "dump_certificates",
    "read_certificate",
    "reverify_dump",
]

log = logging.getLogger(__name__)

CSV_HEADER = (
    "mean_photon", "cutoff", "m", "n_modes", "tail_mode", "p_guess_bound",
    "min_entropy_bits", "duality_gap", "weight_bound", "status",
)


@dataclass(frozen=True)
class RunConfig:
    cutoff: int = 20
    outcomes: int = 10
    modes: int = 32
    mu_start: float = 0.05
    mu_stop: float = 0.99
    mu_count: int = 20
    spacing: str = "linear"
    tail_mode: str = "refined"
    probe_horizon: int = 100
    source_tol: float = 1e-12
    out: str = "sweep.csv"
    dump_certificates: str | None = None
    workers: int = 1

    def __post_init__(self):
        if self.cutoff < 1:
            raise InvalidParameterError(f"cutoff must be >= 1, got {self.cutoff}")
        if self.mu_count < 1:
            raise InvalidParameterError(f"mu_count must be >= 1, got {self.mu_count}")
        if self.mu_start < 0 or self.mu_stop < 0:
            raise InvalidParameterError("mean photon grid must lie in [0, inf)")
        if self.spacing not in ("linear", "log"):
            raise InvalidParameterError(f"spacing must be 'linear' or 'log', got {self.spacing!r}")
        if self.spacing == "log" and min(self.mu_start, self.mu_stop) <= 0:
            raise InvalidParameterError("log spacing needs a strictly positive grid")
        if self.tail_mode not in TAIL_MODES:
            raise InvalidParameterError(f"tail mode must be one of {TAIL_MODES}")
        if self.probe_horizon < self.cutoff:
            raise InvalidParameterError("probe horizon must be >= cutoff")
        TmdConfig(self.modes, self.outcomes, self.cutoff)

    def grid(self) -> np.ndarray:
        if self.mu_count == 1:
            return np.array([float(self.mu_start)])
        if self.spacing == "log":
            return np.geomspace(self.mu_start, self.mu_stop, self.mu_count)
        return np.linspace(self.mu_start, self.mu_stop, self.mu_count)

    def tmd(self) -> TmdConfig:
        return TmdConfig(n_modes=self.modes, n_outcomes=self.outcomes, n_store=self.cutoff)


def _coerce(field: dataclasses.Field, raw: str):
    raw = raw.strip()
    kind = field.type if isinstance(field.type, str) else field.type.__name__
    if kind.startswith("str | None"):
        return None if raw.lower() in ("", "none") else raw
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw


def load_config(path=None, **overrides) -> RunConfig:
    """Read a flat ``key = value`` file; keyword overrides that are not None win."""
    values = {}
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        parser.read_string("[run]\n" + text, source=str(path))
        for key, raw in parser["run"].items():
            key = key.replace("-", "_")
            if key not in fields:
                raise InvalidParameterError(f"{path}: unknown key {key!r}")
            values[key] = _coerce(fields[key], raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)


@dataclass(frozen=True, eq=False)
class PointRecord:
    index: int
    mean_photon: float
    status: str
    result: RandomnessResult | None = None
    weight_bound: float = math.nan
    residual_mass: float = math.nan
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass(frozen=True, eq=False)
class SweepReport:
    config: RunConfig
    records: tuple[PointRecord, ...]

    @property
    def all_verified(self) -> bool:
        return all(r.ok for r in self.records)

    def max_min_entropy(self) -> float:
        vals = [r.result.min_entropy for r in self.records if r.ok]
        return max(vals) if vals else math.nan


def prepare_point(cfg: RunConfig, mean_photon: float) -> tuple[TruncationContext, MeasurementStatistics]:
    """Coherent source -> TMD POVM -> exact statistics -> truncation context."""
    povm = build_tmd_povm(cfg.tmd())
    stats = expected_outcome_probabilities(
        coherent_source(mean_photon), povm, default_eval_horizon(mean_photon), cfg.source_tol
    )
    ctx = build_truncation_context(povm, stats.mean_photon, cfg.cutoff, cfg.tail_mode,
                                   cfg.probe_horizon)
    return ctx, stats


def run_point(cfg: RunConfig, mean_photon: float, index: int = 0) -> PointRecord:
    mean_photon = float(mean_photon)
    try:
        ctx, stats = prepare_point(cfg, mean_photon)
    except CertificationError as exc:
        return PointRecord(index, mean_photon, "setup_failed", error=str(exc))
    try:
        result = certify(ctx, stats)
    except VerificationError as exc:
        log.error("point %d (mu=%g) failed verification: %s", index, mean_photon, exc)
        return PointRecord(index, mean_photon, "verify_failed", weight_bound=ctx.weight_bound,
                           residual_mass=stats.residual_mass, error=str(exc))
    except CertificationError as exc:
        return PointRecord(index, mean_photon, "solve_failed", weight_bound=ctx.weight_bound,
                           residual_mass=stats.residual_mass, error=str(exc))
    return PointRecord(index, mean_photon, "ok", result, ctx.weight_bound, stats.residual_mass)


def run_sweep(cfg: RunConfig, workers: int | None = None) -> SweepReport:
    """Certify every grid point; records come back in grid order."""
    grid = [float(mu) for mu in cfg.grid()]
    workers = cfg.workers if workers is None else workers
    indices = range(len(grid))
    if workers > 1 and len(grid) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(run_point, [cfg] * len(grid), grid, indices))
    else:
        records = [run_point(cfg, mu, i) for i, mu in zip(indices, grid)]
    return SweepReport(cfg, tuple(records))


def _fmt(x: float) -> str:
    return "" if x is None or not math.isfinite(x) else f"{x:.12g}"


def format_csv(report: SweepReport) -> str:
    if not report.records:
        raise InvalidParameterError("cannot emit an empty sweep")
    cfg = report.config
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in report.records:
        row = [_fmt(r.mean_photon), cfg.cutoff, cfg.outcomes, cfg.modes, cfg.tail_mode]
        if r.ok:
            res = r.result
            row += [_fmt(res.guessing_bound), _fmt(res.min_entropy), _fmt(res.duality_gap),
                    _fmt(r.weight_bound)]
        else:
            row += ["", "", "", ""]
        row.append(r.status)
        writer.writerow(row)
    return buf.getvalue()


def emit_csv(report: SweepReport, path) -> Path:
    path = Path(path)
    text = format_csv(report)
    try:
        with path.open("w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc.strerror or exc}") from exc
    return path


def _floats(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def dump_certificates(report: SweepReport, directory) -> list[Path]:
    """One text record per grid point with lambda, eta, xi, margin and objective."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for r in report.records:
        lines = [f"index = {r.index}", f"mean_photon = {r.mean_photon!r}", f"status = {r.status}"]
        if r.ok:
            cert = r.result.certificate
            lines += [
                f"lambda = {_floats(cert.lam)}",
                f"eta = {_floats(cert.eta)}",
                f"xi = {cert.xi!r}",
                f"margin = {cert.feasibility_margin!r}",
                f"objective = {cert.objective_value!r}",
            ]
        path = directory / f"point_{r.index:03d}.txt"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        paths.append(path)
    return paths


def read_certificate(path) -> tuple[float, DualCertificate | None]:
    """Parse a dump record into (mean_photon, certificate or None if it failed)."""
    fields = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if "=" in line:
            key, _, value = line.partition("=")
            fields[key.strip()] = value.strip()
    mu = float(fields["mean_photon"])
    if fields.get("status") != "ok":
        return mu, None
    cert = DualCertificate(
        lam=[float(v) for v in fields["lambda"].split()],
        eta=[float(v) for v in fields["eta"].split()],
        xi=float(fields["xi"]),
        objective_value=float(fields["objective"]),
        feasibility_margin=float(fields["margin"]),
    )
    return mu, cert


def reverify_dump(cfg: RunConfig, path):
    """Rebuild the instance for a dumped record and verify its certificate."""
    mu, cert = read_certificate(path)
    if cert is None:
        raise VerificationError(f"{path}: no certificate recorded", ["missing"])
    ctx, stats = prepare_point(cfg, mu)
    return verify_certificate(cert, ctx, stats, strict=True)
