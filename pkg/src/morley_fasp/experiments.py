"""Experiment grid: flat key-value configs, spectra/PCG runs and CSV output.

Config grammar (one ``key = value`` per line, ``#`` starts a comment)::

    name            output file stem (default: config file stem)
    domain          unit-square | four-square | hexagon | l-shape | trident
    levels          "5-7", "5,6,7", "5" or empty for no rows
    problem         biharmonic-1 | biharmonic-2 | interface-S
    preconditioner  Bh1 | Bh1p | smoother       (biharmonic-1)
                    Bh2 | smoother              (biharmonic-2)
                    T1 | T2 | T3                (interface-S)
    spectra         dense | lanczos | none | auto   (default auto)
    tol             PCG relative residual tolerance (default 1e-8)
    m               outlier count for kappa_eff (default: reentrant corners)
    output          output directory (default: results)
    seed            Lanczos / random start seed (default 0)
    interface_mode  dense | nested              (default dense)
    smoother        sgs | jacobi                (default sgs)
    sweeps          smoother sweeps             (default 3)
    backend         direct | iterative          (default direct)
    lanczos_iterations                          (default 300)

``auto`` spectra use the dense eigensolver up to 2000 unknowns and Lanczos
above.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from functools import lru_cache
from pathlib import Path

import numpy as np

from .mesh import DOMAINS, build_domain
from .operators import BudgetError
from .solvers import BiharmonicProblem, InterfaceProblem, interface_matrix
from .spectra import (DENSE_BUDGET, SpectrumError, check_self_adjoint, dense_spectrum,
                      lanczos_extremal)

log = logging.getLogger(__name__)

PROBLEMS = {
    "biharmonic-1": ("Bh1", "Bh1p", "smoother"),
    "biharmonic-2": ("Bh2", "smoother"),
    "interface-S": ("T1", "T2", "T3"),
}
AUTO_DENSE_LIMIT = 2000


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    domain: str
    problem: str
    preconditioner: str
    levels: list = field(default_factory=list)
    name: str = "experiment"
    spectra: str = "auto"
    tol: float = 1e-8
    m: int | None = None
    output: str = "results"
    seed: int = 0
    interface_mode: str = "dense"
    smoother: str = "sgs"
    sweeps: int = 3
    backend: str = "direct"
    lanczos_iterations: int = 300

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.domain not in DOMAINS:
            raise ConfigError(f"unknown domain {self.domain!r}")
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}")
        if self.preconditioner not in PROBLEMS[self.problem]:
            raise ConfigError(f"preconditioner {self.preconditioner!r} does not apply to "
                              f"problem {self.problem!r}")
        if self.spectra not in ("dense", "lanczos", "none", "auto"):
            raise ConfigError(f"unknown spectra mode {self.spectra!r}")
        if self.interface_mode not in ("dense", "nested"):
            raise ConfigError(f"unknown interface mode {self.interface_mode!r}")
        if self.smoother not in ("sgs", "jacobi"):
            raise ConfigError(f"unknown smoother {self.smoother!r}")
        if self.backend not in ("direct", "iterative"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        if not 0 < self.tol < 1:
            raise ConfigError("tol must lie in (0, 1)")
        if any(lv < 0 for lv in self.levels):
            raise ConfigError("levels must be non-negative")
        if self.m is not None and self.m < 0:
            raise ConfigError("m must be non-negative")
        if self.sweeps < 1 or self.lanczos_iterations < 2:
            raise ConfigError("sweeps and lanczos_iterations must be positive")

    @property
    def outlier_count(self) -> int:
        if self.m is not None:
            return self.m
        return build_domain(self.domain, 0).boundary.m0


def parse_levels(text: str) -> list:
    text = text.strip()
    if not text:
        return []
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def parse_config(text: str, name: str = "experiment") -> ExperimentConfig:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    known = {f.name: f for f in fields(ExperimentConfig)}
    unknown = set(raw) - set(known)
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(sorted(unknown))}")
    for key in ("domain", "problem", "preconditioner"):
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")
    kwargs = {"name": name}
    try:
        for key, value in raw.items():
            if key == "levels":
                kwargs[key] = parse_levels(value)
            elif key in ("tol",):
                kwargs[key] = float(value)
            elif key in ("m", "seed", "sweeps", "lanczos_iterations"):
                kwargs[key] = int(value) if value else None
            else:
                kwargs[key] = value
    except ValueError as exc:
        raise ConfigError(f"bad value: {exc}") from exc
    if kwargs.get("seed") is None:
        kwargs.pop("seed", None)
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, name=path.stem)


# ----------------------------------------------------------------------
@dataclass
class ResultRow:
    domain: str
    level: int
    dof: int | None
    lambda_min: float = math.nan
    lambda_top: list = field(default_factory=list)
    kappa: float = math.nan
    kappa_eff: float = math.nan
    pcg_iters: int | None = None
    seconds: float = 0.0
    failed: str = ""
    spectrum: object = field(default=None, repr=False)


@lru_cache(maxsize=8)
def _interface_problem(domain: str, level: int, backend: str) -> InterfaceProblem:
    return InterfaceProblem(build_domain(domain, level), backend=backend)


def _spectrum(cfg: ExperimentConfig, apply, dim, inner, want_top, dense_matrix=None):
    mode = cfg.spectra
    if mode == "auto":
        mode = "dense" if dim <= AUTO_DENSE_LIMIT else "lanczos"
    check_self_adjoint(apply, dim, inner, seed=cfg.seed)
    if mode == "dense":
        if dim > DENSE_BUDGET:
            raise SpectrumError(f"dimension {dim} exceeds the dense budget {DENSE_BUDGET}")
        return dense_spectrum(dense_matrix if dense_matrix is not None else apply, dim, inner)
    return lanczos_extremal(apply, dim, inner, iterations=cfg.lanczos_iterations,
                            want_top=want_top, seed=cfg.seed)


def run_level(cfg: ExperimentConfig, level: int) -> ResultRow:
    """One (domain, level) cell of the grid."""
    t0 = time.perf_counter()
    m = cfg.outlier_count
    if cfg.problem == "interface-S":
        ip = _interface_problem(cfg.domain, level, cfg.backend)
        row = ResultRow(cfg.domain, level, ip.ndof)
        S = ip.S
        T = interface_matrix(ip.ops, int(cfg.preconditioner[1]))
        if cfg.spectra != "none":
            rep = _spectrum(cfg, lambda v: T @ (S @ v), ip.ndof, S, m + 3,
                            dense_matrix=T @ S)
            _fill_spectrum(row, rep, m)
        row.pcg_iters = _checked(ip.solve(cfg.preconditioner, tol=cfg.tol))
    else:
        kind = "first" if cfg.problem == "biharmonic-1" else "second"
        bp = BiharmonicProblem(build_domain(cfg.domain, level), kind, smoother=cfg.smoother,
                               sweeps=cfg.sweeps, backend=cfg.backend,
                               interface_mode=cfg.interface_mode)
        row = ResultRow(cfg.domain, level, bp.ndof)
        B, A = bp.preconditioner(cfg.preconditioner), bp.A
        if cfg.spectra != "none":
            rep = _spectrum(cfg, lambda v: B @ (A @ v), bp.ndof, A, m + 3)
            _fill_spectrum(row, rep, m)
        row.pcg_iters = _checked(bp.solve(cfg.preconditioner, tol=cfg.tol))
    row.seconds = time.perf_counter() - t0
    return row


def _checked(outcome) -> int:
    if not outcome.converged:
        raise RuntimeError(f"PCG did not converge in {outcome.iterations} iterations")
    return outcome.iterations


def _fill_spectrum(row: ResultRow, rep, m: int):
    row.spectrum = rep
    row.lambda_min = rep.lam_min
    row.lambda_top = list(rep.top(m + 1))
    row.kappa = rep.kappa
    if rep.mode == "lanczos" and rep.top_converged < m + 3:
        log.warning("level %d: only %d top Ritz values converged, kappa_eff withheld",
                    row.level, rep.top_converged)
        row.kappa_eff = math.nan
        return
    try:
        row.kappa_eff = rep.effective_condition(m)
    except SpectrumError:
        row.kappa_eff = math.nan


def csv_header(m: int) -> list:
    return (["domain", "level", "dof", "lambda_min"]
            + [f"lambda_top{i + 1}" for i in range(m + 1)]
            + ["kappa", "kappa_eff", "pcg_iters", "seconds"])


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "nan" if math.isnan(x) else f"{x:.10g}"
    return str(x)


def format_row(row: ResultRow, m: int) -> list:
    if row.failed:
        return ([row.domain, str(row.level), _fmt(row.dof)] + ["FAILED"] * (m + 5)
                + [f"{row.seconds:.3f}"])
    tops = list(row.lambda_top) + [math.nan] * (m + 1 - len(row.lambda_top))
    return ([row.domain, str(row.level), str(row.dof), _fmt(row.lambda_min)]
            + [_fmt(float(v)) for v in tops[:m + 1]]
            + [_fmt(row.kappa), _fmt(row.kappa_eff), _fmt(row.pcg_iters),
               f"{row.seconds:.3f}"])


@dataclass
class RunResult:
    config: ExperimentConfig
    rows: list
    csv_path: Path | None = None

    @property
    def ok(self) -> bool:
        return not any(r.failed for r in self.rows)


def _guarded_level(cfg: ExperimentConfig, level: int) -> ResultRow:
    t0 = time.perf_counter()
    try:
        return run_level(cfg, level)
    except (RuntimeError, ArithmeticError, SpectrumError, BudgetError, MemoryError,
            np.linalg.LinAlgError) as exc:
        return ResultRow(cfg.domain, level, None, seconds=time.perf_counter() - t0,
                         failed=str(exc) or type(exc).__name__)


def run_config(cfg: ExperimentConfig, output: Path | None = None, write: bool = True,
               workers: int = 1) -> RunResult:
    """Run every level of ``cfg``; writes ``<output>/<name>.csv`` and a log.

    Levels are independent cells; with ``workers > 1`` they run in separate
    processes and rows are still written in level order.
    """
    m = cfg.outlier_count
    out_dir = Path(output if output is not None else cfg.output)
    rows = []
    handler = None
    if write:
        out_dir.mkdir(parents=True, exist_ok=True)
        handler = logging.FileHandler(out_dir / f"{cfg.name}.log", mode="w")
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
        log.addHandler(handler)
        log.setLevel(logging.INFO)
    try:
        log.info("config %s: %s", cfg.name, cfg)
        if workers > 1 and len(cfg.levels) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                cells = list(pool.map(_guarded_level, [cfg] * len(cfg.levels), cfg.levels))
        else:
            cells = [_guarded_level(cfg, level) for level in cfg.levels]
        for row in cells:
            if row.failed:
                log.error("level %d failed: %s", row.level, row.failed)
            else:
                log.info("level %d: dof=%d kappa=%.6g kappa_eff=%.6g pcg=%s (%.2fs)",
                         row.level, row.dof, row.kappa, row.kappa_eff, row.pcg_iters,
                         row.seconds)
            rows.append(row)
    finally:
        if handler is not None:
            log.removeHandler(handler)
            handler.close()
    result = RunResult(cfg, rows)
    if write:
        result.csv_path = out_dir / f"{cfg.name}.csv"
        result.csv_path.write_text(rows_to_csv(rows, m))
    return result


def rows_to_csv(rows, m: int) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(csv_header(m))
    for row in rows:
        writer.writerow(format_row(row, m))
    return buf.getvalue()


# ----------------------------------------------------------------------
GNUPLOT_TEMPLATE = """\
# eigenvalue distributions of T2*S and T3*S ({domain}, level {level})
set terminal pngcairo size 800,500
set output '{stem}.png'
set logscale y
set xlabel 'index'
set ylabel 'eigenvalue'
set key left top
plot '{t2}' using 1:2 with points pointtype 3 title 'T2 S', \\
     '{t3}' using 1:2 with points pointtype 6 title 'T3 S'
"""


def emit_scatter(domain: str, level: int, output=".", backend: str = "direct") -> dict:
    """Write sorted eigenvalues of T2*S and T3*S plus a gnuplot script.

    Returns a dict with the written paths and eigenvalue arrays.
    """
    ip = _interface_problem(domain, level, backend)
    if ip.ndof > DENSE_BUDGET:
        raise SpectrumError(f"{ip.ndof} boundary dofs exceed the dense budget")
    out = Path(output)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"scatter_{domain}_L{level}"
    result = {}
    for j in (2, 3):
        T = interface_matrix(ip.ops, j)
        ev = dense_spectrum(T @ ip.S, ip.ndof, ip.S).eigenvalues
        path = out / f"{stem}_T{j}.dat"
        path.write_text("".join(f"{i + 1} {v:.12g}\n" for i, v in enumerate(ev)))
        result[f"T{j}"] = ev
        result[f"T{j}_path"] = path
    script = out / f"{stem}.gp"
    script.write_text(GNUPLOT_TEMPLATE.format(domain=domain, level=level, stem=stem,
                                              t2=result["T2_path"].name,
                                              t3=result["T3_path"].name))
    result["script"] = script
    return result


def estimate_cost(cfg: ExperimentConfig) -> list:
    """Rough per-level operator-application counts, printed before a run."""
    lines = []
    for level in cfg.levels:
        mesh = build_domain(cfg.domain, level)
        n_b = len(mesh.boundary.loop)
        if cfg.problem == "interface-S":
            dim = n_b
        else:
            kind = "first" if cfg.problem == "biharmonic-1" else "second"
            from .spaces import build_morley
            dim = build_morley(mesh, kind).ndof
        mode = cfg.spectra
        if mode == "auto":
            mode = "dense" if dim <= AUTO_DENSE_LIMIT else "lanczos"
        applies = {"dense": dim, "lanczos": min(dim, cfg.lanczos_iterations), "none": 0}[mode]
        extra = 2 * n_b if (cfg.problem == "interface-S" or cfg.preconditioner == "Bh1") else 0
        lines.append(f"level {level}: dim={dim} spectra={mode} operator applications<={applies}"
                     f" boundary Poisson solves={extra}")
    return lines
