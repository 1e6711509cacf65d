"""Command-line driver: ``aqoe {q,stats,cycle,sweep,optimize}``.

Configuration is a flat ``key = value`` file (``#`` starts a comment) plus
``--key value`` overrides; command line beats file beats defaults. Every
CSV output starts with ``#`` lines echoing the resolved configuration and
the tool version, followed by exactly one header row.

Exit codes: 0 success, 1 validation error, 2 numerical error, 3 sweep with
failed grid points.
"""
from __future__ import annotations

import argparse
import csv
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .cycle import build_cycle_matrix, stationary_distribution, statistics_from_cycle
from .errors import AqoeError, NumericalError, ValidationError
from .model import EngineConfig, Substance, WorkingSubstance
from .nonadiabatic import adiabaticity_pair
from .optimize import FIGURES, ScanSettings, SweepRecord, scan_tau, sweep_r_u
from .stats import statistics_perfect

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_PARTIAL = 0, 1, 2, 3

STATS_COLUMNS = ("tau_u", "r_u", "q_f", "q_b", "w_mean", "w_var", "qh_mean", "qh_var",
                 "work_output", "reliability_w", "efficiency", "eta2", "reliability_eta",
                 "engine_regime")
OPTIMA_COLUMNS = ("tau_u", "r_star", "w_opt", "r_circ", "rw_opt", "r_odot", "eta_opt",
                  "r_delta", "reta_opt")


def _float(text: str) -> float:
    value = float(text)
    if math.isnan(value):
        raise ValueError("NaN is not allowed")
    return value


def _int(text: str) -> int:
    return int(text)


def _mode(text: str) -> str:
    if text not in ("perfect", "finite", "auto"):
        raise ValueError("expected perfect, finite or auto")
    return text


def _substance(text: str) -> str:
    return Substance(text.lower()).value


def _str(text: str) -> str:
    return text


# Every recognised key with its parser and default, in header order.
KEYS = {
    "substance": (_substance, "ho"),
    "delta": (_float, 0.0),
    "omega1": (_float, 1.0),
    "omega2": (_float, 2.0),
    "beta_h": (_float, 0.1),
    "beta_c": (_float, 0.5),
    "tau_u": (_float, 5.0),
    "tau_b": (_float, math.inf),
    "r_u": (_float, 0.5),
    "r_b": (_float, 0.5),
    "kappa": (_float, 0.01),
    "gamma": (_float, 0.01),
    "n_cut": (_int, 50),
    "weak_coupling_max": (_float, 0.05),
    "r_min": (_float, 1e-3),
    "tau_b_ratio": (_float, 0.0),
    "mode": (_mode, "auto"),
    "r_grid_min": (_float, 0.005),
    "r_grid_max": (_float, 0.995),
    "r_grid_count": (_int, 199),
    "tau_grid_min": (_float, 0.1),
    "tau_grid_max": (_float, 20.0),
    "tau_grid_count": (_int, 200),
    "refine": (_int, 1),
    "output": (_str, "-"),
    "sweep_output": (_str, ""),
    "precision": (_int, 12),
}
ENGINE_KEYS = tuple(f.name for f in fields(EngineConfig) if f.name != "substance")


@dataclass(frozen=True)
class GridSpec:
    lo: float
    hi: float
    count: int

    def values(self) -> np.ndarray:
        if self.count < 1:
            raise ValidationError("grid count must be >= 1")
        if self.count > 1 and not self.hi > self.lo:
            raise ValidationError(f"grid needs max > min, got [{self.lo}, {self.hi}]")
        return np.linspace(self.lo, self.hi, self.count)


@dataclass(frozen=True)
class RunConfig:
    engine: EngineConfig
    mode: str
    r_grid: GridSpec
    tau_grid: GridSpec
    refine: bool
    output: str
    sweep_output: str
    precision: int
    values: dict

    def header_lines(self, command: str) -> list[str]:
        lines = [f"# aqoe {__version__}", f"# command = {command}"]
        lines += [f"# {k} = {self.values[k]}" for k in KEYS]
        return lines


class ConfigError(ValidationError):
    pass


def read_config_file(path: str) -> dict[str, tuple[str, str]]:
    """Parse ``key = value`` lines; returns key -> (raw value, origin)."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        origin = f"{path}:{lineno}"
        if "=" not in line:
            raise ConfigError(f"{origin}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"{origin}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{origin}: duplicate key {key!r} (first set at {out[key][1]})")
        out[key] = (value, origin)
    return out


def resolve_config(file_values: dict[str, tuple[str, str]],
                   overrides: dict[str, str]) -> RunConfig:
    raw = dict(file_values)
    for key, value in overrides.items():
        raw[key] = (value, f"--{key}")
    values = {key: default for key, (_, default) in KEYS.items()}
    origins = {}
    for key, (text, origin) in raw.items():
        parse = KEYS[key][0]
        try:
            values[key] = parse(text)
        except ValueError as exc:
            raise ConfigError(f"{origin}: bad value {text!r} for {key}: {exc}") from exc
        origins[key] = origin

    def fail(exc, keys):
        where = [f"{origins.get(k, 'default')} ({k})" for k in keys if k in str(exc)]
        prefix = "; ".join(where) if where else "config"
        return ConfigError(f"{prefix}: {exc}")

    try:
        substance = WorkingSubstance(values["substance"], values["delta"])
        engine = EngineConfig(substance=substance, **{k: values[k] for k in ENGINE_KEYS})
    except ValidationError as exc:
        raise fail(exc, list(KEYS)) from exc
    if values["tau_b_ratio"] < 0:
        raise fail(ValidationError("tau_b_ratio must be >= 0"), ["tau_b_ratio"])
    if values["tau_b_ratio"] > 0:
        engine = engine.with_(tau_b=values["tau_b_ratio"] * engine.tau_u)
    mode = values["mode"]
    if mode == "auto":
        mode = "perfect" if engine.perfect else "finite"
    if mode == "finite" and engine.perfect:
        raise fail(ValidationError("mode finite needs a finite tau_b"), ["mode", "tau_b"])
    if values["precision"] < 1 or values["precision"] > 17:
        raise fail(ValidationError("precision must be between 1 and 17"), ["precision"])
    r_grid = GridSpec(values["r_grid_min"], values["r_grid_max"], values["r_grid_count"])
    tau_grid = GridSpec(values["tau_grid_min"], values["tau_grid_max"], values["tau_grid_count"])
    for name, spec, lo_ok in (("r_grid", r_grid, lambda v: 0 < v < 1),
                              ("tau_grid", tau_grid, lambda v: v > 0 and math.isfinite(v))):
        keys = [f"{name}_min", f"{name}_max", f"{name}_count"]
        try:
            grid = spec.values()
        except ValidationError as exc:
            raise fail(ValidationError(f"{name}: {exc}"), keys) from exc
        if not (lo_ok(grid[0]) and lo_ok(grid[-1])):
            raise fail(ValidationError(f"{name}_min/{name}_max out of range"), keys)
    values["mode"] = mode
    return RunConfig(engine, mode, r_grid, tau_grid, bool(values["refine"]),
                     values["output"], values["sweep_output"], values["precision"], values)


# --- formatting ----------------------------------------------------------------

def _fmt(value, precision: int) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    value = float(value)
    if math.isnan(value):
        return ""
    return f"{value:.{precision}g}"


def stats_row(tau_u, r_u, q_f, q_b, stats, precision) -> list[str]:
    cells = [tau_u, r_u, q_f, q_b]
    if stats is None:
        cells += [math.nan] * 9 + [False]
    else:
        cells += [stats.w_mean, stats.w_var, stats.qh_mean, stats.qh_var, stats.work_output,
                  stats.reliability_w, stats.efficiency, stats.eta2, stats.reliability_eta,
                  stats.engine_regime]
    return [_fmt(c, precision) for c in cells]


class CsvOut:
    """A CSV destination with ``#`` preamble lines and one header row."""

    def __init__(self, path: str, stdout=None):
        self.path = path
        self._stdout = stdout
        self._handle = None

    def __enter__(self):
        if self.path in ("-", ""):
            self._handle = self._stdout or sys.stdout
        else:
            self._handle = open(self.path, "w", newline="")
        self.writer = csv.writer(self._handle, lineterminator="\n")
        return self

    def comment(self, text: str):
        self._handle.write(f"#{text}\n" if text.startswith("error") else f"# {text}\n")

    def lines(self, lines):
        for line in lines:
            self._handle.write(line + "\n")

    def row(self, cells):
        self.writer.writerow(cells)

    def __exit__(self, *exc):
        if self._handle is not (self._stdout or sys.stdout):
            self._handle.close()
        else:
            self._handle.flush()


# --- subcommands -----------------------------------------------------------------

def cmd_q(run: RunConfig, args, out) -> int:
    pair = adiabaticity_pair(run.engine)
    p = run.precision
    with CsvOut(run.output, out) as f:
        f.lines(run.header_lines("q"))
        f.row(["tau_u", "r_u", "q_f", "q_b"])
        f.row([_fmt(v, p) for v in (run.engine.tau_u, run.engine.r_u, pair.q_f, pair.q_b)])
    return EXIT_OK


def _single_stats(run: RunConfig):
    cfg = run.engine
    pair = adiabaticity_pair(cfg)
    if run.mode == "perfect":
        return pair, statistics_perfect(cfg.with_(tau_b=math.inf), pair), None
    cycle = build_cycle_matrix(cfg, pair)
    state = stationary_distribution(cycle)
    return pair, statistics_from_cycle(cycle, state.p1), state


def cmd_stats(run: RunConfig, args, out, command: str = "stats") -> int:
    pair, stats, state = _single_stats(run)
    with CsvOut(run.output, out) as f:
        f.lines(run.header_lines(command))
        if state is not None:
            _state_comments(f, state)
        f.row(STATS_COLUMNS)
        f.row(stats_row(run.engine.tau_u, run.engine.r_u, pair.q_f, pair.q_b, stats,
                        run.precision))
    return EXIT_OK


def _state_comments(f, state):
    f.comment(f"stationary_leakage = {state.leakage:.6g}")
    f.comment(f"spectral_gap = {state.gap:.6g}")
    f.comment(f"stationary_residual = {state.residual:.6g}")
    f.comment(f"stationary_method = {state.method}")


def cmd_cycle(run: RunConfig, args, out) -> int:
    if run.engine.perfect:
        raise ValidationError("cycle needs a finite tau_b")
    run = RunConfig(**{**run.__dict__, "mode": "finite"})
    return cmd_stats(run, args, out, "cycle")


def _sweep_job(job):
    engine, tau, r, mode, ratio = job
    if ratio > 0:
        engine = engine.with_(tau_b=ratio * tau)
    return sweep_r_u(engine, tau, r, mode)


def _write_sweep(path, run, command, records, out):
    errors = 0
    with CsvOut(path, out) as f:
        f.lines(run.header_lines(command))
        for rec in records:
            if rec.error:
                errors += 1
                f.comment(f"error tau_u={rec.tau_u!r} r_u={rec.r_u!r}: {rec.error}")
        f.row(STATS_COLUMNS)
        for rec in records:
            f.row(stats_row(rec.tau_u, rec.r_u, rec.q_f, rec.q_b, rec.stats, run.precision))
    return errors


def cmd_sweep(run: RunConfig, args, out) -> int:
    taus, r = run.tau_grid.values(), run.r_grid.values()
    ratio = run.values["tau_b_ratio"]
    jobs = [(run.engine, float(t), r, run.mode, ratio) for t in taus]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]
    records: list[SweepRecord] = [rec for res in results for rec in res]
    errors = _write_sweep(run.output, run, "sweep", records, out)
    return EXIT_PARTIAL if errors else EXIT_OK


def cmd_optimize(run: RunConfig, args, out) -> int:
    taus, r = run.tau_grid.values(), run.r_grid.values()
    ratio = run.values["tau_b_ratio"]
    settings = ScanSettings(mode=run.mode, refine=run.refine,
                            tau_b_ratio=ratio if ratio > 0 else None)
    result = scan_tau(run.engine, taus, settings, r, jobs=args.jobs)
    series = result.series
    sweep_path = run.sweep_output
    if not sweep_path and run.output not in ("-", ""):
        p = Path(run.output)
        sweep_path = str(p.with_name(p.stem + "_sweep" + p.suffix))
    errors = 0
    if sweep_path:
        errors = _write_sweep(sweep_path, run, "optimize", result.records, out)
    else:
        errors = sum(1 for rec in result.records if rec.error)
    prec = run.precision
    with CsvOut(run.output, out) as f:
        f.lines(run.header_lines("optimize"))
        if sweep_path and sweep_path != "-":
            f.comment(f"sweep_table = {sweep_path}")
        for line in series.errors:
            f.comment(f"error {line}")
        for d in series.discontinuities:
            f.comment(f"discontinuity curve={d.curve} tau_left={_fmt(d.tau_left, prec)} "
                      f"tau_right={_fmt(d.tau_right, prec)} jump={_fmt(d.jump, prec)}")
        for c in series.cooptimal:
            f.comment(f"cooptimal pair={c.pair[0]}/{c.pair[1]} tau_u={_fmt(c.tau_u, prec)} "
                      f"r_a={_fmt(c.r_a, prec)} r_b={_fmt(c.r_b, prec)} "
                      f"refined={'true' if c.refined else 'false'}")
        f.row(OPTIMA_COLUMNS)
        for i, tau in enumerate(series.tau_grid):
            cells = [tau]
            for name in FIGURES:
                cells += [series.curve(name)[i], series.values[name][i]]
            f.row([_fmt(c, prec) for c in cells])
    return EXIT_PARTIAL if errors else EXIT_OK


COMMANDS = {"q": cmd_q, "stats": cmd_stats, "cycle": cmd_cycle, "sweep": cmd_sweep,
            "optimize": cmd_optimize}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aqoe", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"aqoe {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("-c", "--config", help="key = value configuration file")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for grid points")
        for key in KEYS:
            flags = [f"--{key}"] + ([f"--{key.replace('_', '-')}"] if "_" in key else [])
            p.add_argument(*flags, dest=f"key_{key}", metavar="VALUE")
    return parser


def main(argv=None, stdout=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    err = sys.stderr
    try:
        if args.jobs < 1:
            raise ValidationError("--jobs must be >= 1")
        file_values = read_config_file(args.config) if args.config else {}
        overrides = {k: getattr(args, f"key_{k}") for k in KEYS
                     if getattr(args, f"key_{k}") is not None}
        run = resolve_config(file_values, overrides)
        return COMMANDS[args.command](run, args, stdout)
    except ValidationError as exc:
        print(f"aqoe: validation error: {exc}", file=err)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"aqoe: numerical error: {exc}", file=err)
        return EXIT_NUMERICAL
    except AqoeError as exc:
        print(f"aqoe: error: {exc}", file=err)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
