"""Command-line front end.

    kppfrag <command> [--config FILE] [--preset NAME] [--mu MU[,MU...]]
            [--m0 M0] [--kappa K] [--grid N[xM]] [--seed S] [--starts K]
            [--out DIR] [--plot]

Commands: solve, optimize, sweep, periodise-check, lemma2, efficiency.
Commands that need a concrete resource layout (solve, periodise-check,
lemma2, efficiency) act on the canonical left-packed block layout for the
given (kappa, m0, grid); optimize and sweep search over layouts.

Settings merge in increasing precedence: built-in defaults, --preset,
--config JSON file, explicit flags. Unknown keys in a config file are
rejected. Exit codes: 0 success, 2 configuration error, 3 solver or
optimization failure, 4 IO failure while persisting.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from .experiments import (
    DEFAULT_EFFICIENCY_MUS,
    ResolutionError,
    efficiency_ratio,
    fragmentation_sweep,
    lemma2_bound_sweep,
    periodisation_check,
)
from .fields import ResourceField, field_to_csv, make_crenel
from .grids import Grid
from .optimizer import OptimConfig, OptimizationError, optimize
from .plots import emit_plot
from .fields import ProblemParams
from .solver import SolverError, solve_steady_state, total_population

COMMANDS = ("solve", "optimize", "sweep", "periodise-check", "lemma2", "efficiency")


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class RunConfig:
    command: str
    grid: tuple = (257,)
    mu: tuple = (1.0,)
    kappa: float = 1.0
    m0: float = 0.3
    seed: int = 0
    starts: int = 20
    max_outer_iters: int = 500
    k_max: int = 3
    out: str | None = None
    plot: bool = False
    allow_underresolved: bool = False


PRESETS = {
    "paper-1d-m03": {"grid": [1000], "kappa": 1.0, "m0": 0.3,
                     "mu": [1.0, 0.1, 0.01, 0.001]},
    "paper-1d-m06": {"grid": [1000], "kappa": 1.0, "m0": 0.6,
                     "mu": [1.0, 0.1, 0.01, 0.001]},
    "paper-2d-m03": {"grid": [60, 60], "kappa": 1.0, "m0": 0.3,
                     "mu": [0.1, 0.01], "allow_underresolved": True},
    "paper-2d-m06": {"grid": [60, 60], "kappa": 1.0, "m0": 0.6,
                     "mu": [0.1, 0.01], "allow_underresolved": True},
}

_SETTING_KEYS = tuple(
    f.name for f in dataclasses.fields(RunConfig) if f.name != "command"
)


def _as_int(field: str, value) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ConfigError(field, f"expected an integer, got {value!r}")
    return int(value)


def _as_float(field: str, value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float, np.floating)):
        raise ConfigError(field, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(field, "must be finite")
    return value


def parse_config(data: dict, command: str) -> RunConfig:
    """Build a validated RunConfig from a plain settings mapping.

    Unknown keys and per-field type or range violations raise ConfigError
    naming the offending field.
    """
    if command not in COMMANDS:
        raise ConfigError("command", f"unknown command {command!r}")
    for key in data:
        if key not in _SETTING_KEYS:
            raise ConfigError(key, "unknown setting")
    merged = {f.name: getattr(RunConfig, f.name)
              for f in dataclasses.fields(RunConfig)
              if f.name not in ("command",)}
    merged.update(data)

    grid = merged["grid"]
    if isinstance(grid, (int, np.integer)):
        grid = [grid]
    if not isinstance(grid, (list, tuple)) or not 1 <= len(grid) <= 2:
        raise ConfigError("grid", "expected 1 or 2 node counts")
    grid = tuple(_as_int("grid", n) for n in grid)
    if any(n < 3 for n in grid):
        raise ConfigError("grid", "need at least 3 nodes per axis")

    mu = merged["mu"]
    if isinstance(mu, (int, float, np.floating)):
        mu = [mu]
    if not isinstance(mu, (list, tuple)) or len(mu) == 0:
        raise ConfigError("mu", "expected a number or nonempty list")
    mu = tuple(_as_float("mu", v) for v in mu)
    if any(v <= 0 for v in mu):
        raise ConfigError("mu", "diffusivities must be positive")

    kappa = _as_float("kappa", merged["kappa"])
    m0 = _as_float("m0", merged["m0"])
    if kappa <= 0:
        raise ConfigError("kappa", "must be positive")
    if not 0 < m0 < kappa:
        raise ConfigError("m0", f"must lie strictly between 0 and kappa={kappa}")

    seed = _as_int("seed", merged["seed"])
    if seed < 0:
        raise ConfigError("seed", "must be nonnegative")
    starts = _as_int("starts", merged["starts"])
    if starts < 1:
        raise ConfigError("starts", "need at least one start")
    max_outer = _as_int("max_outer_iters", merged["max_outer_iters"])
    if max_outer < 1:
        raise ConfigError("max_outer_iters", "must be positive")
    k_max = _as_int("k_max", merged["k_max"])
    if k_max < 0:
        raise ConfigError("k_max", "must be nonnegative")

    out = merged["out"]
    if out is not None and not isinstance(out, str):
        raise ConfigError("out", "expected a directory path")
    plot = merged["plot"]
    if not isinstance(plot, bool):
        raise ConfigError("plot", "expected true or false")
    allow = merged["allow_underresolved"]
    if not isinstance(allow, bool):
        raise ConfigError("allow_underresolved", "expected true or false")

    return RunConfig(
        command=command, grid=grid, mu=mu, kappa=kappa, m0=m0, seed=seed,
        starts=starts, max_outer_iters=max_outer, k_max=k_max, out=out,
        plot=plot, allow_underresolved=allow,
    )


def load_config_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be a JSON object")
    if "command" in data:
        raise ConfigError("command", "set the command on the command line")
    return data


def _jsonable(obj):
    """Recursively convert to JSON-encodable values; non-finite -> null."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def persist_results(out_dir: str, config: RunConfig, report: dict,
                    fields: dict | None = None, plots: dict | None = None,
                    summary_rows: list | None = None) -> str:
    """Write a run directory: report.json, field CSVs, SVG plots, an
    optional summary.csv, and manifest.json (written last; its presence
    marks a complete run).

    The manifest maps each deterministic file to its sha256 and lists
    timing-bearing files (report.json, summary.csv) under "volatile"
    without hashes, so same-seed reruns produce byte-identical manifests.
    Partially written files are removed if persisting fails.
    """
    os.makedirs(out_dir, exist_ok=True)
    written: list[str] = []
    hashed: dict[str, str] = {}
    volatile: list[str] = []
    try:
        report_path = os.path.join(out_dir, "report.json")
        with open(report_path, "w", encoding="utf-8") as fh:
            json.dump(_jsonable(report), fh, indent=2, sort_keys=True)
            fh.write("\n")
        written.append(report_path)
        volatile.append("report.json")

        for name, field in (fields or {}).items():
            path = os.path.join(out_dir, name)
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(field_to_csv(field))
            written.append(path)
            hashed[name] = _sha256(path)

        for name, (m, theta) in (plots or {}).items():
            path = os.path.join(out_dir, name)
            emit_plot(m, theta, path)
            written.append(path)
            hashed[name] = _sha256(path)

        if summary_rows is not None:
            cols = ("mu", "best_F", "bv", "jumps", "bangbang_frac", "seconds")
            path = os.path.join(out_dir, "summary.csv")
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(",".join(cols) + "\n")
                for row in summary_rows:
                    cells = []
                    for c in cols:
                        v = row.get(c)
                        if v is None:
                            cells.append("")
                        elif isinstance(v, float):
                            cells.append(f"{v:.17g}")
                        else:
                            cells.append(str(v))
                    fh.write(",".join(cells) + "\n")
            written.append(path)
            volatile.append("summary.csv")

        # the out path names this very directory; echoing it would make
        # manifests from identical runs into different directories differ
        config_echo = _jsonable(dataclasses.asdict(config))
        config_echo.pop("out", None)
        manifest = {
            "config": config_echo,
            "files": {k: hashed[k] for k in sorted(hashed)},
            "volatile": sorted(volatile),
        }
        manifest_path = os.path.join(out_dir, "manifest.json")
        with open(manifest_path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        written.append(manifest_path)
    except BaseException:
        for path in written:
            try:
                os.remove(path)
            except OSError:
                pass
        raise
    return os.path.join(out_dir, "manifest.json")


def _instance(cfg: RunConfig):
    grid = Grid(cfg.grid)
    try:
        params = ProblemParams(mu=cfg.mu[0], kappa=cfg.kappa, m0=cfg.m0)
    except ValueError as exc:
        raise ConfigError("m0", str(exc)) from exc
    return grid, params


def _optim_config(cfg: RunConfig) -> OptimConfig:
    return OptimConfig(starts=cfg.starts, seed=cfg.seed,
                       max_outer_iters=cfg.max_outer_iters)


def _cmd_solve(cfg: RunConfig) -> int:
    grid, params = _instance(cfg)
    m = make_crenel(grid, cfg.kappa, cfg.m0)
    t0 = time.perf_counter()
    state = solve_steady_state(m, params)
    wall = time.perf_counter() - t0
    F = total_population(state)
    print(f"solve: mu={params.mu:g} grid={'x'.join(map(str, cfg.grid))} "
          f"F={F:.12g} residual={state.residual_norm:.3e} "
          f"iterations={state.iterations} fallback={state.used_fallback}")
    if cfg.out:
        report = {"command": "solve", "mu": params.mu, "F": F,
                  "residual_norm": state.residual_norm,
                  "iterations": state.iterations,
                  "used_fallback": state.used_fallback, "wall_time": wall}
        fields = {"m.csv": m, "theta.csv": state.theta}
        plots = {"solve.svg": (m, state.theta)} if cfg.plot else None
        persist_results(cfg.out, cfg, report, fields, plots)
    return 0


def _cmd_optimize(cfg: RunConfig) -> int:
    grid, params = _instance(cfg)
    t0 = time.perf_counter()
    run = optimize(params, grid, _optim_config(cfg))
    wall = time.perf_counter() - t0
    state = solve_steady_state(run.best_m, params)
    print(f"optimize: mu={params.mu:g} best_F={run.best_F:.12g} "
          f"termination={run.termination} start={run.start_index} "
          f"starts={len(run.starts)}")
    if cfg.out:
        report = {
            "command": "optimize", "mu": params.mu, "best_F": run.best_F,
            "termination": run.termination, "start_index": run.start_index,
            "seed": run.seed, "wall_time": wall,
            "trajectory": [list(t) for t in run.trajectory],
            "starts": [
                {"start_index": s.start_index,
                 "F": None if s.failed else s.F,
                 "termination": s.termination, "iterations": s.iterations,
                 "error": s.error}
                for s in run.starts
            ],
        }
        fields = {"best_m.csv": run.best_m, "theta.csv": state.theta}
        plots = {"optimize.svg": (run.best_m, state.theta)} if cfg.plot else None
        persist_results(cfg.out, cfg, report, fields, plots)
    return 0


def _cmd_sweep(cfg: RunConfig) -> int:
    grid, params = _instance(cfg)
    report = fragmentation_sweep(params, grid, cfg.mu, _optim_config(cfg),
                                 allow_underresolved=cfg.allow_underresolved)
    for rec in report.records:
        if rec.error is not None:
            print(f"mu={rec.mu:g} FAILED: {rec.error}")
        else:
            jumps = "-" if rec.jumps is None else str(rec.jumps)
            print(f"mu={rec.mu:g} best_F={rec.best_F:.12g} bv={rec.bv:.6g} "
                  f"jumps={jumps} bangbang={rec.bangbang_frac:.3f} "
                  f"[{rec.wall_time:.1f}s]")
    print(f"bv_monotone={report.bv_monotone}")
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if cfg.out:
        rep = {
            "command": "sweep", "bv_monotone": report.bv_monotone,
            "warnings": report.warnings, "seed": report.seed,
            "records": [
                {"mu": r.mu, "best_F": r.best_F, "bv": r.bv, "jumps": r.jumps,
                 "bangbang_frac": r.bangbang_frac, "termination": r.termination,
                 "wall_time": r.wall_time, "error": r.error}
                for r in report.records
            ],
        }
        fields = {}
        plots = {}
        for i, rec in enumerate(report.records):
            if rec.best_m is None:
                continue
            fields[f"best_m_{i:02d}.csv"] = rec.best_m
            if cfg.plot:
                plots[f"best_m_{i:02d}.svg"] = (rec.best_m, None)
        rows = [
            {"mu": r.mu, "best_F": r.best_F, "bv": r.bv, "jumps": r.jumps,
             "bangbang_frac": r.bangbang_frac, "seconds": r.wall_time}
            for r in report.records
        ]
        persist_results(cfg.out, cfg, rep, fields, plots or None, rows)
    return 0


def _cmd_periodise(cfg: RunConfig) -> int:
    grid, params = _instance(cfg)
    m = make_crenel(grid, cfg.kappa, cfg.m0)
    t0 = time.perf_counter()
    rows = periodisation_check(m, params, cfg.k_max)
    wall = time.perf_counter() - t0
    for r in rows:
        print(f"k={r.k} mu={r.mu_k:.6g} F={r.F_k:.12g} deviation={r.deviation:.3e}")
    if cfg.out:
        report = {"command": "periodise-check", "wall_time": wall,
                  "max_deviation": max(r.deviation for r in rows),
                  "rows": [dataclasses.asdict(r) for r in rows]}
        persist_results(cfg.out, cfg, report, {"m.csv": m})
    return 0


def _cmd_lemma2(cfg: RunConfig) -> int:
    grid, params = _instance(cfg)
    m = make_crenel(grid, cfg.kappa, cfg.m0)
    t0 = time.perf_counter()
    eta, rows = lemma2_bound_sweep(m, params, cfg.mu[0], cfg.k_max)
    wall = time.perf_counter() - t0
    print(f"eta_hat={eta:.12g}")
    for r in rows:
        print(f"k={r.k} min_gap={r.min_gap:.12g} bound_ok={r.bound_ok}")
    if cfg.out:
        report = {"command": "lemma2", "eta_hat": eta, "wall_time": wall,
                  "all_ok": all(r.bound_ok for r in rows),
                  "rows": [dataclasses.asdict(r) for r in rows]}
        persist_results(cfg.out, cfg, report, {"m.csv": m})
    return 0


def _cmd_efficiency(cfg: RunConfig) -> int:
    grid, params = _instance(cfg)
    m = make_crenel(grid, cfg.kappa, cfg.m0)
    mus = cfg.mu if len(cfg.mu) > 1 else DEFAULT_EFFICIENCY_MUS
    t0 = time.perf_counter()
    ratio = efficiency_ratio(m, mus)
    wall = time.perf_counter() - t0
    print(f"efficiency: max F/m0 = {ratio:.12g} over {len(mus)} diffusivities")
    if cfg.out:
        report = {"command": "efficiency", "ratio": ratio,
                  "mu_list": list(mus), "wall_time": wall}
        persist_results(cfg.out, cfg, report, {"m.csv": m})
    return 0


_RUNNERS = {
    "solve": _cmd_solve,
    "optimize": _cmd_optimize,
    "sweep": _cmd_sweep,
    "periodise-check": _cmd_periodise,
    "lemma2": _cmd_lemma2,
    "efficiency": _cmd_efficiency,
}


def _parse_grid_flag(text: str):
    parts = text.lower().split("x")
    try:
        return [int(p) for p in parts]
    except ValueError:
        raise ConfigError("grid", f"expected N or NxM, got {text!r}") from None


def _parse_mu_flag(text: str):
    try:
        return [float(p) for p in text.split(",")]
    except ValueError:
        raise ConfigError("mu", f"expected a number or comma list, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kppfrag",
        description="Steady-state logistic diffusion: solve, optimize "
                    "resource layouts, and run fragmentation experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON settings file")
        p.add_argument("--preset", choices=sorted(PRESETS))
        p.add_argument("--mu", help="diffusivity, or comma list for sweeps")
        p.add_argument("--m0", type=float, help="resource budget (mean of m)")
        p.add_argument("--kappa", type=float, help="pointwise cap on m")
        p.add_argument("--grid", help="nodes per axis: N or NxM")
        p.add_argument("--seed", type=int)
        p.add_argument("--starts", type=int)
        p.add_argument("--k-max", type=int, dest="k_max")
        p.add_argument("--out", help="directory for report/CSV/manifest")
        p.add_argument("--plot", action="store_true", default=None)
        p.add_argument("--allow-underresolved", action="store_true",
                       default=None, dest="allow_underresolved")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    settings: dict = {}
    if args.preset:
        settings.update(PRESETS[args.preset])
    if args.config:
        settings.update(load_config_file(args.config))
    if args.mu is not None:
        settings["mu"] = _parse_mu_flag(args.mu)
    if args.grid is not None:
        settings["grid"] = _parse_grid_flag(args.grid)
    for key in ("m0", "kappa", "seed", "starts", "k_max", "out", "plot",
                "allow_underresolved"):
        val = getattr(args, key)
        if val is not None:
            settings[key] = val
    return parse_config(settings, args.command)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        return _RUNNERS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except ResolutionError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, OptimizationError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
