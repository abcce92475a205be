"""Command-line entry point: ``adaptagg {synth,benchmark,aggregate,sweep}``.

A JSON run config supplies defaults and command-line flags override it. Every
artifact lands under ``--out`` next to a ``manifest.json`` listing input and
output hashes, the package version and the seed. Outputs contain no clock
readings unless ``--timings`` is given, so reruns produce identical bytes.

Exit codes: 0 ok, 2 config error, 3 infeasible or unbounded, 4 solver limit,
5 some sweep cells failed.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any

from . import __version__, pipeline, solver
from .clustering import LINKAGES, METHODS, ClusteringError
from .model import (
    VARIANTS,
    ModelError,
    Policy,
    SolveFailed,
    load_config,
    base_catalog,
)
from .timeseries import ConfigError, DataError, HorizonData, SynthConfig, load_csv, synthesize, write_csv

log = logging.getLogger("adaptagg")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_LIMIT, EXIT_PARTIAL = 0, 2, 3, 4, 5
DEFAULT_SYNTH_SEED = 42


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _dump(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ----------------------------------------------------------------- run config


class RunConfig:
    """Resolved settings for one command (config file first, then flags)."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        raw: dict[str, Any] = {}
        self.base = Path.cwd()
        if args.config:
            cfg_path = Path(args.config)
            if not cfg_path.is_file():
                raise ConfigError(f"config file {cfg_path} not found")
            try:
                raw = json.loads(cfg_path.read_text())
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{cfg_path}: {exc}") from exc
            self.base = cfg_path.parent
        known = {"data", "synth", "seed", "catalog", "variant", "rps", "slice_hours", "cluster", "solver", "out"}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        self.raw = raw
        cluster = dict(raw.get("cluster", {}))
        solver_raw = dict(raw.get("solver", {}))

        def pick(flag, value):
            return value if flag is None else flag

        self.data_path = self._path(pick(getattr(args, "data", None), raw.get("data")), must_exist=True)
        self.synth = dict(raw.get("synth", {}))
        self.seed = int(pick(args.seed, raw.get("seed", DEFAULT_SYNTH_SEED)))
        self.catalog_path = self._path(pick(args.catalog, raw.get("catalog")), must_exist=True)
        self.variant = pick(args.variant, raw.get("variant"))
        self.rps = pick(args.rps, raw.get("rps"))
        self.slice_hours = int(pick(args.slice_hours, raw.get("slice_hours", 168)))
        centroid = True if args.centroid else None
        self.cluster = pipeline.ClusterConfig(
            k=int(pick(args.k, cluster.get("k", 30))),
            method=pick(args.method, cluster.get("method", "agglomerative")),
            linkage=pick(args.linkage, cluster.get("linkage", "single")),
            centroid_mode=bool(pick(centroid, cluster.get("centroid_mode", False))),
            standardize=bool(pick(args.standardize, cluster.get("standardize", True))),
            seed=self.seed,
            slice_hours=self.slice_hours,
        )
        tol = solver.Tolerances(mip_gap=float(pick(args.mip_gap, solver_raw.get("mip_gap", 1e-4))))
        limits = solver.Limits(time_limit=float(pick(args.time_limit, solver_raw.get("time_limit", 3600.0))))
        self.solver = pipeline.SolverConfig(pick(args.backend, solver_raw.get("backend", "auto")), tol, limits)
        out = pick(args.out, raw.get("out"))
        if out is None:
            raise ConfigError("--out (or 'out' in the config) is required")
        self.out = self._path(out, must_exist=False)
        self.jobs = max(1, int(args.jobs))
        self.validate()

    def _path(self, value, must_exist: bool) -> Path | None:
        if value is None:
            return None
        p = Path(value)
        if not p.is_absolute() and self.args.config and not Path(value).exists():
            p = self.base / p
        if must_exist and not p.exists():
            raise ConfigError(f"path {value} does not exist")
        return p

    def validate(self) -> None:
        if self.rps is not None and not 0.0 <= float(self.rps) <= 1.0:
            raise ConfigError(f"rps must lie in [0, 1], got {self.rps}")
        if self.variant is not None and self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}")
        if self.cluster.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        if self.cluster.linkage not in LINKAGES:
            raise ConfigError(f"linkage must be one of {LINKAGES}")
        if self.cluster.k < 1:
            raise ConfigError("k must be at least 1")
        if self.slice_hours < 1:
            raise ConfigError("slice hours must be positive")
        if self.solver.backend not in solver.backend_names():
            raise ConfigError(f"backend must be one of {solver.backend_names()}")

    # -- resolved objects

    def load_catalog(self):
        if self.catalog_path is None:
            catalog, policy = base_catalog(), Policy()
        else:
            catalog, policy = load_config(self.catalog_path)
        if self.rps is not None:
            policy = replace(policy, rps=float(self.rps))
        variant = self.variant or ("integer" if catalog.thermal else "linear")
        return catalog, policy, variant

    def load_data(self) -> HorizonData:
        if self.data_path is not None:
            return load_csv(self.data_path)
        try:
            cfg = SynthConfig(**self.synth)
        except TypeError as exc:
            raise ConfigError(f"bad synth settings: {exc}") from exc
        cfg.validate()
        return synthesize(cfg, self.seed)

    def inputs(self) -> dict[str, str]:
        out = {}
        if self.args.config:
            out["config"] = sha256_file(Path(self.args.config))
        if self.data_path is not None:
            out["data"] = sha256_file(self.data_path)
        if self.catalog_path is not None:
            out["catalog"] = sha256_file(self.catalog_path)
        return out

    def settings(self) -> dict[str, Any]:
        return {
            "data": str(self.data_path) if self.data_path else {"synth": self.synth, "seed": self.seed},
            "catalog": str(self.catalog_path) if self.catalog_path else "built-in",
            "variant": self.variant, "rps": self.rps, "slice_hours": self.slice_hours,
            "cluster": {
                "k": self.cluster.k, "method": self.cluster.method, "linkage": self.cluster.linkage,
                "centroid_mode": self.cluster.centroid_mode, "standardize": self.cluster.standardize,
            },
            "solver": {"backend": self.solver.backend, "mip_gap": self.solver.tolerances.mip_gap,
                       "time_limit": self.solver.limits.time_limit},
            "seed": self.seed,
        }


def write_manifest(out: Path, command: str, cfg: RunConfig | None, outputs: list[str],
                   extra: dict[str, Any] | None = None) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "inputs": cfg.inputs() if cfg else {},
        "settings": cfg.settings() if cfg else {},
        "outputs": {name: sha256_file(out / name) for name in sorted(outputs)},
    }
    manifest.update(extra or {})
    (out / "manifest.json").write_text(_dump(manifest))


# ------------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    if args.years <= 0:
        raise ConfigError("years must be positive")
    cfg = SynthConfig(years=args.years)
    cfg.validate()
    seed = DEFAULT_SYNTH_SEED if args.seed is None else args.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = synthesize(cfg, seed)
    write_csv(data, out / "data.csv")
    manifest = {
        "command": "synth", "version": __version__, "seed": seed, "years": args.years, "hours": data.hours,
        "outputs": {"data.csv": sha256_file(out / "data.csv")},
    }
    (out / "manifest.json").write_text(_dump(manifest))
    log.info("wrote %d hours to %s", data.hours, out / "data.csv")
    return EXIT_OK


def _cache(cfg: RunConfig) -> pipeline.Cache:
    return pipeline.Cache(Path(cfg.args.cache) if cfg.args.cache else cfg.out / "cache")


def cmd_benchmark(args) -> int:
    cfg = RunConfig(args)
    catalog, policy, variant = cfg.load_catalog()
    data = cfg.load_data()
    cfg.out.mkdir(parents=True, exist_ok=True)
    cache = _cache(cfg)
    sol = pipeline.run_benchmark(data, catalog, policy, variant, cache, cfg.solver, cfg.slice_hours)
    if cache.hits:
        log.info("benchmark served from cache")
    d = sol.to_dict()
    if args.timings:
        d["solve_time"] = sol.solve_time
    (cfg.out / "benchmark.json").write_text(_dump(d))
    write_manifest(cfg.out, "benchmark", cfg, ["benchmark.json"])
    print(f"benchmark {sol.status.value}: objective {sol.objective:.6g}")
    return EXIT_OK


def cmd_aggregate(args) -> int:
    cfg = RunConfig(args)
    catalog, policy, variant = cfg.load_catalog()
    data = cfg.load_data()
    cfg.out.mkdir(parents=True, exist_ok=True)
    cache = _cache(cfg)
    outputs = ["aggregation.json"]
    if args.no_eval:
        agg = pipeline.aggregate(data, catalog, policy, variant, cfg.cluster, args.mode, cfg.solver, cache,
                                 cfg.jobs, args.fallback_drop_rps)
    else:
        runner = pipeline.run_adaptive if args.mode == "adaptive" else pipeline.run_traditional
        kw = {"fallback_drop_rps": args.fallback_drop_rps} if args.mode == "adaptive" else {}
        report = runner(data, catalog, policy, variant, cfg.cluster, cache, cfg.solver, cfg.jobs, **kw)
        agg = report.aggregation
        (cfg.out / "report.json").write_text(report.to_json(timings=args.timings) + "\n")
        outputs.append("report.json")
        print(f"{args.mode} k={agg.k}: MAPE {report.mape.aggregate:.4f}")
    (cfg.out / "aggregation.json").write_text(_dump(agg.to_dict()))
    write_manifest(cfg.out, "aggregate", cfg, outputs, {"mode": args.mode})
    print(f"representatives {agg.representatives} weights {agg.weights.tolist()}")
    return EXIT_OK


def _cell_file(cid: str) -> str:
    return hashlib.sha256(cid.encode()).hexdigest()[:16] + ".json"


def cmd_sweep(args) -> int:
    cfg = RunConfig(args)
    grid_path = Path(args.grid)
    if not grid_path.is_file():
        raise ConfigError(f"grid file {grid_path} not found")
    try:
        grid = pipeline.SweepGrid.from_dict(json.loads(grid_path.read_text()))
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        raise ConfigError(f"{grid_path}: {exc}") from exc
    catalog, policy, _ = cfg.load_catalog()
    data = cfg.load_data()
    cfg.out.mkdir(parents=True, exist_ok=True)
    cells_dir = cfg.out / "cells"
    cells_dir.mkdir(exist_ok=True)
    cells = grid.cells()
    done = {}
    for cell in cells:
        cid = pipeline.cell_id(cell)
        path = cells_dir / _cell_file(cid)
        if path.exists():
            stored = json.loads(path.read_text())
            if stored.get("status") == "ok":
                done[cid] = stored
    if done:
        log.info("resuming sweep: %d of %d cells already complete", len(done), len(cells))

    def record(cid, report):
        (cells_dir / _cell_file(cid)).write_text(_dump(report.to_dict(timings=args.timings)))
        log.info("cell %s: %s", cid, report.status)

    pipeline.sweep(grid, data, catalog, policy, cfg.cluster, _cache(cfg), cfg.solver, cfg.jobs,
                   skip=done, on_cell=record, fallback_drop_rps=args.fallback_drop_rps)
    results = [json.loads((cells_dir / _cell_file(pipeline.cell_id(c))).read_text()) for c in cells]
    pipeline.write_long_csv(results, cfg.out / "sweep.csv")
    pipeline.write_json(results, cfg.out / "sweep.json")
    pipeline.write_weights_csv(results, cfg.out / "weights.csv")
    failed = [r["scenario"]["cell"] for r in results if r["status"] != "ok"]
    write_manifest(cfg.out, "sweep", cfg, ["sweep.csv", "sweep.json", "weights.csv"], {
        "grid": sha256_file(grid_path),
        "cells": [pipeline.cell_id(c) for c in cells],
        "failed": failed,
    })
    print(f"sweep: {len(results) - len(failed)} of {len(results)} cells ok")
    return EXIT_PARTIAL if failed else EXIT_OK


# --------------------------------------------------------------------- parser


def _verbosity(p: argparse.ArgumentParser) -> None:
    p.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS,
                   help="more logging (-vv for debug)")


def _common(p: argparse.ArgumentParser) -> None:
    _verbosity(p)
    p.add_argument("--config", help="JSON run config; flags override its values")
    p.add_argument("--data", help="hourly CSV (timestamp,load,<resource>...); default: synthetic data")
    p.add_argument("--catalog", help="technology catalog and policy JSON; default: built-in base case")
    p.add_argument("--variant", choices=VARIANTS, help="linear (no thermal) or integer (unit commitment)")
    p.add_argument("--rps", type=float, help="renewable share R in [0, 1]")
    p.add_argument("--slice-hours", type=int, help="time slice length in hours (default 168)")
    p.add_argument("--method", choices=METHODS, help="clustering algorithm (default agglomerative)")
    p.add_argument("--linkage", choices=LINKAGES, help="agglomerative linkage (default single)")
    p.add_argument("--k", type=int, help="number of representative slices (default 30)")
    p.add_argument("--centroid", action="store_true", default=None,
                   help="use mean member profiles instead of medoid slices")
    p.add_argument("--standardize", action=argparse.BooleanOptionalAction, default=None,
                   help="z-score feature columns before clustering (default on)")
    p.add_argument("--seed", type=int, help=f"seed for synthetic data and k-means (default {DEFAULT_SYNTH_SEED})")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for per-slice solves")
    p.add_argument("--out", help="output directory")
    p.add_argument("--cache", help="benchmark/feature cache directory (default <out>/cache)")
    p.add_argument("--backend", choices=solver.backend_names(), help="solver backend (default auto)")
    p.add_argument("--time-limit", type=float, help="per-solve time limit in seconds")
    p.add_argument("--mip-gap", type=float, help="relative MIP gap (default 1e-4)")
    p.add_argument("--timings", action="store_true", help="include wall-clock timings in outputs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adaptagg", description="Adaptive time-slice aggregation for capacity expansion planning.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-vv for debug)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic hourly data set")
    p.add_argument("--years", type=float, default=1.0, help="horizon length in years of 8760 h")
    p.add_argument("--seed", type=int, help=f"random seed (default {DEFAULT_SYNTH_SEED})")
    p.add_argument("--out", required=True, help="output directory")
    _verbosity(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("benchmark", help="solve the full-horizon model")
    _common(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("aggregate", help="select weighted representative slices and evaluate them")
    _common(p)
    p.add_argument("--mode", choices=("adaptive", "traditional"), default="adaptive",
                   help="features from slice solves (adaptive) or raw profiles (traditional)")
    p.add_argument("--no-eval", action="store_true", help="stop after clustering; skip benchmark and MAPE")
    p.add_argument("--fallback-drop-rps", action="store_true",
                   help="re-solve infeasible slices without the renewable share constraint")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("sweep", help="run a grid of scenarios (resumable)")
    _common(p)
    p.add_argument("--grid", required=True, help="JSON grid: lists for rps, k, method, linkage, ...")
    p.add_argument("--fallback-drop-rps", action="store_true",
                   help="re-solve infeasible slices without the renewable share constraint")
    p.set_defaults(func=cmd_sweep)
    return parser


def _status_exit(status: solver.Status) -> int:
    return EXIT_LIMIT if status is solver.Status.LIMIT else EXIT_INFEASIBLE


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except pipeline.PipelineError as exc:
        cause = exc.cause
        if isinstance(cause, pipeline.SliceInfeasible):
            print(f"error: slice {cause.index} is {cause.status.value} during {exc.stage}", file=sys.stderr)
            return _status_exit(cause.status)
        if isinstance(cause, SolveFailed):
            print(f"error: {exc.stage}: solver status {cause.status.value}", file=sys.stderr)
            return _status_exit(cause.status)
        if isinstance(cause, (ModelError, ClusteringError, DataError, ValueError)):
            print(f"error: {exc.stage}: {cause}", file=sys.stderr)
            return EXIT_CONFIG
        raise
    except SolveFailed as exc:
        print(f"error: solver status {exc.status.value}", file=sys.stderr)
        return _status_exit(exc.status)
    except (ConfigError, ModelError, DataError, ClusteringError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
