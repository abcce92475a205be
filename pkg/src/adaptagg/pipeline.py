"""End-to-end runs: benchmark, feature extraction, aggregation, evaluation, sweeps."""
from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import logging
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import clustering, solver
from .clustering import AggregationResult, FeatureMatrix
from .model import (
    Policy,
    PlanSolution,
    SolveFailed,
    TechCatalog,
    build_full,
    build_reduced,
    build_slice,
    config_to_dict,
    solve_instance,
)
from .timeseries import HorizonData, TimeSlice, slice_horizon, sliced_prefix

logger = logging.getLogger(__name__)

ZERO_CAPACITY = 1e-6  # MW or MWh; smaller benchmark capacities are treated as zero
CAPEX_MULTIPLIERS = (0.75, 1.0, 1.25, 1.5)


class MetricError(ValueError):
    pass


class SliceInfeasible(RuntimeError):
    def __init__(self, index: int, status: solver.Status):
        super().__init__(f"slice {index} subproblem ended with status {status.value}")
        self.index = index
        self.status = status


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class SolverConfig:
    backend: str = "auto"
    tolerances: solver.Tolerances = solver.Tolerances()
    limits: solver.Limits = solver.Limits()

    def key(self) -> dict[str, Any]:
        return {"backend": self.backend, "tolerances": asdict(self.tolerances)}


@dataclass(frozen=True)
class ClusterConfig:
    k: int = 30
    method: str = "agglomerative"
    linkage: str = "single"
    centroid_mode: bool = False
    standardize: bool = True
    seed: int = 0
    n_init: int = 10
    slice_hours: int = 168


# ------------------------------------------------------------------------- cache


def content_hash(*parts: Any) -> str:
    h = hashlib.sha256()
    for p in parts:
        if isinstance(p, HorizonData):
            h.update(p.fingerprint())
        elif isinstance(p, bytes):
            h.update(p)
        else:
            h.update(json.dumps(p, sort_keys=True, default=str).encode())
        h.update(b"\x1f")
    return h.hexdigest()


class Cache:
    """Write-once store for benchmark solutions and feature matrices.

    Always keeps an in-memory copy; with ``directory`` set, entries are also
    written as JSON files named by their content hash.
    """

    def __init__(self, directory: str | Path | None = None):
        self.directory = None if directory is None else Path(directory)
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
        self._mem: dict[str, Any] = {}
        self.hits = 0
        self.misses = 0

    def _path(self, kind: str, key: str) -> Path | None:
        return None if self.directory is None else self.directory / f"{kind}-{key}.json"

    def get(self, kind: str, key: str):
        if (kind, key) in self._mem:
            self.hits += 1
            return self._mem[(kind, key)]
        path = self._path(kind, key)
        if path is not None and path.exists():
            value = json.loads(path.read_text())
            self._mem[(kind, key)] = value
            self.hits += 1
            return value
        self.misses += 1
        return None

    def put(self, kind: str, key: str, value) -> None:
        self._mem[(kind, key)] = value
        path = self._path(kind, key)
        if path is not None:
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps(value, sort_keys=True))
            tmp.replace(path)


# --------------------------------------------------------------------- benchmark


def benchmark_key(data, catalog, policy, variant, solver_cfg) -> str:
    return content_hash("benchmark", data, config_to_dict(catalog, policy), variant, solver_cfg.key())


def run_benchmark(
    data: HorizonData,
    catalog: TechCatalog,
    policy: Policy,
    variant: str,
    cache: Cache | None = None,
    solver_cfg: SolverConfig = SolverConfig(),
    slice_hours: int | None = 168,
    audit: bool = False,
) -> PlanSolution:
    """Solve the full-horizon model (over whole slices only, when ``slice_hours`` is set).

    A cache hit returns the stored solution with ``solve_time == 0``; with
    ``audit=True`` the model is re-solved and compared with the cached copy.
    """
    if slice_hours:
        data = sliced_prefix(data, slice_hours)
    key = benchmark_key(data, catalog, policy, variant, solver_cfg)
    cached = cache.get("benchmark", key) if cache is not None else None
    if cached is not None and not audit:
        logger.info("benchmark cache hit %s", key[:12])
        sol = PlanSolution.from_dict(cached)
        sol.solve_time = 0.0
        return sol
    inst = build_full(data, catalog, policy, variant)
    sol, _ = solve_instance(inst, solver_cfg.backend, solver_cfg.tolerances, solver_cfg.limits)
    if cached is not None and audit:
        fresh = sol.to_dict()
        if fresh["capacities"] != cached["capacities"] or fresh["objective"] != cached["objective"]:
            raise RuntimeError(f"cached benchmark {key[:12]} differs from a fresh solve")
    if cache is not None and cached is None:
        cache.put("benchmark", key, sol.to_dict())
    return sol


# ---------------------------------------------------------------------- features


def _solve_slice(args) -> tuple[int, list[float] | None, str]:
    data, sl, catalog, policy, variant, solver_cfg, fallback = args
    inst = build_slice(data, sl, catalog, policy, variant)
    try:
        sol, _ = solve_instance(inst, solver_cfg.backend, solver_cfg.tolerances, solver_cfg.limits)
    except SolveFailed as exc:
        if fallback and policy.slice_rps:
            logger.warning("slice %d: %s; retrying without the renewable share", sl.index, exc)
            return _solve_slice((data, sl, catalog, replace(policy, slice_rps=False), variant, solver_cfg, False))
        return sl.index, None, exc.status.value
    return sl.index, list(sol.capacity_vector()), "ok"


def slice_capacities(
    data: HorizonData,
    slices: Sequence[TimeSlice],
    catalog: TechCatalog,
    policy: Policy,
    variant: str,
    solver_cfg: SolverConfig = SolverConfig(),
    jobs: int = 1,
    fallback_drop_rps: bool = False,
    cache: Cache | None = None,
) -> np.ndarray:
    """Optimal capacities of every slice solved on its own, one row per slice."""
    if not slices:
        raise ValueError("no slices")
    key = content_hash(
        "features", data, config_to_dict(catalog, policy), variant, solver_cfg.key(),
        [(s.index, s.offset, s.length) for s in slices], fallback_drop_rps,
    )
    if cache is not None:
        hit = cache.get("features", key)
        if hit is not None:
            return np.asarray(hit, dtype=float)
    tasks = [(data, s, catalog, policy, variant, solver_cfg, fallback_drop_rps) for s in slices]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_solve_slice, tasks))
    else:
        results = [_solve_slice(t) for t in tasks]
    rows = []
    for index, row, status in sorted(results, key=lambda r: r[0]):
        if row is None:
            raise SliceInfeasible(index, solver.Status(status))
        rows.append(row)
    out = np.asarray(rows, dtype=float)
    if cache is not None:
        cache.put("features", key, out.tolist())
    return out


def extract_features(
    data: HorizonData,
    slices: Sequence[TimeSlice],
    catalog: TechCatalog,
    policy: Policy,
    variant: str,
    standardize: bool = True,
    **kw,
) -> FeatureMatrix:
    """Adaptive features: the capacity decisions of each slice's own optimum."""
    raw = slice_capacities(data, slices, catalog, policy, variant, **kw)
    return clustering.standardize(
        raw, mode="adaptive", names=catalog.capacity_names(),
        slice_length=slices[0].length, enabled=standardize,
    )


def raw_features(data: HorizonData, slices: Sequence[TimeSlice], resources: Sequence[str] | None = None,
                 standardize: bool = True) -> FeatureMatrix:
    """Traditional features: each slice's load and profiles laid end to end."""
    resources = list(data.resources if resources is None else resources)
    rows = []
    for s in slices:
        view = s.view(data)
        rows.append(np.concatenate([view.load] + [view.profiles[r] for r in resources]))
    L = slices[0].length
    names = [f"{series}[{t}]" for series in ["load", *resources] for t in range(L)]
    return clustering.standardize(np.asarray(rows), mode="traditional", names=names,
                                  slice_length=L, enabled=standardize)


# -------------------------------------------------------------------------- MAPE


@dataclass(frozen=True)
class Mape:
    components: dict[str, float]
    aggregate: float
    excluded: tuple[str, ...] = ()


def mape(benchmark: Sequence[float], estimate: Sequence[float], names: Sequence[str] | None = None) -> Mape:
    """Mean of ``|estimate - benchmark| / benchmark`` over non-zero benchmark entries."""
    y = np.asarray(benchmark, dtype=float)
    yhat = np.asarray(estimate, dtype=float)
    if y.shape != yhat.shape or y.ndim != 1:
        raise MetricError("benchmark and estimate must be vectors of equal length")
    names = [str(i) for i in range(y.size)] if names is None else list(names)
    zero = np.abs(y) < ZERO_CAPACITY
    if zero.all():
        raise MetricError("every benchmark entry is zero; MAPE is undefined")
    excluded = tuple(n for n, z in zip(names, zero) if z)
    if excluded:
        warnings.warn(f"zero benchmark capacity excluded from MAPE: {', '.join(excluded)}", stacklevel=2)
    comps = {n: float(abs(a - b) / b) for n, a, b, z in zip(names, yhat, y, zero) if not z}
    return Mape(comps, float(np.mean(list(comps.values()))), excluded)


# ------------------------------------------------------------------------ report


@dataclass
class EvaluationReport:
    scenario: dict[str, Any]
    aggregation: AggregationResult
    reduced: PlanSolution | None = None
    benchmark: PlanSolution | None = None
    mape: Mape | None = None
    timings: dict[str, float] = field(default_factory=dict)
    status: str = "ok"
    failed_stage: str | None = None
    error: str | None = None

    @property
    def speedup(self) -> float | None:
        b, r = self.timings.get("benchmark_solve"), self.timings.get("reduced_solve")
        return None if not b or not r else b / r

    def to_dict(self, timings: bool = False) -> dict[str, Any]:
        d: dict[str, Any] = {
            "status": self.status,
            "scenario": self.scenario,
            "aggregation": {
                "representatives": self.aggregation.representatives if self.aggregation else None,
                "weights": self.aggregation.weights.tolist() if self.aggregation else None,
                "slice_weights": self.aggregation.selection_weights().tolist() if self.aggregation else None,
                "dispersion": self.aggregation.dispersion if self.aggregation else None,
            },
        }
        if self.failed_stage:
            d["failed_stage"] = self.failed_stage
            d["error"] = self.error
        if self.benchmark is not None:
            d["benchmark"] = {"capacities": self.benchmark.capacities, "objective": self.benchmark.objective}
        if self.reduced is not None:
            d["reduced"] = {"capacities": self.reduced.capacities, "objective": self.reduced.objective}
        if self.mape is not None:
            d["mape"] = {"aggregate": self.mape.aggregate, "components": self.mape.components,
                         "excluded": list(self.mape.excluded)}
        if timings:
            d["timings"] = dict(self.timings)
        return d

    def to_json(self, timings: bool = False) -> str:
        return json.dumps(self.to_dict(timings), indent=2, sort_keys=True)


def _scenario(policy, variant, cfg: ClusterConfig, mode: str, extra=None) -> dict[str, Any]:
    d = {
        "mode": mode, "variant": variant, "rps": policy.rps, "k": cfg.k, "method": cfg.method,
        "linkage": cfg.linkage if cfg.method == "agglomerative" else None,
        "centroid_mode": cfg.centroid_mode, "standardize": cfg.standardize, "seed": cfg.seed,
        "slice_hours": cfg.slice_hours,
    }
    d.update(extra or {})
    return d


def _stage(name: str, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except PipelineError:
        raise
    except Exception as exc:  # noqa: BLE001 - re-raised with the stage name
        raise PipelineError(name, exc) from exc


def aggregate(
    data: HorizonData,
    catalog: TechCatalog,
    policy: Policy,
    variant: str,
    cfg: ClusterConfig = ClusterConfig(),
    mode: str = "adaptive",
    solver_cfg: SolverConfig = SolverConfig(),
    cache: Cache | None = None,
    jobs: int = 1,
    fallback_drop_rps: bool = False,
    timings: dict[str, float] | None = None,
) -> AggregationResult:
    """Steps 1-3: slice, build features, cluster, pick weighted representatives."""
    timings = {} if timings is None else timings
    data = sliced_prefix(data, cfg.slice_hours)
    slices = _stage("slice", slice_horizon, data, cfg.slice_hours)
    t0 = time.perf_counter()
    if mode == "adaptive":
        features = _stage(
            "features", extract_features, data, slices, catalog, policy, variant,
            standardize=cfg.standardize, solver_cfg=solver_cfg, jobs=jobs,
            fallback_drop_rps=fallback_drop_rps, cache=cache,
        )
    elif mode == "traditional":
        features = _stage("features", raw_features, data, slices, [t.id for t in catalog.ire],
                          standardize=cfg.standardize)
    else:
        raise ValueError(f"mode must be 'adaptive' or 'traditional', got {mode!r}")
    timings["features"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    result = _stage("cluster", clustering.cluster, features, cfg.k, cfg.method, cfg.linkage,
                    seed=cfg.seed, n_init=cfg.n_init)
    result = _stage("representatives", clustering.select_representatives, result, features, data,
                    cfg.centroid_mode)
    result.method.update({"mode": mode, "standardize": cfg.standardize, "seed": cfg.seed})
    timings["clustering"] = time.perf_counter() - t0
    return result


def evaluate(
    data: HorizonData,
    aggregation: AggregationResult,
    catalog: TechCatalog,
    policy: Policy,
    variant: str,
    benchmark: PlanSolution | None,
    solver_cfg: SolverConfig = SolverConfig(),
    timings: dict[str, float] | None = None,
) -> tuple[PlanSolution, Mape | None]:
    """Step 4: solve the weighted reduced model and score it against the benchmark."""
    timings = {} if timings is None else timings
    data = sliced_prefix(data, aggregation.slice_length)
    inst = _stage("reduced_build", build_reduced, data, aggregation, catalog, policy, variant)
    reduced, _ = _stage("reduced_solve", solve_instance, inst, solver_cfg.backend,
                        solver_cfg.tolerances, solver_cfg.limits)
    timings["reduced_solve"] = reduced.solve_time
    score = None
    if benchmark is not None:
        names = catalog.capacity_names()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            score = _stage("mape", mape, benchmark.capacity_vector(names), reduced.capacity_vector(names), names)
    return reduced, score


def _run(mode, data, catalog, policy, variant, cfg, cache, solver_cfg, jobs, evaluate_benchmark,
         fallback_drop_rps, extra) -> EvaluationReport:
    timings: dict[str, float] = {}
    bench = None
    if evaluate_benchmark:
        t0 = time.perf_counter()
        bench = _stage("benchmark", run_benchmark, data, catalog, policy, variant, cache, solver_cfg,
                       cfg.slice_hours)
        timings["benchmark_solve"] = bench.solve_time
        timings["benchmark_total"] = time.perf_counter() - t0
    agg = aggregate(data, catalog, policy, variant, cfg, mode, solver_cfg, cache, jobs,
                    fallback_drop_rps, timings)
    reduced, score = evaluate(data, agg, catalog, policy, variant, bench, solver_cfg, timings)
    return EvaluationReport(_scenario(policy, variant, cfg, mode, extra), agg, reduced, bench, score, timings)


def run_adaptive(data, catalog, policy, variant, cfg: ClusterConfig = ClusterConfig(), cache: Cache | None = None,
                 solver_cfg: SolverConfig = SolverConfig(), jobs: int = 1, evaluate_benchmark: bool = True,
                 fallback_drop_rps: bool = False, extra: dict | None = None) -> EvaluationReport:
    return _run("adaptive", data, catalog, policy, variant, cfg, cache, solver_cfg, jobs,
                evaluate_benchmark, fallback_drop_rps, extra)


def run_traditional(data, catalog, policy, variant, cfg: ClusterConfig = ClusterConfig(), cache: Cache | None = None,
                    solver_cfg: SolverConfig = SolverConfig(), jobs: int = 1, evaluate_benchmark: bool = True,
                    extra: dict | None = None) -> EvaluationReport:
    return _run("traditional", data, catalog, policy, variant, cfg, cache, solver_cfg, jobs,
                evaluate_benchmark, False, extra)


# ------------------------------------------------------------------------- sweep


def capex_grid(multipliers: Sequence[float] = CAPEX_MULTIPLIERS) -> list[dict[str, float]]:
    """Wind/solar investment-cost multipliers, every combination."""
    return [{"wind": w, "solar": s} for w in multipliers for s in multipliers]


@dataclass(frozen=True)
class SweepGrid:
    rps: tuple[float, ...] = (0.5,)
    k: tuple[int, ...] = (30,)
    method: tuple[str, ...] = ("agglomerative",)
    linkage: tuple[str, ...] = ("single",)
    centroid_mode: tuple[bool, ...] = (False,)
    variant: tuple[str, ...] = ("linear",)
    mode: tuple[str, ...] = ("adaptive",)
    capex: tuple[dict, ...] = ({},)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SweepGrid":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown sweep grid keys {sorted(unknown)}")
        kw = {}
        for key, value in d.items():
            if key == "capex" and value == "full_grid":
                value = capex_grid()
            kw[key] = tuple(value) if isinstance(value, (list, tuple)) else (value,)
        grid = cls(**kw)
        if not all(getattr(grid, f) for f in known):
            raise ValueError("every sweep grid axis needs at least one value")
        return grid

    def cells(self) -> list[dict[str, Any]]:
        out, seen = [], set()
        for rps, variant, capex, mode, method, linkage, k, centroid in itertools.product(
            self.rps, self.variant, self.capex, self.mode, self.method, self.linkage, self.k, self.centroid_mode
        ):
            cell = {
                "rps": float(rps), "variant": variant, "capex": dict(capex), "mode": mode, "method": method,
                "linkage": linkage if method == "agglomerative" else None, "k": int(k),
                "centroid_mode": bool(centroid),
            }
            cid = cell_id(cell)
            if cid not in seen:
                seen.add(cid)
                out.append(cell)
        return out


def cell_id(cell: dict[str, Any]) -> str:
    capex = ",".join(f"{k}={v:g}" for k, v in sorted(cell["capex"].items())) or "base"
    return (
        f"{cell['mode']}|{cell['variant']}|R={cell['rps']:g}|capex={capex}|{cell['method']}"
        f"|{cell['linkage'] or '-'}|k={cell['k']}|{'centroid' if cell['centroid_mode'] else 'medoid'}"
    )


def sweep(
    grid: SweepGrid,
    data: HorizonData,
    catalog: TechCatalog,
    base_policy: Policy = Policy(),
    base_cfg: ClusterConfig = ClusterConfig(),
    cache: Cache | None = None,
    solver_cfg: SolverConfig = SolverConfig(),
    jobs: int = 1,
    skip: Iterable[str] = (),
    on_cell=None,
    fallback_drop_rps: bool = False,
) -> list[EvaluationReport]:
    """Run every grid cell, sharing benchmark and feature caches.

    Cells whose id is in ``skip`` are not run. A failing cell yields a report
    with ``status='failed'`` and the sweep carries on. ``on_cell(cell_id,
    report)`` is called after each executed cell.
    """
    cache = cache if cache is not None else Cache()
    skip = set(skip)
    reports = []
    for cell in grid.cells():
        cid = cell_id(cell)
        if cid in skip:
            continue
        cat = catalog
        if cell["variant"] == "linear":
            cat = cat.without_thermal()
        if cell["capex"]:
            cat = cat.with_capex_multipliers(cell["capex"])
        policy = replace(base_policy, rps=cell["rps"])
        cfg = replace(base_cfg, k=cell["k"], method=cell["method"], linkage=cell["linkage"] or base_cfg.linkage,
                      centroid_mode=cell["centroid_mode"])
        extra = {"cell": cid, "capex": cell["capex"]}
        runner = run_adaptive if cell["mode"] == "adaptive" else run_traditional
        kw = {"fallback_drop_rps": fallback_drop_rps} if cell["mode"] == "adaptive" else {}
        try:
            report = runner(data, cat, policy, cell["variant"], cfg, cache, solver_cfg, jobs, extra=extra, **kw)
        except PipelineError as exc:
            logger.error("cell %s failed at %s: %s", cid, exc.stage, exc.cause)
            report = EvaluationReport(
                _scenario(policy, cell["variant"], cfg, cell["mode"], extra), None,
                status="failed", failed_stage=exc.stage, error=str(exc.cause),
            )
        reports.append(report)
        if on_cell is not None:
            on_cell(cid, report)
    return reports


LONG_COLUMNS = ["cell", "mode", "variant", "rps", "capex", "method", "linkage", "k", "centroid_mode",
                "metric", "value"]


def long_rows(report: EvaluationReport | dict[str, Any]) -> list[dict[str, Any]]:
    """Plot-ready rows: one per scenario and metric.

    Accepts a report or its ``to_dict()`` form (as stored by resumable sweeps).
    """
    d = report.to_dict() if isinstance(report, EvaluationReport) else report
    sc = d["scenario"]
    base = {
        "cell": sc.get("cell", ""), "mode": sc["mode"], "variant": sc["variant"], "rps": sc["rps"],
        "capex": ",".join(f"{k}={v:g}" for k, v in sorted(sc.get("capex", {}).items())) or "base",
        "method": sc["method"], "linkage": sc["linkage"] or "", "k": sc["k"],
        "centroid_mode": sc["centroid_mode"],
    }
    rows = []

    def add(metric, value):
        rows.append({**base, "metric": metric, "value": value})

    if d["status"] != "ok":
        add("failed", d.get("failed_stage"))
        return rows
    if "mape" in d:
        add("mape", d["mape"]["aggregate"])
        for name, v in d["mape"]["components"].items():
            add(f"mape_{name}", v)
    for side in ("benchmark", "reduced"):
        if side in d:
            add(f"objective_{side}", d[side]["objective"])
            for name, v in d[side]["capacities"].items():
                add(f"{side}_{name}", v)
    return rows


def _as_dicts(reports) -> list[dict[str, Any]]:
    return [r.to_dict() if isinstance(r, EvaluationReport) else r for r in reports]


def write_long_csv(reports, path: str | Path) -> None:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=LONG_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for d in _as_dicts(reports):
        for row in long_rows(d):
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    Path(path).write_text(buf.getvalue())


def write_weights_csv(reports, path: str | Path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["cell", "slice", "weight"])
    for d in _as_dicts(reports):
        weights = d["aggregation"]["slice_weights"]
        if weights is None:
            continue
        for s, w in enumerate(weights):
            writer.writerow([d["scenario"].get("cell", ""), s, int(w)])
    Path(path).write_text(buf.getvalue())


def write_json(reports, path: str | Path) -> None:
    Path(path).write_text(json.dumps(_as_dicts(reports), indent=2, sort_keys=True) + "\n")
