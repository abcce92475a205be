"""Capacity-expansion model with storage, renewables and unit-committed thermal.

One compiler, :func:`compile_blocks`, turns a list of equally long hourly
blocks into a :class:`EsomInstance`. The three public scopes are thin
wrappers around it:

* :func:`build_full` -- the whole horizon as one block;
* :func:`build_slice` -- one week, fixed costs scaled by its share of the horizon;
* :func:`build_reduced` -- weighted representative weeks sharing one set of
  capacity variables.

Costs are in $; energy in MWh per hour (= MW). Catalog JSON uses the $/kW and
$/kWh units of the published parameter table and is converted on load.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import solver
from .solver import LinearProgram, ProgramBuilder, SolveOutcome, SolveRequest, Status
from .timeseries import HorizonData, TimeSlice

VARIANTS = ("linear", "integer")
SOC_BOUNDARIES = ("cyclic", "empty")
KW_PER_MW = 1000.0
_ID_RE = re.compile(r"^[A-Za-z][A-Za-z0-9_]*$")


class ModelError(ValueError):
    pass


class VariantMismatchError(ModelError):
    pass


class ConsistencyError(ModelError):
    pass


class InternalConsistencyError(RuntimeError):
    pass


class SolveFailed(RuntimeError):
    """The solver ended without a usable point (infeasible, unbounded, limit)."""

    def __init__(self, status: Status, message: str = ""):
        super().__init__(f"solver status {status.value}" + (f": {message}" if message else ""))
        self.status = status


# ----------------------------------------------------------------------- catalog


@dataclass(frozen=True)
class IreTech:
    id: str
    capex: float  # $/MW


@dataclass(frozen=True)
class StorageTech:
    id: str
    energy_capex: float  # $/MWh
    power_capex: float  # $/MW
    deg_cost: float  # $/MWh charged or discharged
    efficiency: float  # per leg


@dataclass(frozen=True)
class ThermalTech:
    id: str
    capex: float  # $/MW
    op_cost: float  # $/MWh
    updn_cost: float  # $ per start-up or shut-down
    xi_min: float
    xi_max: float
    min_up: int
    min_down: int
    n_units: int
    unit_size: float  # MW per unit


@dataclass(frozen=True)
class TechCatalog:
    ire: tuple[IreTech, ...]
    storage: tuple[StorageTech, ...] = ()
    thermal: tuple[ThermalTech, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "ire", tuple(self.ire))
        object.__setattr__(self, "storage", tuple(self.storage))
        object.__setattr__(self, "thermal", tuple(self.thermal))
        ids = [t.id for t in (*self.ire, *self.storage, *self.thermal)]
        if len(set(ids)) != len(ids):
            raise ModelError(f"duplicate technology ids in {ids}")
        for tid in ids:
            if not _ID_RE.match(tid):
                raise ModelError(f"technology id {tid!r} must match {_ID_RE.pattern}")
        for t in self.ire:
            if t.capex < 0:
                raise ModelError(f"{t.id}: negative cost")
        for s in self.storage:
            if min(s.energy_capex, s.power_capex, s.deg_cost) < 0:
                raise ModelError(f"{s.id}: negative cost")
            if not 0 < s.efficiency <= 1:
                raise ModelError(f"{s.id}: efficiency must lie in (0, 1]")
        for j in self.thermal:
            if min(j.capex, j.op_cost, j.updn_cost) < 0:
                raise ModelError(f"{j.id}: negative cost")
            if not 0 <= j.xi_min <= j.xi_max <= 1:
                raise ModelError(f"{j.id}: need 0 <= xi_min <= xi_max <= 1")
            if j.n_units < 0 or int(j.n_units) != j.n_units:
                raise ModelError(f"{j.id}: n_units must be a non-negative integer")
            if j.min_up < 0 or j.min_down < 0:
                raise ModelError(f"{j.id}: negative minimum up/down time")
            if j.unit_size <= 0 or j.unit_size != int(j.unit_size):
                raise ModelError(f"{j.id}: unit size must be a positive whole number of MW")

    def capacity_names(self) -> list[str]:
        """Names of the capacity decisions, in feature order."""
        names = [t.id for t in self.ire]
        for s in self.storage:
            names += [f"{s.id}_energy", f"{s.id}_power"]
        return names + [j.id for j in self.thermal]

    def without_thermal(self) -> "TechCatalog":
        return TechCatalog(self.ire, self.storage, ())

    def with_capex_multipliers(self, multipliers: dict[str, float]) -> "TechCatalog":
        """Scale renewable investment costs, e.g. ``{"wind": 1.25, "solar": 0.75}``."""
        unknown = set(multipliers) - {t.id for t in self.ire}
        if unknown:
            raise ModelError(f"no renewable technology named {sorted(unknown)}")
        ire = tuple(IreTech(t.id, t.capex * multipliers.get(t.id, 1.0)) for t in self.ire)
        return TechCatalog(ire, self.storage, self.thermal)

    # JSON uses $/kW, $/kWh (converted here to $/MW, $/MWh)
    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TechCatalog":
        try:
            ire = [IreTech(t["id"], float(t["capex_usd_per_kw"]) * KW_PER_MW) for t in d.get("ire", [])]
            storage = [
                StorageTech(
                    s["id"],
                    energy_capex=float(s["energy_capex_usd_per_kwh"]) * KW_PER_MW,
                    power_capex=float(s["power_capex_usd_per_kw"]) * KW_PER_MW,
                    deg_cost=float(s["opex_usd_per_mwh"]),
                    efficiency=float(s["efficiency"]),
                )
                for s in d.get("storage", [])
            ]
            thermal = [
                ThermalTech(
                    j["id"],
                    capex=float(j["capex_usd_per_kw"]) * KW_PER_MW,
                    op_cost=float(j["opex_usd_per_mwh"]),
                    updn_cost=float(j["startup_shutdown_cost_usd"]),
                    xi_min=float(j["xi_min"]),
                    xi_max=float(j["xi_max"]),
                    min_up=int(j["min_up_hours"]),
                    min_down=int(j["min_down_hours"]),
                    n_units=int(j["n_units"]),
                    unit_size=float(j["unit_size_mw"]),
                )
                for j in d.get("thermal", [])
            ]
        except KeyError as exc:
            raise ModelError(f"catalog entry missing field {exc}") from None
        return cls(tuple(ire), tuple(storage), tuple(thermal))

    def to_dict(self) -> dict[str, Any]:
        return {
            "ire": [{"id": t.id, "capex_usd_per_kw": t.capex / KW_PER_MW} for t in self.ire],
            "storage": [
                {
                    "id": s.id,
                    "energy_capex_usd_per_kwh": s.energy_capex / KW_PER_MW,
                    "power_capex_usd_per_kw": s.power_capex / KW_PER_MW,
                    "opex_usd_per_mwh": s.deg_cost,
                    "efficiency": s.efficiency,
                }
                for s in self.storage
            ],
            "thermal": [
                {
                    "id": j.id,
                    "capex_usd_per_kw": j.capex / KW_PER_MW,
                    "opex_usd_per_mwh": j.op_cost,
                    "startup_shutdown_cost_usd": j.updn_cost,
                    "xi_min": j.xi_min,
                    "xi_max": j.xi_max,
                    "min_up_hours": j.min_up,
                    "min_down_hours": j.min_down,
                    "n_units": j.n_units,
                    "unit_size_mw": j.unit_size,
                }
                for j in self.thermal
            ],
        }


@dataclass(frozen=True)
class Policy:
    rps: float = 0.5
    slice_rps: bool = True  # apply the renewable share inside per-week subproblems

    def __post_init__(self):
        if not 0.0 <= self.rps <= 1.0:
            raise ModelError(f"renewable share must lie in [0, 1], got {self.rps}")


def base_catalog() -> TechCatalog:
    """Base-case technology costs; see README for which values are assumptions."""
    return TechCatalog.from_dict(BASE_CASE["catalog"])


BASE_CASE: dict[str, Any] = {
    "catalog": {
        "ire": [
            {"id": "solar", "capex_usd_per_kw": 1000.0},
            {"id": "wind", "capex_usd_per_kw": 1500.0},
        ],
        "storage": [
            {
                "id": "battery",
                "energy_capex_usd_per_kwh": 200.0,
                "power_capex_usd_per_kw": 70.0,
                "opex_usd_per_mwh": 50.0,
                "efficiency": 0.95,
            }
        ],
        "thermal": [
            {
                "id": "thermal",
                "capex_usd_per_kw": 1000.0,
                "opex_usd_per_mwh": 30.0,
                "startup_shutdown_cost_usd": 1000.0,
                "xi_min": 0.3,
                "xi_max": 1.0,
                "min_up_hours": 6,
                "min_down_hours": 6,
                "n_units": 8,
                "unit_size_mw": 15.0,
            }
        ],
    },
    "policy": {"rps": 0.5, "slice_rps": True},
}


def load_config(path: str | Path) -> tuple[TechCatalog, Policy]:
    d = json.loads(Path(path).read_text())
    return config_from_dict(d)


def config_from_dict(d: dict[str, Any]) -> tuple[TechCatalog, Policy]:
    if "catalog" not in d:
        raise ModelError("config needs a 'catalog' object")
    policy = d.get("policy", {})
    return TechCatalog.from_dict(d["catalog"]), Policy(
        rps=float(policy.get("rps", 0.5)), slice_rps=bool(policy.get("slice_rps", True))
    )


def config_to_dict(catalog: TechCatalog, policy: Policy) -> dict[str, Any]:
    return {"catalog": catalog.to_dict(), "policy": asdict(policy)}


# ---------------------------------------------------------------------- instance


@dataclass(frozen=True)
class Block:
    """A run of consecutive hours modelled together, with its weight."""

    load: np.ndarray
    avail: np.ndarray  # (n_ire, hours), catalog order
    weight: float = 1.0
    label: str = ""
    offset: int = 0
    slice_index: int | None = None

    @property
    def hours(self) -> int:
        return int(self.load.size)


@dataclass(frozen=True)
class Scope:
    kind: str  # full | slice | reduced
    slice_index: int | None = None
    weights: tuple[int, ...] = ()
    fixed_cost_scale: float = 1.0
    soc_boundary: str = "cyclic"


@dataclass(kw_only=True)
class EsomInstance(LinearProgram):
    """A compiled model: the linear program plus what is needed to read it back.

    ``index`` maps semantic names to variable ids: capacity entries are 1-D
    (one per technology), hourly entries have shape ``(n_tech, n_blocks, hours)``
    and curtailment ``w`` has shape ``(n_blocks, hours)``.
    """

    scope: Scope
    index: dict[str, np.ndarray]
    catalog: TechCatalog
    policy: Policy
    variant: str
    blocks: tuple[Block, ...]
    rps_row: int | None = None


def _check_variant(catalog: TechCatalog, variant: str) -> None:
    if variant not in VARIANTS:
        raise ModelError(f"variant must be one of {VARIANTS}, got {variant!r}")
    if variant == "linear" and catalog.thermal:
        raise VariantMismatchError("linear variant does not allow thermal technologies")
    if variant == "integer" and not catalog.thermal:
        raise VariantMismatchError("integer variant needs at least one thermal technology")
    if not catalog.ire:
        raise ModelError("at least one renewable technology is required")


def _block(data: HorizonData, catalog: TechCatalog, **kw) -> Block:
    missing = [t.id for t in catalog.ire if t.id not in data.profiles]
    if missing:
        raise ModelError(f"no capacity-factor series for {missing}")
    if data.hours < 1:
        raise ModelError("empty horizon")
    avail = np.vstack([data.profiles[t.id] for t in catalog.ire])
    return Block(load=np.asarray(data.load), avail=avail, **kw)


def compile_blocks(
    blocks: list[Block],
    catalog: TechCatalog,
    policy: Policy,
    variant: str,
    scope: Scope,
    apply_rps: bool = True,
) -> EsomInstance:
    _check_variant(catalog, variant)
    if not blocks:
        raise ModelError("no blocks to model")
    T = blocks[0].hours
    if T < 1 or any(b.hours != T for b in blocks):
        raise ModelError("blocks must be non-empty and equally long")
    if scope.soc_boundary not in SOC_BOUNDARIES:
        raise ModelError(f"soc_boundary must be one of {SOC_BOUNDARIES}")
    nB = len(blocks)
    fs = scope.fixed_cost_scale
    b = ProgramBuilder()
    index: dict[str, np.ndarray] = {}
    ire, sto, the = catalog.ire, catalog.storage, catalog.thermal

    index["y_IRE"] = b.add_vars([f"y_IRE({t.id})" for t in ire], cost=[t.capex * fs for t in ire])
    index["y_ENE"] = b.add_vars([f"y_ENE({s.id})" for s in sto], cost=[s.energy_capex * fs for s in sto])
    index["y_POW"] = b.add_vars([f"y_POW({s.id})" for s in sto], cost=[s.power_capex * fs for s in sto])
    index["y_THE"] = b.add_vars(
        [f"y_THE({j.id})" for j in the],
        lower=[j.unit_size for j in the], upper=[j.unit_size for j in the],
        cost=[j.capex * j.n_units * fs for j in the], integer=True,
    )

    multi = nB > 1 or scope.kind == "reduced"

    def hour_names(prefix: str, tech: str | None, blk: int) -> list[str]:
        head = f"{prefix}({tech}," if tech is not None else f"{prefix}("
        if multi:
            return [f"{head}r{blk},{t})" for t in range(T)]
        off = blocks[blk].offset
        return [f"{head}{off + t})" for t in range(T)]

    def hourly(key, techs, cost_fn=lambda tech: 0.0, **kw):
        ids = np.empty((len(techs), nB, T), dtype=np.int64)
        for k, tech in enumerate(techs):
            for bi, blk in enumerate(blocks):
                ids[k, bi] = b.add_vars(hour_names(key, tech.id, bi), cost=blk.weight * cost_fn(tech), **kw)
        index[key] = ids

    hourly("x_DIS", sto, lambda s: s.deg_cost)
    hourly("x_CHA", sto, lambda s: s.deg_cost)
    hourly("E", sto)
    w = np.empty((nB, T), dtype=np.int64)
    for bi in range(nB):
        w[bi] = b.add_vars(hour_names("w", None, bi))
    index["w"] = w
    hourly("x_THE", the, lambda j: j.op_cost)
    for key in ("n", "n_UP", "n_DN"):
        cost_fn = (lambda j: j.updn_cost) if key != "n" else (lambda j: 0.0)
        ids = np.empty((len(the), nB, T), dtype=np.int64)
        for k, j in enumerate(the):
            for bi, blk in enumerate(blocks):
                ids[k, bi] = b.add_vars(
                    hour_names(key, j.id, bi), upper=j.n_units, cost=blk.weight * cost_fn(j), integer=True
                )
        index[key] = ids

    t_idx = np.arange(T)
    for bi, blk in enumerate(blocks):
        tag = f"r{bi}," if multi else ""
        hours = [f"{tag}{blk.offset + t}" if not multi else f"{tag}{t}" for t in range(T)]

        # energy balance
        terms = [(blk.avail[k], index["y_IRE"][k]) for k in range(len(ire))]
        terms.append((-1.0, w[bi]))
        terms += [(1.0, index["x_THE"][k, bi]) for k in range(len(the))]
        for k in range(len(sto)):
            terms += [(1.0, index["x_DIS"][k, bi]), (-1.0, index["x_CHA"][k, bi])]
        b.add_rows([f"balance({h})" for h in hours], terms, "=", blk.load)

        for k, s in enumerate(sto):
            E = index["E"][k, bi]
            prev_coef = np.full(T, -1.0)
            if scope.soc_boundary == "empty":
                prev_coef[0] = 0.0
            b.add_rows(
                [f"soc({s.id},{h})" for h in hours],
                [(1.0, E), (prev_coef, np.roll(E, 1)),
                 (-s.efficiency, index["x_CHA"][k, bi]), (1.0 / s.efficiency, index["x_DIS"][k, bi])],
                "=", 0.0,
            )
            b.add_rows([f"energy_cap({s.id},{h})" for h in hours], [(1.0, E), (-1.0, index["y_ENE"][k])], "<", 0.0)
            for key, nm in (("x_DIS", "dis_cap"), ("x_CHA", "cha_cap")):
                b.add_rows([f"{nm}({s.id},{h})" for h in hours],
                           [(1.0, index[key][k, bi]), (-1.0, index["y_POW"][k])], "<", 0.0)

        for k, j in enumerate(the):
            x, n = index["x_THE"][k, bi], index["n"][k, bi]
            up, dn = index["n_UP"][k, bi], index["n_DN"][k, bi]
            b.add_rows([f"the_min({j.id},{h})" for h in hours], [(1.0, x), (-j.xi_min * j.unit_size, n)], ">", 0.0)
            b.add_rows([f"the_max({j.id},{h})" for h in hours], [(1.0, x), (-j.xi_max * j.unit_size, n)], "<", 0.0)
            if T > 1:
                b.add_rows(
                    [f"commit({j.id},{h})" for h in hours[1:]],
                    [(1.0, n[1:]), (-1.0, n[:-1]), (-1.0, up[1:]), (1.0, dn[1:])], "=", 0.0,
                )
            # windows t - tau .. t, truncated at the block start
            up_terms = [(1.0, n)]
            for lag in range(j.min_up + 1):
                up_terms.append((np.where(t_idx >= lag, -1.0, 0.0), up[np.maximum(t_idx - lag, 0)]))
            b.add_rows([f"min_up({j.id},{h})" for h in hours], up_terms, ">", 0.0)
            dn_terms = [(1.0, n)]
            for lag in range(j.min_down + 1):
                dn_terms.append((np.where(t_idx >= lag, 1.0, 0.0), dn[np.maximum(t_idx - lag, 0)]))
            b.add_rows([f"min_down({j.id},{h})" for h in hours], dn_terms, "<", float(j.n_units))

    rps_row = None
    if the and apply_rps:
        ids = index["x_THE"].reshape(len(the), nB, T)
        coefs = {}
        for bi, blk in enumerate(blocks):
            for k in range(len(the)):
                for v in ids[k, bi]:
                    coefs[int(v)] = blk.weight
        demand = sum(blk.weight * float(blk.load.sum()) for blk in blocks)
        rps_row = b.add_row("rps", coefs, "<", (1.0 - policy.rps) * demand)

    lp = b.build()
    return EsomInstance(
        names=lp.names, cost=lp.cost, lower=lp.lower, upper=lp.upper, integer=lp.integer,
        matrix=lp.matrix, sense=lp.sense, rhs=lp.rhs, row_names=lp.row_names,
        scope=scope, index=index, catalog=catalog, policy=policy, variant=variant,
        blocks=tuple(blocks), rps_row=rps_row,
    )


def build_full(
    data: HorizonData, catalog: TechCatalog, policy: Policy, variant: str, soc_boundary: str = "cyclic"
) -> EsomInstance:
    _check_variant(catalog, variant)
    block = _block(data, catalog, label="full")
    return compile_blocks([block], catalog, policy, variant, Scope("full", soc_boundary=soc_boundary))


def build_slice(
    data: HorizonData,
    time_slice: TimeSlice,
    catalog: TechCatalog,
    policy: Policy,
    variant: str,
    horizon_hours: int | None = None,
) -> EsomInstance:
    """Model one slice alone with cyclic storage and no commitment history.

    Fixed costs are multiplied by ``slice length / horizon_hours`` where the
    horizon defaults to the whole slices contained in ``data``.
    """
    _check_variant(catalog, variant)
    if time_slice.stop > data.hours:
        raise ModelError(f"slice {time_slice.index} extends past the horizon")
    if horizon_hours is None:
        horizon_hours = (data.hours // time_slice.length) * time_slice.length
    block = _block(time_slice.view(data), catalog, label=f"slice{time_slice.index}",
                   offset=time_slice.offset, slice_index=time_slice.index)
    scope = Scope("slice", slice_index=time_slice.index, fixed_cost_scale=time_slice.length / horizon_hours)
    return compile_blocks([block], catalog, policy, variant, scope, apply_rps=policy.slice_rps)


def build_reduced(
    data: HorizonData, aggregation, catalog: TechCatalog, policy: Policy, variant: str
) -> EsomInstance:
    """Model the weighted representatives of ``aggregation``.

    Variable costs and the renewable-share totals of each representative are
    multiplied by its weight; fixed costs are charged once, unscaled.
    """
    _check_variant(catalog, variant)
    weights = [int(w) for w in aggregation.weights]
    if any(w < 1 for w in weights):
        raise ConsistencyError("representative weights must be positive integers")
    expected = data.hours // aggregation.slice_length
    if sum(weights) != aggregation.slice_count or aggregation.slice_count != expected:
        raise ConsistencyError(
            f"weights sum to {sum(weights)}, aggregation covers {aggregation.slice_count} slices, "
            f"data holds {expected}"
        )
    blocks = []
    for k, (rep, w) in enumerate(zip(aggregation.representative_data(data), weights)):
        idx = aggregation.representatives[k]
        blocks.append(_block(rep, catalog, weight=float(w), label=f"rep{k}",
                             slice_index=None if idx is None else int(idx)))
    scope = Scope("reduced", weights=tuple(weights))
    return compile_blocks(blocks, catalog, policy, variant, scope)


# ---------------------------------------------------------------------- solution


@dataclass
class PlanSolution:
    status: Status
    objective: float
    capacities: dict[str, float]
    cost_breakdown: dict[str, float]
    dispatch: dict[str, np.ndarray] = field(repr=False, default_factory=dict)
    scope: str = "full"
    solve_time: float = 0.0
    backend: str = ""

    def capacity_vector(self, names: list[str] | None = None) -> np.ndarray:
        names = list(self.capacities) if names is None else names
        return np.array([self.capacities[n] for n in names], dtype=float)

    def to_dict(self, include_dispatch: bool = False) -> dict[str, Any]:
        d = {
            "status": self.status.value,
            "scope": self.scope,
            "objective": self.objective,
            "capacities": dict(self.capacities),
            "cost_breakdown": dict(self.cost_breakdown),
            "backend": self.backend,
        }
        if include_dispatch:
            d["dispatch"] = {k: np.asarray(v).tolist() for k, v in self.dispatch.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PlanSolution":
        return cls(
            status=Status(d["status"]),
            objective=float(d["objective"]),
            capacities={k: float(v) for k, v in d["capacities"].items()},
            cost_breakdown={k: float(v) for k, v in d["cost_breakdown"].items()},
            dispatch={k: np.asarray(v, dtype=float) for k, v in d.get("dispatch", {}).items()},
            scope=d.get("scope", "full"),
            backend=d.get("backend", ""),
        )


def _weights(inst: EsomInstance) -> np.ndarray:
    return np.array([blk.weight for blk in inst.blocks], dtype=float)


def cost_breakdown(inst: EsomInstance, x: np.ndarray) -> dict[str, float]:
    """Recompute every cost term from primal values and catalog prices."""
    x = np.asarray(x, dtype=float)
    cat, idx, fs = inst.catalog, inst.index, inst.scope.fixed_cost_scale
    wts = _weights(inst)
    c_deg = sum(
        s.deg_cost * float(wts @ (x[idx["x_DIS"][k]] + x[idx["x_CHA"][k]]).sum(axis=1))
        for k, s in enumerate(cat.storage)
    )
    c_op = sum(j.op_cost * float(wts @ x[idx["x_THE"][k]].sum(axis=1)) for k, j in enumerate(cat.thermal))
    c_updn = sum(
        j.updn_cost * float(wts @ (x[idx["n_UP"][k]] + x[idx["n_DN"][k]]).sum(axis=1))
        for k, j in enumerate(cat.thermal)
    )
    c_fix = fs * (
        sum(s.energy_capex * x[idx["y_ENE"][k]] + s.power_capex * x[idx["y_POW"][k]]
            for k, s in enumerate(cat.storage))
        + sum(t.capex * x[idx["y_IRE"][k]] for k, t in enumerate(cat.ire))
        + sum(j.capex * x[idx["y_THE"][k]] * j.n_units for k, j in enumerate(cat.thermal))
    )
    c_var = c_deg + c_op + c_updn
    return {
        "C_DEG": float(c_deg), "C_OP": float(c_op), "C_UpDn": float(c_updn),
        "C_VAR": float(c_var), "C_FIX": float(c_fix), "total": float(c_var + c_fix),
    }


def capacities(inst: EsomInstance, x: np.ndarray) -> dict[str, float]:
    idx = inst.index
    vals = [x[i] for i in idx["y_IRE"]]
    for k in range(len(inst.catalog.storage)):
        vals += [x[idx["y_ENE"][k]], x[idx["y_POW"][k]]]
    vals += [x[i] for i in idx["y_THE"]]
    return {n: float(v) for n, v in zip(inst.catalog.capacity_names(), vals)}


def extract_costs(inst: EsomInstance, outcome: SolveOutcome, rel_tol: float = 1e-6) -> PlanSolution:
    if not outcome.status.has_solution:
        raise SolveFailed(outcome.status, outcome.message)
    x = np.asarray(outcome.x, dtype=float)
    costs = cost_breakdown(inst, x)
    if outcome.objective is not None:
        if abs(costs["total"] - outcome.objective) > rel_tol * max(1.0, abs(outcome.objective)):
            raise InternalConsistencyError(
                f"recomputed cost {costs['total']!r} differs from solver objective {outcome.objective!r}"
            )
    dispatch = {k: x[v] for k, v in inst.index.items() if v.ndim > 1}
    return PlanSolution(
        status=outcome.status, objective=costs["total"], capacities=capacities(inst, x),
        cost_breakdown=costs, dispatch=dispatch, scope=inst.scope.kind,
        solve_time=outcome.wall_time, backend=outcome.backend,
    )


def solve_instance(
    inst: EsomInstance,
    backend: str = "auto",
    tolerances: solver.Tolerances | None = None,
    limits: solver.Limits | None = None,
) -> tuple[PlanSolution, SolveOutcome]:
    request = SolveRequest(inst, tolerances or solver.Tolerances(), limits or solver.Limits(), backend)
    outcome = solver.solve(request)
    return extract_costs(inst, outcome), outcome


# ------------------------------------------------------------------------- audit


def audit(inst: EsomInstance, x, tol: float = 1e-6) -> list[str]:
    """Check a point against the model equations written out directly.

    Works from the blocks and the semantic index only (not the constraint
    matrix), so it is an independent check on the compiler.
    """
    x = np.asarray(x, dtype=float)
    idx, cat = inst.index, inst.catalog
    found: list[str] = []
    y_ire = x[idx["y_IRE"]]
    for name in ("y_IRE", "y_ENE", "y_POW", "x_DIS", "x_CHA", "E", "w", "x_THE"):
        v = x[idx[name]]
        if v.size and v.min() < -tol:
            found.append(f"{name} negative: {v.min()!r}")
    rps_num = rps_den = 0.0
    for bi, blk in enumerate(inst.blocks):
        T = blk.hours
        supply = y_ire @ blk.avail - x[idx["w"][bi]]
        for k in range(len(cat.thermal)):
            supply = supply + x[idx["x_THE"][k, bi]]
        for k in range(len(cat.storage)):
            supply = supply + x[idx["x_DIS"][k, bi]] - x[idx["x_CHA"][k, bi]]
        resid = np.abs(supply - blk.load)
        bad = resid > tol * np.maximum(1.0, blk.load)
        if bad.any():
            found.append(f"block {bi}: energy balance residual {resid.max():.3g} at hour {int(np.argmax(resid))}")
        for k, s in enumerate(cat.storage):
            E = x[idx["E"][k, bi]]
            cha, dis = x[idx["x_CHA"][k, bi]], x[idx["x_DIS"][k, bi]]
            prev = np.roll(E, 1)
            if inst.scope.soc_boundary == "empty":
                prev[0] = 0.0
            r = np.abs(E - prev - s.efficiency * cha + dis / s.efficiency)
            if np.any(r > tol * (1.0 + np.abs(E) + cha + dis)):
                found.append(f"block {bi}: SOC recursion residual {r.max():.3g} for {s.id}")
            y_ene, y_pow = x[idx["y_ENE"][k]], x[idx["y_POW"][k]]
            if E.max() > y_ene + tol * (1 + y_ene):
                found.append(f"block {bi}: SOC above energy capacity for {s.id}")
            if max(cha.max(), dis.max()) > y_pow + tol * (1 + y_pow):
                found.append(f"block {bi}: storage power above capacity for {s.id}")
        for k, j in enumerate(cat.thermal):
            n = x[idx["n"][k, bi]]
            up, dn = x[idx["n_UP"][k, bi]], x[idx["n_DN"][k, bi]]
            gen = x[idx["x_THE"][k, bi]]
            size = x[idx["y_THE"][k]]
            for name, v in (("n", n), ("n_UP", up), ("n_DN", dn)):
                if np.any(v != np.round(v)) or v.min() < 0 or v.max() > j.n_units:
                    found.append(f"block {bi}: {name} for {j.id} not an integer in [0, {j.n_units}]")
            if size != np.round(size):
                found.append(f"y_THE for {j.id} not integral")
            if T > 1 and np.any(n[1:] - n[:-1] != up[1:] - dn[1:]):
                found.append(f"block {bi}: commitment flow broken for {j.id}")
            if np.any(gen < j.xi_min * size * n - tol * (1 + gen)) or np.any(gen > j.xi_max * size * n + tol * (1 + gen)):
                found.append(f"block {bi}: thermal output outside its commitment window for {j.id}")
            for t in range(T):
                ups = up[max(0, t - j.min_up): t + 1].sum()
                dns = dn[max(0, t - j.min_down): t + 1].sum()
                if n[t] < ups or j.n_units - n[t] < dns:
                    found.append(f"block {bi}: min up/down violated for {j.id} at hour {t}")
                    break
            rps_num += blk.weight * gen.sum()
        rps_den += blk.weight * blk.load.sum()
    if cat.thermal and inst.rps_row is not None and rps_den > 0:
        if rps_num / rps_den > 1.0 - inst.policy.rps + 1e-9:
            found.append(f"renewable share violated: thermal fraction {rps_num / rps_den:.6g}")
    return found
