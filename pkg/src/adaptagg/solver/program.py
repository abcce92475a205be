"""Solver-independent linear program representation and request/outcome types."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np
import scipy.sparse as sp

INF = float("inf")
SENSES = ("<", "=", ">")


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    FEASIBLE = "feasible-within-gap"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    LIMIT = "limit-reached"

    @property
    def has_solution(self) -> bool:
        return self in (Status.OPTIMAL, Status.FEASIBLE)


class SolverError(RuntimeError):
    pass


class Constraint(NamedTuple):
    name: str
    terms: dict[int, float]
    sense: str
    rhs: float


@dataclass
class LinearProgram:
    """``min cost @ x`` subject to ``matrix @ x (sense) rhs`` and bounds.

    ``sense`` holds one of ``'<'``, ``'='``, ``'>'`` per row. Variables flagged
    in ``integer`` must take integral values.
    """

    names: list[str]
    cost: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    integer: np.ndarray
    matrix: sp.csr_matrix
    sense: np.ndarray
    rhs: np.ndarray
    row_names: list[str]

    def __post_init__(self):
        n = len(self.names)
        self.cost = np.asarray(self.cost, dtype=float).reshape(n)
        self.lower = np.asarray(self.lower, dtype=float).reshape(n)
        self.upper = np.asarray(self.upper, dtype=float).reshape(n)
        self.integer = np.asarray(self.integer, dtype=bool).reshape(n)
        self.matrix = sp.csr_matrix(self.matrix, dtype=float)
        if self.matrix.shape[0] == 0:
            self.matrix = sp.csr_matrix((0, n))
        self.sense = np.asarray(self.sense, dtype="<U1").reshape(-1)
        self.rhs = np.asarray(self.rhs, dtype=float).reshape(-1)
        m = self.sense.size
        if self.matrix.shape != (m, n) or self.rhs.size != m or len(self.row_names) != m:
            raise ValueError(
                f"inconsistent shapes: matrix {self.matrix.shape}, {m} senses, "
                f"{self.rhs.size} rhs, {len(self.row_names)} row names, {n} variables"
            )
        if m and not np.isin(self.sense, SENSES).all():
            raise ValueError("sense entries must be '<', '=' or '>'")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def num_vars(self) -> int:
        return len(self.names)

    @property
    def num_rows(self) -> int:
        return self.sense.size

    @property
    def is_mip(self) -> bool:
        return bool(self.integer.any())

    def constraints(self) -> Iterator[Constraint]:
        A = self.matrix
        for r in range(self.num_rows):
            lo, hi = A.indptr[r], A.indptr[r + 1]
            terms = {int(j): float(v) for j, v in zip(A.indices[lo:hi], A.data[lo:hi])}
            yield Constraint(self.row_names[r], terms, str(self.sense[r]), float(self.rhs[r]))

    def relaxed(self) -> "LinearProgram":
        return self.with_bounds(self.lower, self.upper, integer=np.zeros(self.num_vars, bool))

    def with_bounds(self, lower, upper, integer=None) -> "LinearProgram":
        return LinearProgram(
            names=self.names, cost=self.cost, lower=lower, upper=upper,
            integer=self.integer if integer is None else integer,
            matrix=self.matrix, sense=self.sense, rhs=self.rhs, row_names=self.row_names,
        )

    def objective(self, x) -> float:
        return float(self.cost @ np.asarray(x, dtype=float))


class ProgramBuilder:
    """Accumulates variables and sparse rows, then emits a :class:`LinearProgram`."""

    def __init__(self):
        self.names: list[str] = []
        self._cost: list[np.ndarray] = []
        self._lower: list[np.ndarray] = []
        self._upper: list[np.ndarray] = []
        self._integer: list[np.ndarray] = []
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []
        self._sense: list[np.ndarray] = []
        self._rhs: list[np.ndarray] = []
        self.row_names: list[str] = []

    @property
    def num_vars(self) -> int:
        return len(self.names)

    @property
    def num_rows(self) -> int:
        return len(self.row_names)

    def add_vars(self, names, lower=0.0, upper=INF, cost=0.0, integer=False) -> np.ndarray:
        names = list(names)
        k = len(names)
        start = self.num_vars
        self.names.extend(names)
        self._cost.append(np.broadcast_to(np.asarray(cost, float), (k,)).copy())
        self._lower.append(np.broadcast_to(np.asarray(lower, float), (k,)).copy())
        self._upper.append(np.broadcast_to(np.asarray(upper, float), (k,)).copy())
        self._integer.append(np.full(k, bool(integer)))
        return np.arange(start, start + k)

    def add_var(self, name, lower=0.0, upper=INF, cost=0.0, integer=False) -> int:
        return int(self.add_vars([name], lower, upper, cost, integer)[0])

    def add_cost(self, ids, values) -> None:
        """Add to the cost of already declared variables (vectorised)."""
        ids = np.asarray(ids).ravel()
        values = np.broadcast_to(np.asarray(values, float), ids.shape)
        cost = self._flat_cost()
        np.add.at(cost, ids, values)
        self._cost = [cost]

    def _flat_cost(self) -> np.ndarray:
        return np.concatenate(self._cost) if self._cost else np.zeros(0)

    def add_rows(self, names, terms, sense, rhs) -> np.ndarray:
        """Add ``len(names)`` rows.

        ``terms`` is a list of ``(coef, ids)`` pairs; each ``ids`` array has one
        entry per new row (or is a scalar id shared by every row) and ``coef``
        broadcasts the same way.
        """
        names = list(names)
        k = len(names)
        start = self.num_rows
        local = np.arange(k)
        for coef, ids in terms:
            ids = np.broadcast_to(np.asarray(ids), (k,))
            coef = np.broadcast_to(np.asarray(coef, float), (k,))
            keep = coef != 0
            self._rows.append(start + local[keep])
            self._cols.append(ids[keep].astype(np.int64))
            self._vals.append(coef[keep])
        self._sense.append(np.broadcast_to(np.asarray(sense, "<U1"), (k,)).copy())
        self._rhs.append(np.broadcast_to(np.asarray(rhs, float), (k,)).copy())
        self.row_names.extend(names)
        return np.arange(start, start + k)

    def add_row(self, name, coefs: dict[int, float] | list[tuple[int, float]], sense, rhs) -> int:
        items = coefs.items() if isinstance(coefs, dict) else coefs
        row = self.num_rows
        ids = np.array([i for i, _ in items], dtype=np.int64)
        vals = np.array([v for _, v in items], dtype=float)
        keep = vals != 0
        self._rows.append(np.full(int(keep.sum()), row))
        self._cols.append(ids[keep])
        self._vals.append(vals[keep])
        self._sense.append(np.array([sense], "<U1"))
        self._rhs.append(np.array([rhs], float))
        self.row_names.append(name)
        return row

    def build(self) -> LinearProgram:
        n, m = self.num_vars, self.num_rows
        cat = lambda parts, dtype: np.concatenate(parts) if parts else np.zeros(0, dtype)
        rows, cols, vals = cat(self._rows, np.int64), cat(self._cols, np.int64), cat(self._vals, float)
        if cols.size and (cols.min() < 0 or cols.max() >= n):
            raise ValueError("constraint references an undeclared variable")
        matrix = sp.coo_matrix((vals, (rows, cols)), shape=(m, n)).tocsr()
        matrix.sum_duplicates()
        return LinearProgram(
            names=list(self.names),
            cost=self._flat_cost(),
            lower=cat(self._lower, float),
            upper=cat(self._upper, float),
            integer=cat(self._integer, bool),
            matrix=matrix,
            sense=cat(self._sense, "<U1"),
            rhs=cat(self._rhs, float),
            row_names=list(self.row_names),
        )


@dataclass(frozen=True)
class Tolerances:
    feasibility: float = 1e-7
    optimality: float = 1e-7
    integrality: float = 1e-6
    mip_gap: float = 1e-4

    def __post_init__(self):
        for name in ("feasibility", "optimality", "integrality", "mip_gap"):
            if not getattr(self, name) > 0:
                raise ValueError(f"tolerance {name} must be positive")


@dataclass(frozen=True)
class Limits:
    max_iterations: int = 200_000
    max_nodes: int = 100_000
    time_limit: float = 3600.0

    def __post_init__(self):
        if self.max_iterations < 1 or self.max_nodes < 1 or not self.time_limit >= 1e-3:
            raise ValueError("solver limits must be positive")


@dataclass
class SolveRequest:
    instance: LinearProgram
    tolerances: Tolerances = field(default_factory=Tolerances)
    limits: Limits = field(default_factory=Limits)
    backend: str = "auto"
    relax: bool = False


@dataclass
class SolveOutcome:
    status: Status
    x: np.ndarray | None = None
    objective: float | None = None
    gap: float | None = None
    bound: float | None = None
    iterations: int = 0
    nodes: int = 0
    branched: int = 0
    wall_time: float = 0.0
    backend: str = ""
    dual_objective: float | None = None
    duals: np.ndarray | None = None
    message: str = ""

    def __post_init__(self):
        self.status = Status(self.status)
        if self.status.has_solution != (self.x is not None):
            raise ValueError(f"status {self.status.value} inconsistent with primal presence")
