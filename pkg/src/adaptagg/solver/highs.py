"""Adapter that runs a :class:`LinearProgram` through SciPy's HiGHS bindings."""
from __future__ import annotations

import time

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .program import LinearProgram, Limits, SolveOutcome, Status, Tolerances


def _row_bounds(lp: LinearProgram) -> tuple[np.ndarray, np.ndarray]:
    lo = np.where(lp.sense == "<", -np.inf, lp.rhs)
    hi = np.where(lp.sense == ">", np.inf, lp.rhs)
    return lo, hi


def solve(
    lp: LinearProgram,
    tolerances: Tolerances = Tolerances(),
    limits: Limits = Limits(),
    relax: bool = False,
) -> SolveOutcome:
    t0 = time.perf_counter()
    integrality = np.zeros(lp.num_vars) if relax else lp.integer.astype(float)
    constraints = []
    if lp.num_rows:
        lo, hi = _row_bounds(lp)
        constraints.append(LinearConstraint(lp.matrix, lo, hi))
    options = {
        "disp": False,
        "presolve": True,
        "time_limit": float(limits.time_limit),
        "mip_rel_gap": float(tolerances.mip_gap),
        "node_limit": int(limits.max_nodes),
    }
    res = milp(
        lp.cost, integrality=integrality, bounds=Bounds(lp.lower, lp.upper),
        constraints=constraints, options=options,
    )
    elapsed = time.perf_counter() - t0
    x = None if res.x is None else np.asarray(res.x, dtype=float)
    gap = getattr(res, "mip_gap", None)
    bound = getattr(res, "mip_dual_bound", None)
    if res.status == 0:
        status = Status.OPTIMAL
    elif res.status == 1:
        status = Status.FEASIBLE if x is not None else Status.LIMIT
    elif res.status == 2:
        status = Status.INFEASIBLE
    elif res.status == 3:
        status = Status.UNBOUNDED
    else:
        status = Status.LIMIT
    if not status.has_solution:
        x = None
    if x is not None and integrality.any():
        ints = integrality.astype(bool)
        x[ints] = np.round(x[ints])
    return SolveOutcome(
        status, x=x, objective=None if x is None else lp.objective(x),
        gap=None if gap is None or not integrality.any() else float(gap),
        bound=None if bound is None else float(bound),
        wall_time=elapsed, backend="highs", message=str(res.message),
    )
