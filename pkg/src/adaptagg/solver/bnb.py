"""Best-bound branch-and-bound over the reference simplex."""
from __future__ import annotations

import heapq
import itertools
import math
import time

import numpy as np

from . import simplex
from .program import LinearProgram, Limits, SolveOutcome, Status, Tolerances


def _relative_gap(incumbent: float, bound: float) -> float:
    diff = incumbent - bound
    if diff <= 1e-9 * max(1.0, abs(incumbent)):
        return 0.0
    return diff / max(abs(incumbent), 1e-9)


def _most_fractional(x: np.ndarray, int_idx: np.ndarray, tol: float) -> int | None:
    vals = x[int_idx]
    frac = vals - np.floor(vals)
    dist = np.minimum(frac, 1.0 - frac)
    if dist.max(initial=0.0) <= tol:
        return None
    return int(int_idx[int(np.argmax(dist))])  # argmax keeps the lowest index on ties


def solve(lp: LinearProgram, tolerances: Tolerances = Tolerances(), limits: Limits = Limits()) -> SolveOutcome:
    t0 = time.perf_counter()
    int_idx = np.flatnonzero(lp.integer)
    lower = lp.lower.copy()
    upper = lp.upper.copy()
    lower[int_idx] = np.ceil(lower[int_idx] - tolerances.integrality)
    upper[int_idx] = np.floor(upper[int_idx] + tolerances.integrality)

    iterations = 0
    nodes = 0
    branched = 0

    def relax(lo, hi):
        nonlocal iterations, nodes
        remaining = limits.time_limit - (time.perf_counter() - t0)
        sub = Limits(max(1, limits.max_iterations - iterations), limits.max_nodes, max(remaining, 1e-3))
        out = simplex.solve(lp, tolerances, sub, lo, hi)
        iterations += out.iterations
        nodes += 1
        return out

    def finish(status, x=None, obj=None, bound=None, gap=None, message=""):
        return SolveOutcome(
            status, x=x, objective=obj, bound=bound, gap=gap, iterations=iterations,
            nodes=nodes, branched=branched, wall_time=time.perf_counter() - t0,
            backend="reference", message=message,
        )

    root = relax(lower, upper)
    if root.status is not Status.OPTIMAL:
        return finish(root.status, message="root relaxation " + root.status.value)
    root_bound = root.objective

    best_x, best_obj = None, math.inf
    counter = itertools.count()
    heap = [(root.objective, 0, next(counter), lower, upper, root.x)]
    limit_hit = False
    lost_bound = math.inf  # bound of subtrees abandoned after an LP limit
    while heap:
        bound = heap[0][0]
        if best_x is not None and _relative_gap(best_obj, bound) <= tolerances.mip_gap:
            break
        if nodes >= limits.max_nodes or time.perf_counter() - t0 > limits.time_limit:
            limit_hit = True
            break
        node_bound, neg_depth, _, lo, hi, x = heapq.heappop(heap)
        if node_bound >= best_obj:
            continue
        j = _most_fractional(x, int_idx, tolerances.integrality)
        if j is None:
            xr = x.copy()
            xr[int_idx] = np.round(xr[int_idx])
            obj = lp.objective(xr)
            if obj < best_obj:
                best_x, best_obj = xr, obj
            continue
        branched += 1
        v = x[j]
        for child_lo, child_hi in (
            (lo, np.where(np.arange(hi.size) == j, math.floor(v), hi)),
            (np.where(np.arange(lo.size) == j, math.ceil(v), lo), hi),
        ):
            out = relax(child_lo, child_hi)
            if out.status is Status.OPTIMAL and out.objective < best_obj:
                heapq.heappush(heap, (out.objective, neg_depth - 1, next(counter), child_lo, child_hi, out.x))
            elif out.status is Status.LIMIT:
                limit_hit = True
                lost_bound = min(lost_bound, node_bound)

    if best_x is None:
        if limit_hit:
            return finish(Status.LIMIT, bound=root_bound, message="no incumbent")
        return finish(Status.INFEASIBLE, bound=root_bound)
    bound = min([best_obj, lost_bound] + [h[0] for h in heap])
    bound = max(bound, root_bound)
    gap = _relative_gap(best_obj, bound)
    status = Status.OPTIMAL if gap <= tolerances.mip_gap else Status.FEASIBLE
    out = finish(status, best_x, best_obj, bound, gap)
    out.message = f"root bound {root_bound:.12g}"
    return out
