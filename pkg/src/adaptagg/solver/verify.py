"""Feasibility audit of a candidate point, written without any solver code."""
from __future__ import annotations

import math

from .program import LinearProgram


def violations(lp: LinearProgram, x, feas_tol: float = 1e-6, int_tol: float = 1e-6) -> list[str]:
    """List every bound, row or integrality violation of ``x``.

    Row tolerances are relative to the row's activity scale
    ``1 + |rhs| + sum |a_j x_j|``; plain Python arithmetic is used on purpose.
    """
    x = [float(v) for v in x]
    found = []
    if len(x) != lp.num_vars:
        return [f"point has {len(x)} entries, expected {lp.num_vars}"]
    for j, v in enumerate(x):
        lo, hi = float(lp.lower[j]), float(lp.upper[j])
        scale = 1.0 + abs(v)
        if v < lo - feas_tol * scale or v > hi + feas_tol * scale or math.isnan(v):
            found.append(f"{lp.names[j]}={v!r} outside [{lo}, {hi}]")
        if lp.integer[j] and abs(v - round(v)) > int_tol:
            found.append(f"{lp.names[j]}={v!r} not integral")
    for con in lp.constraints():
        activity = 0.0
        magnitude = abs(con.rhs)
        for j, a in con.terms.items():
            activity += a * x[j]
            magnitude += abs(a * x[j])
        slack = feas_tol * (1.0 + magnitude)
        bad = (
            (con.sense == "<" and activity > con.rhs + slack)
            or (con.sense == ">" and activity < con.rhs - slack)
            or (con.sense == "=" and abs(activity - con.rhs) > slack)
        )
        if bad:
            found.append(f"{con.name}: {activity!r} {con.sense} {con.rhs!r}")
    return found
