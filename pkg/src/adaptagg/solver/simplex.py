"""Reference two-phase primal simplex on a dense tableau.

Meant for desk-scale problems (up to a few thousand columns). Pricing is
Dantzig's most-negative reduced cost; after a run of degenerate pivots the
solver switches permanently to Bland's rule, which cannot cycle.
"""
from __future__ import annotations

import time

import numpy as np

from .program import LinearProgram, Limits, SolveOutcome, Status, Tolerances

PIVOT_TOL = 1e-9
DEGENERATE_RUN = 50


class _StandardForm:
    """``min c @ z  s.t.  A z = b, z >= 0`` plus the map back to ``x``.

    ``x = offset + sum_k sign[k] * z[k] * e_{orig[k]}`` over structural columns.
    """

    def __init__(self, lp: LinearProgram, lower: np.ndarray, upper: np.ndarray):
        n, m = lp.num_vars, lp.num_rows
        dense = lp.matrix.toarray() if m else np.zeros((0, n))
        orig, sign, bound_rows = [], [], []
        offset = np.zeros(n)
        for j in range(n):
            lb, ub = lower[j], upper[j]
            if np.isfinite(lb):
                offset[j] = lb
                orig.append(j)
                sign.append(1.0)
                if np.isfinite(ub):
                    bound_rows.append((len(orig) - 1, ub - lb))
            elif np.isfinite(ub):
                offset[j] = ub
                orig.append(j)
                sign.append(-1.0)
            else:
                orig += [j, j]
                sign += [1.0, -1.0]
        self.orig = np.array(orig, dtype=int)
        self.sign = np.array(sign)
        self.offset = offset
        self.n_struct = nz = len(orig)
        self.const = float(lp.cost @ offset)

        rows = m + len(bound_rows)
        Az = np.zeros((rows, nz))
        if m:
            Az[:m] = dense[:, self.orig] * self.sign
        b = np.empty(rows)
        b[:m] = lp.rhs - dense @ offset
        sense = list(lp.sense) + ["<"] * len(bound_rows)
        for r, (k, cap) in enumerate(bound_rows, start=m):
            Az[r, k] = 1.0
            b[r] = cap
        slack_rows = [r for r in range(rows) if sense[r] != "="]
        S = np.zeros((rows, len(slack_rows)))
        for k, r in enumerate(slack_rows):
            S[r, k] = 1.0 if sense[r] == "<" else -1.0
        A = np.hstack([Az, S])
        flip = b < 0
        A[flip] *= -1.0
        b[flip] *= -1.0
        self.A, self.b = A, b
        self.c = np.concatenate([lp.cost[self.orig] * self.sign, np.zeros(len(slack_rows))])
        self.flip = flip
        self.n_orig_rows = m
        # a slack with +1 coefficient can start in the basis
        self.start_basis = np.full(rows, -1)
        for k, r in enumerate(slack_rows):
            if A[r, nz + k] > 0:
                self.start_basis[r] = nz + k

    def to_x(self, z: np.ndarray) -> np.ndarray:
        x = self.offset.copy()
        np.add.at(x, self.orig, self.sign * z[: self.n_struct])
        return x


class _Tableau:
    def __init__(self, T: np.ndarray, basis: np.ndarray, tol: Tolerances, limits: Limits, t0: float):
        self.T = T
        self.basis = basis
        self.tol = tol
        self.limits = limits
        self.t0 = t0
        self.iterations = 0
        self.bland = False
        self._degenerate = 0

    def pivot(self, r: int, c: int) -> None:
        T = self.T
        T[r] /= T[r, c]
        col = T[:, c].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        T[:, c] = 0.0
        T[r, c] = 1.0
        self.basis[r] = c

    def run(self, n_allowed: int) -> Status | None:
        """Iterate to optimality over the first ``n_allowed`` columns.

        Returns ``None`` on optimality, otherwise a terminal status.
        """
        T, m = self.T, self.T.shape[0] - 1
        opt_tol = self.tol.optimality
        while True:
            d = T[m, :n_allowed]
            if self.bland:
                cand = np.flatnonzero(d < -opt_tol)
                if cand.size == 0:
                    return None
                c = int(cand[0])
            else:
                c = int(np.argmin(d))
                if d[c] >= -opt_tol:
                    return None
            if self.iterations >= self.limits.max_iterations:
                return Status.LIMIT
            if time.perf_counter() - self.t0 > self.limits.time_limit:
                return Status.LIMIT
            col = T[:m, c]
            ok = np.flatnonzero(col > PIVOT_TOL)
            if ok.size == 0:
                return Status.UNBOUNDED
            ratios = T[ok, -1] / col[ok]
            best = ratios.min()
            ties = ok[ratios <= best + 1e-12 * (1.0 + abs(best))]
            r = int(ties[np.argmin(self.basis[ties])])
            if best <= 1e-12:
                self._degenerate += 1
                if self._degenerate > DEGENERATE_RUN:
                    self.bland = True
            else:
                self._degenerate = 0
            self.pivot(r, c)
            rhs = T[:m, -1]
            rhs[(rhs < 0) & (rhs > -1e-11)] = 0.0
            self.iterations += 1


def solve(
    lp: LinearProgram,
    tolerances: Tolerances = Tolerances(),
    limits: Limits = Limits(),
    lower: np.ndarray | None = None,
    upper: np.ndarray | None = None,
) -> SolveOutcome:
    """Solve the LP relaxation of ``lp`` (integrality flags are ignored)."""
    t0 = time.perf_counter()
    lower = lp.lower if lower is None else lower
    upper = lp.upper if upper is None else upper
    if np.any(lower > upper):
        return SolveOutcome(Status.INFEASIBLE, backend="reference", message="crossed bounds")
    sf = _StandardForm(lp, lower, upper)
    A, b = sf.A, sf.b
    rows, ncols = A.shape
    need_art = np.flatnonzero(sf.start_basis < 0)
    n_art = need_art.size

    T = np.zeros((rows + 1, ncols + n_art + 1))
    T[:rows, :ncols] = A
    T[:rows, -1] = b
    basis = sf.start_basis.copy()
    for k, r in enumerate(need_art):
        T[r, ncols + k] = 1.0
        basis[r] = ncols + k
    # phase 1: minimise the sum of artificials
    T[rows, ncols:ncols + n_art] = 1.0
    for r in need_art:
        T[rows] -= T[r]
    tab = _Tableau(T, basis, tolerances, limits, t0)

    def done(status, message=""):
        return SolveOutcome(status, iterations=tab.iterations, wall_time=time.perf_counter() - t0,
                            backend="reference", message=message)

    if n_art:
        status = tab.run(ncols + n_art)
        if status is not None:
            return done(status)
        infeas = -tab.T[rows, -1]
        if infeas > 10 * tolerances.feasibility * max(1.0, np.abs(b).max(initial=0.0)):
            return done(Status.INFEASIBLE, f"phase 1 residual {infeas:.3g}")
        # drive zero-level artificials out of the basis; drop redundant rows
        keep = np.ones(rows, dtype=bool)
        for r in range(rows):
            if tab.basis[r] >= ncols:
                row = np.abs(tab.T[r, :ncols])
                c = int(np.argmax(row))
                if row[c] > PIVOT_TOL:
                    tab.pivot(r, c)
                else:
                    keep[r] = False
        T = np.vstack([tab.T[:rows][keep], tab.T[rows:]])
        T = np.delete(T, np.s_[ncols:ncols + n_art], axis=1)
        tab.T, tab.basis = T, tab.basis[keep]
        tab.bland, tab._degenerate = False, 0
        A, b = A[keep], b[keep]
        kept_rows = np.flatnonzero(keep)
    else:
        kept_rows = np.arange(rows)
    m = kept_rows.size

    # phase 2
    T = tab.T
    c = sf.c
    T[m, :ncols] = c - c[tab.basis] @ T[:m, :ncols]
    T[m, -1] = -c[tab.basis] @ T[:m, -1]
    status = tab.run(ncols)
    if status is not None:
        return done(status)

    z = np.zeros(ncols)
    z[tab.basis] = T[:m, -1]
    y = None
    if m:
        B = A[:, tab.basis]
        try:
            z_b = np.linalg.solve(B, b)
            if np.all(z_b >= -1e-9) and np.allclose(z_b, z[tab.basis], rtol=1e-6, atol=1e-7):
                z[tab.basis] = np.maximum(z_b, 0.0)
            y = np.linalg.solve(B.T, c[tab.basis])
        except np.linalg.LinAlgError:
            y = None
    x = sf.to_x(z)
    out = SolveOutcome(
        Status.OPTIMAL, x=x, objective=lp.objective(x), iterations=tab.iterations,
        wall_time=time.perf_counter() - t0, backend="reference", gap=0.0,
    )
    if y is not None:
        full_y = np.zeros(rows)
        full_y[kept_rows] = y
        out.dual_objective = float(b @ y + sf.const)
        row_duals = full_y[: sf.n_orig_rows]
        row_duals[sf.flip[: sf.n_orig_rows]] *= -1.0
        out.duals = row_duals
    out.bound = out.objective
    return out
