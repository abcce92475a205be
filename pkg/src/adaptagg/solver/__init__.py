"""LP/MILP solving behind one request/outcome interface.

Two backends ship with the package:

``reference``
    Dense two-phase simplex plus best-bound branch-and-bound, written here.
    Exact enough for oracle tests, practical up to a few hundred rows.
``highs``
    SciPy's HiGHS bindings, used for full-horizon and per-week models.

``auto`` picks ``reference`` for small problems and ``highs`` otherwise.
Other engines can be plugged in with :func:`register_backend` (any object
with ``solve_lp`` and ``solve_milp`` taking ``(lp, tolerances, limits)``)
or fed the file written by :func:`export_lp_file`.
"""
from __future__ import annotations

from typing import Protocol

from . import bnb, highs, simplex
from .lpfile import export_lp_file, parse_lp_file, read_lp_file, write_lp
from .program import (
    Constraint,
    LinearProgram,
    Limits,
    ProgramBuilder,
    SolveOutcome,
    SolveRequest,
    SolverError,
    Status,
    Tolerances,
)
from .verify import violations

AUTO_MAX_VARS = 300
AUTO_MAX_ROWS = 300
AUTO_MAX_INTEGERS = 30


class Backend(Protocol):
    def solve_lp(self, lp: LinearProgram, tolerances: Tolerances, limits: Limits) -> SolveOutcome: ...

    def solve_milp(self, lp: LinearProgram, tolerances: Tolerances, limits: Limits) -> SolveOutcome: ...


class ReferenceBackend:
    def solve_lp(self, lp, tolerances, limits):
        return simplex.solve(lp, tolerances, limits)

    def solve_milp(self, lp, tolerances, limits):
        return bnb.solve(lp, tolerances, limits)


class HighsBackend:
    def solve_lp(self, lp, tolerances, limits):
        return highs.solve(lp, tolerances, limits, relax=True)

    def solve_milp(self, lp, tolerances, limits):
        return highs.solve(lp, tolerances, limits)


_BACKENDS: dict[str, Backend] = {"reference": ReferenceBackend(), "highs": HighsBackend()}


def register_backend(name: str, backend: Backend) -> None:
    _BACKENDS[name] = backend


def backend_names() -> list[str]:
    return ["auto", *_BACKENDS]


def _resolve(request: SolveRequest, mip: bool) -> Backend:
    name = request.backend
    if name == "auto":
        lp = request.instance
        small = lp.num_vars <= AUTO_MAX_VARS and lp.num_rows <= AUTO_MAX_ROWS
        if mip:
            small = small and int(lp.integer.sum()) <= AUTO_MAX_INTEGERS
        name = "reference" if small else "highs"
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown solver backend {name!r}; choose from {backend_names()}") from None


def _checked(request: SolveRequest, out: SolveOutcome, mip: bool) -> SolveOutcome:
    if out.status.has_solution:
        tol = request.tolerances
        problems = violations(
            request.instance if mip else request.instance.relaxed(), out.x,
            feas_tol=max(10 * tol.feasibility, 1e-6), int_tol=tol.integrality,
        )
        if problems:
            raise SolverError(
                f"{out.backend} returned an infeasible point ({len(problems)} violations), "
                f"first: {problems[0]}"
            )
    return out


def solve_lp(request: SolveRequest) -> SolveOutcome:
    """Solve the continuous relaxation of ``request.instance``."""
    if request.instance.is_mip and not request.relax:
        raise ValueError("instance has integer variables; use solve_milp or set relax=True")
    out = _resolve(request, mip=False).solve_lp(request.instance, request.tolerances, request.limits)
    return _checked(request, out, mip=False)


def solve_milp(request: SolveRequest) -> SolveOutcome:
    out = _resolve(request, mip=True).solve_milp(request.instance, request.tolerances, request.limits)
    return _checked(request, out, mip=True)


def solve(request: SolveRequest) -> SolveOutcome:
    """Dispatch to :func:`solve_milp` or :func:`solve_lp` by integrality."""
    if request.instance.is_mip and not request.relax:
        return solve_milp(request)
    return solve_lp(request)


__all__ = [
    "Backend", "Constraint", "HighsBackend", "LinearProgram", "Limits", "ProgramBuilder",
    "ReferenceBackend", "SolveOutcome", "SolveRequest", "SolverError", "Status", "Tolerances",
    "backend_names", "export_lp_file", "parse_lp_file", "read_lp_file", "register_backend",
    "solve", "solve_lp", "solve_milp", "violations", "write_lp",
]
