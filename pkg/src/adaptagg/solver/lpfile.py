"""CPLEX-style LP text format: writer and a reader for round-tripping.

Numbers are written with ``repr`` so a parse of the written file reproduces
every coefficient bit for bit. Every variable gets an explicit line in the
``Bounds`` section, which also fixes the variable order on re-read.
"""
from __future__ import annotations

import math
import re
from pathlib import Path
from typing import IO

import numpy as np

from .program import LinearProgram, ProgramBuilder

TERMS_PER_LINE = 6
_OPS = {"<": "<=", ">": ">=", "=": "="}
_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_(),.]*$")
_TOKEN_RE = re.compile(
    r"<=|>=|=<|=>|<|>|=|[+-]|(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?(?=\s|$)|[^\s<>=+-]+"
)
_SECTIONS = {
    "minimize": "obj", "minimum": "obj", "min": "obj",
    "maximize": "max", "maximum": "max", "max": "max",
    "subject to": "rows", "such that": "rows", "st": "rows", "s.t.": "rows",
    "bounds": "bounds", "bound": "bounds",
    "generals": "gen", "general": "gen", "gen": "gen", "integers": "gen",
    "binaries": "bin", "binary": "bin", "bin": "bin",
    "end": "end",
}


class LPFormatError(ValueError):
    pass


def _num(v: float) -> str:
    if math.isinf(v):
        return "+inf" if v > 0 else "-inf"
    return repr(float(v))


def _term(coef: float, name: str) -> str:
    return f"{'-' if coef < 0 else '+'} {_num(abs(coef))} {name}"


def _wrapped(label: str, terms: list[str], tail: str = "") -> list[str]:
    lines = []
    for k in range(0, max(len(terms), 1), TERMS_PER_LINE):
        chunk = " ".join(terms[k:k + TERMS_PER_LINE])
        lines.append((f" {label}: " if k == 0 else "   ") + chunk)
    if tail:
        lines[-1] += " " + tail
    return lines


def _bound_line(name: str, lo: float, hi: float) -> str:
    if math.isinf(lo) and lo < 0 and math.isinf(hi):
        return f" {name} free"
    if lo == hi:
        return f" {name} = {_num(lo)}"
    if math.isinf(hi):
        return f" {name} >= {_num(lo)}"
    return f" {_num(lo)} <= {name} <= {_num(hi)}"


def write_lp(lp: LinearProgram, fh: IO[str]) -> None:
    for name in list(lp.names) + list(lp.row_names):
        if not _NAME_RE.match(name):
            raise LPFormatError(f"name {name!r} is not valid in LP format")
    names = lp.names
    lines = ["Minimize"]
    obj = [_term(c, names[j]) for j, c in enumerate(lp.cost) if c != 0]
    if not obj and names:
        obj = [_term(0.0, names[0])]
    lines += _wrapped("obj", obj)
    lines.append("Subject To")
    for con in lp.constraints():
        terms = [_term(a, names[j]) for j, a in sorted(con.terms.items())]
        if not terms:
            terms = [_term(0.0, names[0])]
        lines += _wrapped(con.name, terms, f"{_OPS[con.sense]} {_num(con.rhs)}")
    lines.append("Bounds")
    lines += [_bound_line(n, lo, hi) for n, lo, hi in zip(names, lp.lower, lp.upper)]
    ints = [names[j] for j in np.flatnonzero(lp.integer)]
    if ints:
        lines.append("Generals")
        lines += [" " + " ".join(ints[k:k + 8]) for k in range(0, len(ints), 8)]
    lines.append("End")
    fh.write("\n".join(lines) + "\n")


def export_lp_file(lp: LinearProgram, path: str | Path) -> Path:
    path = Path(path)
    try:
        with path.open("w") as fh:
            write_lp(lp, fh)
    except OSError as exc:
        raise OSError(f"cannot write LP file {path}: {exc}") from exc
    return path


# ------------------------------------------------------------------------ reader


def _is_number(tok: str) -> bool:
    return tok[0].isdigit() or tok[0] == "." or tok.lower() in ("inf", "infinity")


def _to_float(tok: str) -> float:
    return float("inf") if tok.lower() in ("inf", "infinity") else float(tok)


def _split_sections(text: str) -> list[tuple[str, str]]:
    sections: list[tuple[str, list[str]]] = []
    for raw in text.splitlines():
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        key = _SECTIONS.get(" ".join(line.lower().split()))
        if key is not None:
            sections.append((key, []))
            continue
        if not sections:
            raise LPFormatError(f"content before first section: {line!r}")
        sections[-1][1].append(line)
    return [(k, "\n".join(body)) for k, body in sections]


def _parse_terms(tokens: list[str], pos: int, stop) -> tuple[list[tuple[str, float]], int]:
    terms = []
    while pos < len(tokens) and not stop(tokens[pos]):
        sign, coef = 1.0, 1.0
        while tokens[pos] in "+-":
            sign *= -1.0 if tokens[pos] == "-" else 1.0
            pos += 1
        if _is_number(tokens[pos]):
            coef = _to_float(tokens[pos])
            pos += 1
        terms.append((tokens[pos], sign * coef))
        pos += 1
    return terms, pos


def _signed_number(tokens: list[str]) -> float:
    sign = -1.0 if tokens[0] == "-" else 1.0
    return sign * _to_float(tokens[-1])


def parse_lp_file(text: str) -> LinearProgram:
    order: dict[str, int] = {}
    cost: dict[str, float] = {}
    rows: list[tuple[str, list[tuple[str, float]], str, float]] = []
    bounds: dict[str, list[float]] = {}
    integer: set[str] = set()

    def see(name):
        order.setdefault(name, len(order))

    sections = _split_sections(text)
    # variable order follows the Bounds section when present
    for key, body in sections:
        if key == "bounds":
            for line in body.splitlines():
                toks = _TOKEN_RE.findall(line)
                see(next(t for t in toks if not (_is_number(t) or t in _OPS.values() or t in "+-<>=" or t.lower() == "free")))
    for key, body in sections:
        toks = _TOKEN_RE.findall(body)
        if key == "max":
            raise LPFormatError("maximisation objectives are not supported")
        if key == "obj":
            if toks and toks[0].endswith(":"):
                toks = toks[1:]
            terms, _ = _parse_terms(toks, 0, lambda t: False)
            for name, c in terms:
                see(name)
                cost[name] = cost.get(name, 0.0) + c
        elif key == "rows":
            pos = 0
            while pos < len(toks):
                label = f"c{len(rows)}"
                if toks[pos].endswith(":"):
                    label = toks[pos][:-1]
                    pos += 1
                terms, pos = _parse_terms(toks, pos, lambda t: t in ("<=", ">=", "=<", "=>", "<", ">", "="))
                op = toks[pos]
                sense = "<" if op in ("<=", "=<", "<") else ">" if op in (">=", "=>", ">") else "="
                pos += 1
                sign = 1.0
                while toks[pos] in "+-":
                    sign *= -1.0 if toks[pos] == "-" else 1.0
                    pos += 1
                rhs = sign * _to_float(toks[pos])
                pos += 1
                for name, _ in terms:
                    see(name)
                rows.append((label, terms, sense, rhs))
        elif key == "bounds":
            for line in body.splitlines():
                _parse_bound(_TOKEN_RE.findall(line), bounds)
        elif key in ("gen", "bin"):
            for name in body.split():
                see(name)
                integer.add(name)
                if key == "bin":
                    bounds[name] = [0.0, 1.0]

    names = sorted(order, key=order.get)
    b = ProgramBuilder()
    lo = [bounds.get(n, [0.0, math.inf])[0] for n in names]
    hi = [bounds.get(n, [0.0, math.inf])[1] for n in names]
    b.add_vars(names, lower=lo, upper=hi, cost=[cost.get(n, 0.0) for n in names])
    ids = {n: k for k, n in enumerate(names)}
    for label, terms, sense, rhs in rows:
        coefs: dict[int, float] = {}
        for name, c in terms:
            coefs[ids[name]] = coefs.get(ids[name], 0.0) + c
        b.add_row(label, coefs, sense, rhs)
    lp = b.build()
    lp.integer = np.array([n in integer for n in names], dtype=bool)
    return lp


def _parse_bound(toks: list[str], bounds: dict[str, list[float]]) -> None:
    if len(toks) == 2 and toks[1].lower() == "free":
        bounds[toks[0]] = [-math.inf, math.inf]
        return
    ops = [k for k, t in enumerate(toks) if t in ("<=", ">=", "=", "<", ">", "=<", "=>")]
    if len(ops) == 2:  # lo <= x <= hi
        a, b = ops
        bounds[toks[a + 1]] = [_signed_number(toks[:a]), _signed_number(toks[b + 1:])]
        return
    if len(ops) != 1:
        raise LPFormatError(f"cannot parse bound {' '.join(toks)!r}")
    k = ops[0]
    left, op, right = toks[:k], toks[k], toks[k + 1:]
    if len(left) == 1 and not _is_number(left[0]):
        name, value = left[0], _signed_number(right)
    else:
        name, value = right[0], _signed_number(left)
        op = {"<=": ">=", ">=": "<=", "<": ">", ">": "<", "=<": "=>", "=>": "=<"}.get(op, op)
    cur = bounds.setdefault(name, [0.0, math.inf])
    if op in ("=",):
        cur[:] = [value, value]
    elif op in (">=", ">", "=>"):
        cur[0] = value
    else:
        cur[1] = value


def read_lp_file(path: str | Path) -> LinearProgram:
    return parse_lp_file(Path(path).read_text())
