"""Numeric evaluation of constraints, bound extraction and observational tests."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .equalities import EqualityConstraint, InterventionalTerm, Rewriter, fmt_set, obs_rewriter
from .expr import Expr, Marginal, Space
from .graph import CausalGraph
from .inequalities import Availability, LinearIneq, ProjectedIneq, find_ineqs
from .tables import DistributionTable, family_arrays

DEFAULT_TOLERANCE = 1e-9

Constraint = Union[EqualityConstraint, LinearIneq, ProjectedIneq]


class UnresolvedTerm(LookupError):
    def __init__(self, g: CausalGraph, free: frozenset[str]):
        self.free = free
        super().__init__(f"no table provides or determines {Expr.term(free).render(g)} (free set {fmt_set(g, free)})")


class TableSet:
    """Supplied tables plus everything the equality rules derive from them."""

    def __init__(self, g: CausalGraph, tables: Iterable[DistributionTable] | dict = (), tol: float = 1e-9):
        self.g = g
        self.space = Space.of(g)
        if isinstance(tables, dict):
            self.arrays = {frozenset(k): np.broadcast_to(v, self.space.shape) for k, v in tables.items()}
        else:
            self.arrays = family_arrays(g, tables, tol)
        self._given = frozenset(self.arrays)
        self._rewriter: Rewriter | None = None
        self._derived: dict[frozenset[str], np.ndarray] = {}

    @property
    def sources(self) -> frozenset[frozenset[str]]:
        return self._given

    def rewriter(self) -> Rewriter:
        if self._rewriter is None:
            self._rewriter = Rewriter(self.g, self._given)
        return self._rewriter

    def term(self, free: Iterable[str]) -> np.ndarray:
        free = frozenset(free)
        if not free:
            return np.ones(self.space.shape)
        if free in self.arrays:
            return self.arrays[free]
        if free not in self._derived:
            e = self.rewriter().rewrite(free)
            if e is None:
                raise UnresolvedTerm(self.g, free)
            self._derived[free] = np.broadcast_to(e.evaluate(self.space, self.resolve), self.space.shape)
        return self._derived[free]

    def can_resolve(self, free: Iterable[str]) -> bool:
        free = frozenset(free)
        return not free or free in self.arrays or free in self.rewriter()

    def resolve(self, a: Marginal) -> np.ndarray:
        return self.space.sum(self.term(a.source), a.source - a.keep)

    def expr(self, e: Expr) -> np.ndarray:
        return np.broadcast_to(e.evaluate(self.space, self.resolve), self.space.shape)


@dataclass
class ConstraintResult:
    ident: str
    kind: str
    text: str
    slack: np.ndarray
    tolerance: float
    worst: float = field(init=False)
    where: dict = field(init=False)

    def __post_init__(self):
        flat = int(np.argmin(self.slack))
        self.worst = float(self.slack.ravel()[flat])
        self.where = {}
        self._flat = flat

    @property
    def violated(self) -> bool:
        return self.worst < -self.tolerance

    def to_dict(self) -> dict:
        return {
            "id": self.ident,
            "kind": self.kind,
            "text": self.text,
            "worst_slack": self.worst,
            "where": self.where,
            "violated": self.violated,
        }


@dataclass
class EvalReport:
    results: list[ConstraintResult]
    tolerance: float
    skipped: list[str] = field(default_factory=list)

    @property
    def worst(self) -> float:
        return min((r.worst for r in self.results), default=0.0)

    @property
    def violated(self) -> bool:
        return self.worst < -self.tolerance

    def violations(self) -> list[ConstraintResult]:
        return [r for r in self.results if r.violated]

    def to_dict(self) -> dict:
        return {
            "tolerance": self.tolerance,
            "worst_slack": self.worst,
            "violated": self.violated,
            "constraints": [r.to_dict() for r in self.results],
            "skipped": list(self.skipped),
        }


def _equality_slack(c: EqualityConstraint, ts: TableSet) -> np.ndarray:
    space = ts.space
    lhs = ts.term(c.lhs)
    parts = c.rhs.evaluate_parts(space, ts.resolve)
    ratio = np.zeros(space.shape)
    zero_den = np.zeros(space.shape, dtype=bool)
    for coef, num, den in parts:
        ratio = ratio + coef * np.divide(num, den, out=np.zeros(space.shape), where=den != 0)
        zero_den |= den == 0
    slack = -np.abs(lhs - ratio)
    if zero_den.any():
        # multiply through by every denominator; 0/0 cells stay comparable
        dens = [den for _, _, den in parts]
        total = np.ones(space.shape)
        for d in dens:
            total = total * d
        cleared = lhs * total
        for i, (coef, num, _) in enumerate(parts):
            others = np.ones(space.shape)
            for j, d in enumerate(dens):
                if j != i:
                    others = others * d
            cleared = cleared - coef * num * others
        slack = np.where(zero_den, -np.abs(cleared), slack)
    return slack


def constraint_slack(g: CausalGraph, c: Constraint, ts: TableSet) -> np.ndarray:
    if isinstance(c, EqualityConstraint):
        return _equality_slack(c, ts)
    if isinstance(c, LinearIneq):
        out = np.zeros(ts.space.shape)
        for sign, free in c.terms:
            out = out + sign * ts.term(free)
        return out
    if isinstance(c, ProjectedIneq):
        return np.broadcast_to(c.slack(ts.space, ts.resolve), ts.space.shape)
    raise TypeError(f"not a constraint: {c!r}")


def _kind(c: Constraint) -> str:
    return {EqualityConstraint: "equality", LinearIneq: "linear", ProjectedIneq: "projected"}[type(c)]


def constraint_sources(c: Constraint) -> set[frozenset[str]]:
    """Free sets of the terms a constraint needs numerically."""
    if isinstance(c, EqualityConstraint):
        return {c.lhs} | c.rhs.sources()
    if isinstance(c, LinearIneq):
        return set(c.frees()) - {frozenset()}
    return c.body.sources()


def evaluate(
    g: CausalGraph,
    constraints: Sequence[Constraint],
    data: TableSet | Iterable[DistributionTable],
    tolerance: float = DEFAULT_TOLERANCE,
    skip_unresolved: bool = False,
) -> EvalReport:
    """Slack of every constraint at every full instantiation.

    Unresolvable constraints raise :class:`UnresolvedTerm`, or are listed in
    ``skipped`` when ``skip_unresolved`` is set.
    """
    ts = data if isinstance(data, TableSet) else TableSet(g, data)
    results, skipped = [], []
    for c in constraints:
        ident = c.ident(g)
        if skip_unresolved and not all(ts.can_resolve(f) for f in constraint_sources(c)):
            skipped.append(ident)
            continue
        slack = np.broadcast_to(constraint_slack(g, c, ts), ts.space.shape)
        r = ConstraintResult(ident, _kind(c), c.render(g), np.array(slack), tolerance)
        r.where = {k.lower(): v for k, v in ts.space.instantiation(r._flat).items()}
        results.append(r)
    return EvalReport(results, tolerance, skipped)


# ---------------------------------------------------------------------------
# bounds


@dataclass
class BoundResult:
    target: frozenset[str]
    lower: np.ndarray
    upper: np.ndarray
    point_identified: bool
    lower_from: list[str]
    upper_from: list[str]
    clamped_lower: bool
    clamped_upper: bool
    cell_vars: tuple[str, ...]
    mode: str = "cell"

    def collapsed(self, space: Space) -> tuple[np.ndarray, np.ndarray]:
        """Bounds per cell of the target's own variables (tightest over the rest)."""
        others = [v for v in space.names if v not in self.cell_vars]
        ax = space.axes(others)
        lo = self.lower.max(axis=ax, keepdims=True) if ax else self.lower
        hi = self.upper.min(axis=ax, keepdims=True) if ax else self.upper
        return np.broadcast_to(lo, space.shape), np.broadcast_to(hi, space.shape)

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def to_dict(self, g: CausalGraph) -> dict:
        space = Space.of(g)
        lo, hi = self.collapsed(space)
        cells = []
        names = [v for v in g.observed if v in self.cell_vars]
        seen = set()
        for flat in range(int(np.prod(space.shape))):
            full = space.instantiation(flat)
            cell = tuple(full[v] for v in names)
            if cell in seen:
                continue
            seen.add(cell)
            idx = np.unravel_index(flat, space.shape)
            cells.append({"at": {v.lower(): x for v, x in zip(names, cell)}, "lower": float(lo[idx]), "upper": float(hi[idx])})
        return {
            "target": Expr.term(self.target).render(g),
            "point_identified": self.point_identified,
            "mode": self.mode,
            "lower_from": self.lower_from,
            "upper_from": self.upper_from,
            "clamped_lower": self.clamped_lower,
            "clamped_upper": self.clamped_upper,
            "cells": cells,
        }


@dataclass
class BoundingInequality:
    ineq: LinearIneq
    sign: int  # sign of the target term
    rest: LinearIneq | None = None

    def describe(self, g: CausalGraph) -> str:
        side = "lower" if self.sign > 0 else "upper"
        return f"{side}: {self.ineq.render(g)}"


def bounding_inequalities(
    g: CausalGraph, available: Availability, target: Iterable[str]
) -> list[BoundingInequality]:
    """All fully available inequalities that mention the target term."""
    target = frozenset(target)
    res = find_ineqs(g, available.with_terms([target]))
    out = []
    for ineq in res.kept + res.pruned:
        signs = [s for s, f in ineq.terms if f == target]
        if signs:
            out.append(BoundingInequality(ineq, signs[0]))
    out.sort(key=lambda b: (-b.sign, b.ineq.ident(g)))
    return out


def bounds(
    g: CausalGraph,
    data: TableSet | Iterable[DistributionTable],
    target: InterventionalTerm | Iterable[str],
    instantiation: dict | None = None,
    mode: str = "cell",
    closure: bool = False,
) -> BoundResult:
    """Lower and upper bounds on a target term from the supplied tables.

    ``mode="cell"`` takes, at every full instantiation, the best bound any
    single inequality gives. ``mode="lp"`` additionally couples the target's
    cells through normalisation and solves a small linear program per cell.
    ``instantiation`` restricts the reported arrays to one cell (others NaN).

    The target counts as point-identified when a table supplies it or it is
    computable from P(v). With ``closure=True`` any rewriting through the
    supplied tables also counts; by default supplied interventional tables are
    used as given, the same way :func:`find_ineqs` treats them.
    """
    ts = data if isinstance(data, TableSet) else TableSet(g, data)
    free = target.free if isinstance(target, InterventionalTerm) else frozenset(target)
    cell_vars = tuple(v for v in g.observed if v in free | g.outside_parents(free))
    known = free in ts.sources or (g.V in ts.sources and free in obs_rewriter(g))
    if known or (closure and ts.can_resolve(free)):
        val = np.array(ts.term(free))
        res = BoundResult(free, val.copy(), val.copy(), True, ["point-identified"], ["point-identified"], False, False, cell_vars, mode)
        return _restrict(res, g, instantiation)
    avail = Availability(g, [s for s in ts.sources if s != g.V])
    lowers, uppers = [np.zeros(ts.space.shape)], [np.ones(ts.space.shape)]
    low_from, up_from = [], []
    rows = []
    for b in bounding_inequalities(g, avail, free):
        rest = np.zeros(ts.space.shape)
        for s, f in b.ineq.terms:
            if f != free:
                rest = rest + s * ts.term(f)
        rows.append((b.sign, rest))
        if b.sign > 0:
            lowers.append(-rest)
            low_from.append(b.ineq.render(g))
        else:
            uppers.append(rest)
            up_from.append(b.ineq.render(g))
    raw_lo = np.max(lowers[1:], axis=0) if len(lowers) > 1 else np.full(ts.space.shape, -np.inf)
    raw_hi = np.min(uppers[1:], axis=0) if len(uppers) > 1 else np.full(ts.space.shape, np.inf)
    lo = np.clip(raw_lo, 0.0, 1.0)
    hi = np.clip(raw_hi, 0.0, 1.0)
    res = BoundResult(
        free, lo, hi, False, low_from, up_from, bool((raw_lo < 0).any()), bool((raw_hi > 1).any()), cell_vars, mode
    )
    if mode == "lp":
        res = _lp_tighten(g, ts, res, free, rows, cell_vars)
    elif mode != "cell":
        raise ValueError(f"unknown bound mode {mode!r}")
    return _restrict(res, g, instantiation)


def _restrict(res: BoundResult, g: CausalGraph, instantiation: dict | None) -> BoundResult:
    if not instantiation:
        return res
    space = Space.of(g)
    mask = np.ones(space.shape, dtype=bool)
    for name, x in instantiation.items():
        v = next((o for o in g.observed if o.lower() == str(name).lower()), None)
        if v is None:
            raise ValueError(f"unknown variable {name!r} in instantiation")
        shape = [1] * len(space.shape)
        shape[space.axis(v)] = space.sizes[space.axis(v)]
        sel = np.zeros(space.sizes[space.axis(v)], dtype=bool)
        sel[int(x)] = True
        mask &= sel.reshape(shape)
    res.lower = np.where(mask, res.lower, np.nan)
    res.upper = np.where(mask, res.upper, np.nan)
    return res


def _lp_tighten(g, ts: TableSet, res: BoundResult, free, rows, cell_vars) -> BoundResult:
    """Joint LP over all cells of the target: rows, box and normalisation."""
    from scipy.optimize import linprog

    space = ts.space
    cells_shape = [space.sizes[space.axis(v)] for v in cell_vars]
    ncell = int(np.prod(cells_shape, dtype=np.int64))
    # map each full instantiation to its target cell
    grids = np.indices(space.shape)
    cell_of = np.ravel_multi_index([grids[space.axis(v)] for v in cell_vars], cells_shape).ravel() if cell_vars else np.zeros(
        int(np.prod(space.shape)), dtype=int
    )
    a_ub, b_ub = [], []
    for sign, rest in rows:
        flat_rest = np.broadcast_to(rest, space.shape).ravel()
        best: dict[int, float] = {}
        for k, c in enumerate(cell_of):
            # sign * x_c >= -rest  <=>  -sign * x_c <= rest
            val = flat_rest[k]
            best[c] = min(best.get(c, np.inf), val)
        for c, val in best.items():
            row = np.zeros(ncell)
            row[c] = -sign
            a_ub.append(row)
            b_ub.append(val)
    a_eq, b_eq = [], []
    inter = [i for i, v in enumerate(cell_vars) if v not in free]
    groups: dict[tuple, list[int]] = {}
    for c in range(ncell):
        idx = np.unravel_index(c, cells_shape)
        groups.setdefault(tuple(idx[i] for i in inter), []).append(c)
    # the target sums to one over its free variables, per value of its outside parents
    for members in groups.values():
        row = np.zeros(ncell)
        row[members] = 1
        a_eq.append(row)
        b_eq.append(1.0)
    lo_cell, hi_cell = np.zeros(ncell), np.ones(ncell)
    kw = dict(A_ub=np.array(a_ub) if a_ub else None, b_ub=np.array(b_ub) if b_ub else None,
              A_eq=np.array(a_eq) if a_eq else None, b_eq=np.array(b_eq) if b_eq else None,
              bounds=[(0, 1)] * ncell, method="highs")
    for c in range(ncell):
        obj = np.zeros(ncell)
        obj[c] = 1
        r1 = linprog(obj, **kw)
        r2 = linprog(-obj, **kw)
        if r1.status != 0 or r2.status != 0:
            # infeasible data: fall back to the per-cell bounds
            return res
        lo_cell[c], hi_cell[c] = r1.fun, -r2.fun
    lo = np.maximum(res.lower, lo_cell[cell_of].reshape(space.shape))
    hi = np.minimum(res.upper, hi_cell[cell_of].reshape(space.shape))
    res.lower, res.upper, res.mode = lo, hi, "lp"
    return res


# ---------------------------------------------------------------------------
# observational battery


def instrumental_battery(
    g: CausalGraph, observational: DistributionTable | np.ndarray, tolerance: float = DEFAULT_TOLERANCE
) -> EvalReport:
    """Every nontrivial constraint testable from P(v) alone."""
    if isinstance(observational, DistributionTable):
        ts = TableSet(g, [observational])
    else:
        ts = TableSet(g, {g.V: np.asarray(observational)})
    if g.V not in ts.sources:
        raise ValueError("the battery needs the observational table")
    kept, projected = find_ineqs(g, Availability(g)).nontrivial()
    return evaluate(g, [*kept, *projected], ts, tolerance)
