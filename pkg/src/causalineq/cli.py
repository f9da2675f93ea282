"""Command-line interface.

Exit status: 0 success / no violation, 1 violation found, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .equalities import DEFAULT_COMPONENT_CAP, CapExceeded, enumerate_equalities, subsets
from .evaluator import (
    DEFAULT_TOLERANCE,
    TableSet,
    UnresolvedTerm,
    bounding_inequalities,
    bounds,
    evaluate,
    instrumental_battery,
)
from .expr import Expr, ParseError
from .graph import CausalGraph, GraphError
from .inequalities import Availability, find_ineqs, lemma4_ineq, prop1_family
from .io import GraphFileError, load_graph
from .oracle import OracleSizeError, all_interventionals, export_tables, product_check, random_model
from .tables import DistributionTable, TableFormatError

CAP_ENV = "CAUSALINEQ_MAX_COMPONENT"


class UsageError(ValueError):
    pass


def default_cap() -> int:
    raw = os.environ.get(CAP_ENV)
    if raw is None:
        return DEFAULT_COMPONENT_CAP
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{CAP_ENV} must be an integer, found {raw!r}") from None


@dataclass
class JobSpec:
    command: str
    graph: str
    data: list[str] = field(default_factory=list)
    available: list[str] = field(default_factory=list)
    target: str | None = None
    tolerance: float = DEFAULT_TOLERANCE
    cap: int | None = None
    seed: int = 0
    models: int = 20
    hidden_domain: int = 4
    concentration: float = 1.0
    fmt: str = "text"
    full: bool = False
    order: str | None = None
    lp: bool = False
    closure: bool = False
    at: str | None = None
    out: str | None = None
    pointwise: int = 0


def parse_varset(g: CausalGraph, text: str) -> frozenset[str]:
    """'W1,W2,Y' -> intervened set; 'OBS' or '' -> empty set. Case-insensitive."""
    text = text.strip()
    if text.upper() in ("OBS", ""):
        return frozenset()
    lookup = {v.lower(): v for v in g.observed}
    out = set()
    for item in text.split(","):
        name = item.strip()
        v = lookup.get(name.lower())
        if v is None:
            raise UsageError(f"unknown variable {name!r} in {text!r}; observed variables are {list(g.observed)}")
        out.add(v)
    return frozenset(out)


def parse_assignment(g: CausalGraph, text: str) -> dict[str, int]:
    out = {}
    lookup = {v.lower(): v for v in g.observed}
    for item in text.split(","):
        name, sep, val = item.partition("=")
        v = lookup.get(name.strip().lower())
        if not sep or v is None or not val.strip().isdigit():
            raise UsageError(f"bad assignment {item!r}; expected NAME=VALUE")
        if int(val) >= g.domains[v]:
            raise UsageError(f"{v}={val} is outside the domain of size {g.domains[v]}")
        out[v] = int(val)
    return out


# ---------------------------------------------------------------------------


def _load_tables(job: JobSpec) -> list[DistributionTable]:
    return [DistributionTable.load(p) for p in job.data]


def _available(g: CausalGraph, job: JobSpec, tables=()) -> Availability:
    frees = [g.V - parse_varset(g, a) for a in job.available]
    frees += [t.free for t in tables if t.intervened]
    return Availability(g, frees)


def _render_term(g: CausalGraph, free) -> str:
    return Expr.term(free).render(g)


def _cmd_equalities(g: CausalGraph, job: JobSpec, cap: int):
    order = [next(iter(parse_varset(g, v))) for v in job.order.split(",")] if job.order else None
    eqs = enumerate_equalities(g, full=job.full, cap=cap, order=order)
    lines = [f"{e.render(g)}    [{e.lemma}]" for e in eqs]
    doc = {"equalities": [dict(e.to_dict(), text=e.render(g), id=e.ident(g)) for e in eqs]}
    return 0, lines, doc


def _ineq_line(g, i) -> str:
    flags = f"    [trivial: {', '.join(i.reasons)}]" if i.trivial else ""
    return f"{i.render(g)}{flags}"


def _cmd_inequalities(g: CausalGraph, job: JobSpec, cap: int):
    fam = prop1_family(g, cap)
    lines = []
    for block in g.components_of(g.V):
        lines.append(f"c-component {{{','.join(g.sort(block))}}}:")
        lines += ["  " + _ineq_line(g, i) for i in fam if i.component == block]
    doc = {"inequalities": [dict(i.to_dict(), text=i.render(g), id=i.ident(g), trivial=i.trivial) for i in fam]}
    return 0, lines, doc


def _cmd_findineqs(g: CausalGraph, job: JobSpec, cap: int):
    avail = _available(g, job)
    if job.target:
        avail = avail.with_terms([g.V - parse_varset(g, job.target)])
    res = find_ineqs(g, avail, cap)
    lines = ["available: " + (", ".join(_render_term(g, f) for f in sorted(avail.explicit, key=sorted)) or "observational only")]
    lines.append("kept:")
    lines += ["  " + _ineq_line(g, i) for i in res.kept]
    lines.append("projected:")
    for p in res.projected:
        if p.vacuous:
            continue
        lines.append(f"  {p.render(g)}    [from {p.source.render(g)}]")
        if job.pointwise:
            for choice in p.choice_functions(g, job.pointwise):
                lines.append("      " + p.render_pointwise(g, choice))
    doc = {
        "available": [sorted(f) for f in sorted(avail.explicit, key=sorted)],
        "kept": [dict(i.to_dict(), text=i.render(g), id=i.ident(g), trivial=i.trivial) for i in res.kept],
        "pruned": [dict(i.to_dict(), text=i.render(g), id=i.ident(g)) for i in res.pruned],
        "projected": [dict(p.to_dict(), text=p.render(g), id=p.ident(g), vacuous=p.vacuous) for p in res.projected],
    }
    return 0, lines, doc


def _report_lines(g, rep) -> list[str]:
    lines = []
    for r in rep.results:
        mark = "VIOLATED" if r.violated else "ok"
        at = ", ".join(f"{k}={v}" for k, v in r.where.items())
        lines.append(f"{mark:8s} slack={r.worst:+.3e} at ({at})  {r.ident}: {r.text}")
    for s in rep.skipped:
        lines.append(f"skipped  {s} (needs a table that was not supplied)")
    lines.append(f"worst slack {rep.worst:+.3e}, tolerance {rep.tolerance:g}: {'VIOLATION' if rep.violated else 'no violation'}")
    return lines


def _cmd_evaluate(g: CausalGraph, job: JobSpec, cap: int):
    if not job.data:
        raise UsageError("evaluate needs at least one --data table")
    tables = _load_tables(job)
    ts = TableSet(g, tables)
    avail = _available(g, job, tables)
    res = find_ineqs(g, avail, cap)
    cons = enumerate_equalities(g, cap=cap) + res.kept + [p for p in res.projected if not p.vacuous]
    rep = evaluate(g, cons, ts, job.tolerance, skip_unresolved=True)
    return (1 if rep.violated else 0), _report_lines(g, rep), {"report": rep.to_dict()}


def _cmd_bounds(g: CausalGraph, job: JobSpec, cap: int):
    if not job.target:
        raise UsageError("bounds needs --target")
    target = g.V - parse_varset(g, job.target)
    avail = _available(g, job)
    tables = _load_tables(job)
    avail = Availability(g, list(avail.explicit) + [t.free for t in tables if t.intervened])
    rows = bounding_inequalities(g, avail, target)
    lines = [f"target: {_render_term(g, target)}", "bounding inequalities:"]
    lines += ["  " + b.describe(g) for b in rows]
    doc = {"target": _render_term(g, target), "bounding": [{"side": "lower" if b.sign > 0 else "upper", "text": b.ineq.render(g)} for b in rows]}
    if tables:
        at = parse_assignment(g, job.at) if job.at else None
        res = bounds(g, TableSet(g, tables), target, at, mode="lp" if job.lp else "cell", closure=job.closure)
        d = res.to_dict(g)
        doc["numeric"] = d
        if res.point_identified:
            lines.append("point-identified from the supplied tables")
        lines.append(f"numeric bounds ({d['mode']}):")
        for cell in d["cells"]:
            if np.isnan(cell["lower"]):
                continue
            at_txt = ", ".join(f"{k}={v}" for k, v in cell["at"].items())
            lines.append(f"  ({at_txt}): [{cell['lower']:.6f}, {cell['upper']:.6f}]")
        if d["clamped_lower"] or d["clamped_upper"]:
            lines.append("  (some bounds were clamped to [0, 1])")
    return 0, lines, doc


def _cmd_ivtest(g: CausalGraph, job: JobSpec, cap: int):
    if len(job.data) != 1:
        raise UsageError("iv-test needs exactly one --data table (the observational one)")
    tab = DistributionTable.load(job.data[0])
    if tab.intervened:
        raise UsageError("iv-test needs an observational table (intervened: OBS)")
    rep = instrumental_battery(g, tab, job.tolerance)
    return (1 if rep.violated else 0), _report_lines(g, rep), {"report": rep.to_dict()}


def _cmd_oracle_verify(g: CausalGraph, job: JobSpec, cap: int):
    eqs = enumerate_equalities(g, full=True, cap=cap)
    fam = prop1_family(g, cap)
    proj = [p for p in find_ineqs(g, Availability(g), cap).projected if not p.vacuous]
    pairs = [
        lemma4_ineq(g, s1, s1 | extra, block)
        for block in g.components_of(g.V)
        for s1 in subsets(block)
        for extra in subsets(block - s1)
    ]
    worst, worst_dual, bad = 0.0, 0.0, []
    for k in range(job.models):
        params = random_model(g, job.hidden_domain, job.seed + k, job.concentration)
        ts = TableSet(g, list(all_interventionals(params).values()))
        rep = evaluate(g, [*eqs, *fam, *proj], ts, job.tolerance)
        worst = min(worst, rep.worst)
        bad += [f"model {job.seed + k}: {r.ident}" for r in rep.violations()]
        for i in pairs:
            gap = float(np.abs(product_check(params, i) - sum(s * ts.term(f) for s, f in i.terms)).max())
            worst_dual = max(worst_dual, gap)
    lines = [
        f"{job.models} random models (seeds {job.seed}..{job.seed + job.models - 1}, hidden domain {job.hidden_domain})",
        f"checked {len(eqs)} equalities, {len(fam)} family inequalities, {len(proj)} projected inequalities",
        f"worst slack {worst:+.3e}; largest product-form gap {worst_dual:.3e}",
    ]
    lines += bad
    failed = bool(bad) or worst_dual > 1e-9
    lines.append("FAIL" if failed else "PASS")
    doc = {"models": job.models, "seed": job.seed, "worst_slack": worst, "product_gap": worst_dual, "violations": bad}
    return (1 if failed else 0), lines, doc


def _cmd_oracle_export(g: CausalGraph, job: JobSpec, cap: int):
    if not job.out:
        raise UsageError("oracle-export needs --out DIR")
    params = random_model(g, job.hidden_domain, job.seed, job.concentration)
    sets = [parse_varset(g, a) for a in job.available] or None
    paths = export_tables(params, job.out, sets)
    return 0, [f"wrote {p}" for p in paths], {"written": [str(p) for p in paths]}


_DISPATCH = {
    "derive-equalities": _cmd_equalities,
    "derive-inequalities": _cmd_inequalities,
    "findineqs": _cmd_findineqs,
    "evaluate": _cmd_evaluate,
    "bounds": _cmd_bounds,
    "iv-test": _cmd_ivtest,
    "oracle-verify": _cmd_oracle_verify,
    "oracle-export": _cmd_oracle_export,
}


def run(job: JobSpec) -> tuple[int, str]:
    """Execute a job; returns (exit status, text to print on stdout)."""
    try:
        g = load_graph(job.graph)
        cap = job.cap if job.cap is not None else default_cap()
        for a in job.available:
            parse_varset(g, a)
        status, lines, doc = _DISPATCH[job.command](g, job, cap)
    except FileNotFoundError as exc:
        return 2, f"error: file not found: {exc.filename}"
    except CapExceeded as exc:
        return 2, f"error: {exc} (raise it with --cap or {CAP_ENV})"
    except (GraphError, GraphFileError, TableFormatError, ParseError, UnresolvedTerm, UsageError, OracleSizeError) as exc:
        return 2, f"error: {exc}"
    if job.fmt == "json":
        doc = {"command": job.command, "graph": Path(job.graph).name, "status": status, **doc}
        return status, json.dumps(doc, indent=2, sort_keys=True)
    return status, "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="causalineq", description="Constraints implied by causal models with hidden variables.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("graph", help="graph file (YAML)")
        p.add_argument("--format", dest="fmt", choices=["text", "json"], default="text")
        p.add_argument("--cap", type=int, default=None, help=f"largest c-component allowed (default {DEFAULT_COMPONENT_CAP})")
        p.add_argument("--output", "-o", default=None, help="write output to this file instead of stdout")
        return p

    def avail(p):
        p.add_argument("--available", "-a", action="append", default=[], metavar="T",
                       help="intervened set of an available distribution, e.g. W1,W2,Y (repeatable; OBS is implicit)")

    p = common(sub.add_parser("derive-equalities", help="list equality constraints"))
    p.add_argument("--full", action="store_true", help="cover every subset of V, not only subsets of c-components")
    p.add_argument("--order", default=None, help="topological order to use, comma-separated")
    common(sub.add_parser("derive-inequalities", help="list the inclusion-exclusion family per c-component"))
    p = common(sub.add_parser("findineqs", help="project the inequalities onto available distributions"))
    avail(p)
    p.add_argument("--target", default=None, help="intervened set of a distribution to add to the available set")
    p.add_argument("--pointwise", type=int, default=0, metavar="N", help="also print up to N pointwise expansions per projected inequality")
    p = common(sub.add_parser("evaluate", help="evaluate constraints on distribution tables"))
    avail(p)
    p.add_argument("--data", "-d", action="append", default=[], required=True, help="distribution table file (repeatable)")
    p.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)
    p = common(sub.add_parser("bounds", help="bound an untried interventional distribution"))
    avail(p)
    p.add_argument("--target", required=True, help="intervened set of the target distribution")
    p.add_argument("--data", "-d", action="append", default=[])
    p.add_argument("--lp", action="store_true", help="couple the target's cells in a linear program")
    p.add_argument("--closure", action="store_true", help="point-identify through the equality rules when possible")
    p.add_argument("--at", default=None, help="report a single cell, e.g. y=0,z=1")
    p = common(sub.add_parser("iv-test", help="test observational data against the observational inequalities"))
    p.add_argument("--data", "-d", action="append", default=[], required=True)
    p.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)
    for name, text in (("oracle-verify", "check every derived constraint on random latent models"),
                       ("oracle-export", "write the tables of one random latent model")):
        p = common(sub.add_parser(name, help=text))
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--hidden-domain", type=int, default=4)
        p.add_argument("--concentration", type=float, default=1.0)
        if name == "oracle-verify":
            p.add_argument("--models", type=int, default=20)
            p.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)
        else:
            p.add_argument("--out", required=True, help="output directory")
            avail(p)
    return ap


def job_from_args(ns: argparse.Namespace) -> JobSpec:
    keys = JobSpec.__dataclass_fields__
    return JobSpec(**{k: v for k, v in vars(ns).items() if k in keys})


def main(argv: list[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    status, text = run(job_from_args(ns))
    if ns.output and status != 2:
        Path(ns.output).write_text(text + "\n")
    else:
        stream = sys.stderr if status == 2 else sys.stdout
        print(text, file=stream)
    return status


if __name__ == "__main__":
    sys.exit(main())
