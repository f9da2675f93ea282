"""Graph files (YAML) and JSON round-tripping of constraints.

Graph file layout::

    observed:          # name: domain size, in declaration order
      Z: 2
      X: 2
      Y: 2
    hidden: [U]
    edges:             # [parent, child] pairs or "A -> B" strings
      - [Z, X]
      - X -> Y
      - [U, X]
      - [U, Y]
    bidirected: []     # [a, b] pairs, each becomes a fresh hidden root
"""

from __future__ import annotations

from pathlib import Path
from typing import Any

import yaml

from .equalities import EqualityConstraint
from .graph import CausalGraph
from .inequalities import LinearIneq, ProjectedIneq


class GraphFileError(ValueError):
    pass


def _edge(item: Any, field: str, k: int) -> tuple[str, str]:
    if isinstance(item, str):
        a, sep, b = item.partition("->")
        if not sep:
            raise GraphFileError(f"{field}[{k}]: expected 'A -> B', found {item!r}")
        return a.strip(), b.strip()
    if isinstance(item, (list, tuple)) and len(item) == 2:
        return str(item[0]), str(item[1])
    raise GraphFileError(f"{field}[{k}]: expected a pair, found {item!r}")


def graph_from_dict(doc: Any, source: str = "<graph>") -> CausalGraph:
    if not isinstance(doc, dict):
        raise GraphFileError(f"{source}: top level must be a mapping")
    unknown = set(doc) - {"observed", "hidden", "edges", "bidirected"}
    if unknown:
        raise GraphFileError(f"{source}: unknown field(s) {sorted(unknown)}")
    obs = doc.get("observed")
    if not isinstance(obs, dict) or not obs:
        raise GraphFileError(f"{source}: 'observed' must map variable names to domain sizes")
    observed = []
    for name, size in obs.items():
        if not isinstance(size, int) or isinstance(size, bool):
            raise GraphFileError(f"{source}: observed.{name}: domain size must be an integer, found {size!r}")
        observed.append((str(name), size))
    hidden = doc.get("hidden") or []
    if not isinstance(hidden, list):
        raise GraphFileError(f"{source}: 'hidden' must be a list")
    edges = [_edge(e, "edges", k) for k, e in enumerate(doc.get("edges") or [])]
    bidir = [_edge(e, "bidirected", k) if not isinstance(e, str) else tuple(x.strip() for x in e.split("<->"))
             for k, e in enumerate(doc.get("bidirected") or [])]
    return CausalGraph(observed, [str(h) for h in hidden], edges, bidir).checked()


def load_graph(path: str | Path) -> CausalGraph:
    p = Path(path)
    try:
        doc = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise GraphFileError(f"{p}: {exc}") from None
    return graph_from_dict(doc, str(p))


def graph_to_dict(g: CausalGraph) -> dict:
    return {
        "observed": {v: g.domains[v] for v in g.observed},
        "hidden": list(g.hidden),
        "edges": [list(e) for e in sorted(g.edges)],
        "bidirected": [],
    }


def dump_graph(g: CausalGraph) -> str:
    return yaml.safe_dump(graph_to_dict(g), sort_keys=False)


def constraint_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "equality":
        return EqualityConstraint.from_dict(d)
    if kind == "linear":
        return LinearIneq.from_dict(d)
    if kind == "projected":
        return ProjectedIneq.from_dict(d)
    raise ValueError(f"unknown constraint kind {kind!r}")
