"""Semi-Markovian causal graphs: validation, c-components, induced subgraphs."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

VarSet = frozenset


class GraphError(ValueError):
    """Raised when a graph fails validation; carries the full report."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        super().__init__("invalid causal graph:\n" + report.describe())


@dataclass(frozen=True)
class Variable:
    name: str
    hidden: bool = False
    domain_size: int | None = None


@dataclass(frozen=True)
class Violation:
    kind: str
    detail: str
    items: tuple = ()


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}

    def describe(self) -> str:
        if self.ok:
            return "ok"
        return "\n".join(f"  [{v.kind}] {v.detail}" for v in self.violations)


def vset(items: Iterable[str] | str | None) -> frozenset[str]:
    """Coerce a name, an iterable of names or None into a frozenset."""
    if items is None:
        return frozenset()
    if isinstance(items, str):
        return frozenset([items])
    return frozenset(items)


class CausalGraph:
    """DAG over observed and hidden variables.

    The graph is immutable after construction. Construction only records the
    input; call :func:`validate_graph` (or :meth:`checked`) to enforce the
    semi-Markovian invariants. Bidirected pairs ``(a, b)`` are expanded into a
    fresh hidden root with exactly those two children.
    """

    def __init__(
        self,
        observed: Mapping[str, int] | Iterable[tuple[str, int]],
        hidden: Iterable[str] = (),
        edges: Iterable[Sequence[str]] = (),
        bidirected: Iterable[Sequence[str]] = (),
    ):
        items = list(observed.items()) if isinstance(observed, Mapping) else list(observed)
        self._declared: list[tuple[str, int | None, bool]] = [
            (str(n), int(s), False) for n, s in items
        ]
        self._declared += [(str(h), None, True) for h in hidden]
        names = {n for n, _, _ in self._declared}
        raw_edges = [tuple(e) for e in edges]
        for pair in bidirected:
            a, b = pair
            base = f"U_{a}_{b}"
            name, k = base, 1
            while name in names:
                k += 1
                name = f"{base}_{k}"
            names.add(name)
            self._declared.append((name, None, True))
            raw_edges += [(name, a), (name, b)]
        self._raw_edges = raw_edges

        self.observed: tuple[str, ...] = tuple(n for n, _, h in self._declared if not h)
        self.hidden: tuple[str, ...] = tuple(n for n, _, h in self._declared if h)
        self.domains: dict[str, int] = {n: s for n, s, h in self._declared if not h}
        self.edges: frozenset[tuple[str, str]] = frozenset(
            (str(p), str(c)) for p, c in raw_edges
        )
        self.V: frozenset[str] = frozenset(self.observed)
        known = set(self.observed) | set(self.hidden)
        self._pa: dict[str, set[str]] = {n: set() for n in known}
        self._ch: dict[str, set[str]] = {n: set() for n in known}
        for p, c in self.edges:
            if p in known and c in known:
                self._pa[c].add(p)
                self._ch[p].add(c)

    # -- basic queries -------------------------------------------------------

    @property
    def variables(self) -> tuple[Variable, ...]:
        return tuple(Variable(n, h, s) for n, s, h in self._declared)

    def is_hidden(self, name: str) -> bool:
        return name in self._pa and name not in self.domains

    def parents(self, name: str) -> frozenset[str]:
        return frozenset(self._pa[name])

    def children(self, name: str) -> frozenset[str]:
        return frozenset(self._ch[name])

    def observed_parents(self, name: str) -> frozenset[str]:
        return frozenset(p for p in self._pa[name] if p in self.domains)

    def hidden_parents(self, name: str) -> frozenset[str]:
        return frozenset(p for p in self._pa[name] if p not in self.domains)

    def pa(self, s: Iterable[str]) -> frozenset[str]:
        """Observed parents of a set of observed variables (may intersect it)."""
        out: set[str] = set()
        for v in s:
            out |= self.observed_parents(v)
        return frozenset(out)

    def domain_size(self, name: str) -> int:
        return self.domains[name]

    def ancestors(self, nodes: Iterable[str], within: Iterable[str] | None = None) -> frozenset[str]:
        """Ancestors of ``nodes`` (inclusive), optionally walking only inside ``within``."""
        allowed = None if within is None else set(within)
        seen = set(nodes)
        stack = list(seen)
        while stack:
            v = stack.pop()
            for p in self._pa.get(v, ()):
                if p not in seen and (allowed is None or p in allowed):
                    seen.add(p)
                    stack.append(p)
        return frozenset(seen)

    @cached_property
    def order(self) -> tuple[str, ...]:
        """Canonical topological order of the observed variables."""
        return tuple(topological_order(self))

    @cached_property
    def _rank(self) -> dict[str, int]:
        return {v: i for i, v in enumerate(self.order)}

    def sort(self, s: Iterable[str]) -> list[str]:
        """Sort observed variables by the canonical topological order."""
        return sorted(s, key=self._rank.__getitem__)

    def checked(self) -> "CausalGraph":
        report = validate_graph(self)
        if not report.ok:
            raise GraphError(report)
        return self

    def relabel(self, mapping: Mapping[str, str]) -> "CausalGraph":
        m = lambda n: mapping.get(n, n)  # noqa: E731
        return CausalGraph(
            [(m(n), self.domains[n]) for n in self.observed],
            [m(h) for h in self.hidden],
            [(m(p), m(c)) for p, c in self.edges],
        )

    def __repr__(self) -> str:
        return (
            f"CausalGraph(observed={list(self.observed)}, hidden={list(self.hidden)}, "
            f"edges={sorted(self.edges)})"
        )

    # -- cached set-level helpers used in the hot loops of the engines -------

    @cached_property
    def _cache(self) -> dict:
        return {}

    def components_of(self, h: Iterable[str]) -> tuple[frozenset[str], ...]:
        """c-components of G(H), ordered by their earliest member in ``order``."""
        h = frozenset(h)
        key = ("cc", h)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        parent = {v: v for v in h}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for u in self.hidden:
            kids = [c for c in self._ch[u] if c in h]
            for a, b in zip(kids, kids[1:]):
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[ra] = rb
        blocks: dict[str, set[str]] = {}
        for v in h:
            blocks.setdefault(find(v), set()).add(v)
        out = tuple(
            sorted((frozenset(b) for b in blocks.values()), key=lambda b: min(self._rank[v] for v in b))
        )
        self._cache[key] = out
        return out

    def outside_parents(self, h: Iterable[str]) -> frozenset[str]:
        """Pa(H) minus H: the intervened variables P_{v\\H} actually depends on."""
        h = frozenset(h)
        key = ("op", h)
        hit = self._cache.get(key)
        if hit is None:
            hit = self.pa(h) - h
            self._cache[key] = hit
        return hit

    def is_ancestral(self, w: Iterable[str], c: Iterable[str]) -> bool:
        """True iff ``w`` contains its own observed ancestors in G(C)."""
        w = frozenset(w)
        c = frozenset(c)
        return all(p in w for v in w for p in self.observed_parents(v) if p in c)

    def order_within(self, h: Iterable[str]) -> tuple[str, ...]:
        """Canonical topological order of ``h`` inside G(H)."""
        h = frozenset(h)
        key = ("ord", h)
        hit = self._cache.get(key)
        if hit is None:
            hit = tuple(_lex_topo(h, lambda v: self.observed_parents(v) & h))
            self._cache[key] = hit
        return hit


def _lex_topo(nodes: Iterable[str], parents_of) -> list[str]:
    nodes = set(nodes)
    indeg = {v: len(parents_of(v)) for v in nodes}
    kids: dict[str, list[str]] = {v: [] for v in nodes}
    for v in nodes:
        for p in parents_of(v):
            kids[p].append(v)
    heap = [v for v in nodes if indeg[v] == 0]
    heapq.heapify(heap)
    out = []
    while heap:
        v = heapq.heappop(heap)
        out.append(v)
        for k in kids[v]:
            indeg[k] -= 1
            if indeg[k] == 0:
                heapq.heappush(heap, k)
    if len(out) != len(nodes):
        raise GraphError(ValidationReport((Violation("cycle", "edge set is cyclic"),)))
    return out


def validate_graph(g: CausalGraph) -> ValidationReport:
    """Check every structural invariant; violations are returned, not raised."""
    out: list[Violation] = []
    seen: set[str] = set()
    for n, _, _ in g._declared:
        if n in seen:
            out.append(Violation("duplicate-name", f"variable {n!r} declared twice", (n,)))
        seen.add(n)
    for n, s in g.domains.items():
        if s < 2:
            out.append(Violation("domain-size", f"observed {n!r} has domain size {s} < 2", (n,)))
    for p, c in sorted(g.edges):
        for end in (p, c):
            if end not in seen:
                out.append(Violation("unknown-variable", f"edge {p}->{c} names unknown {end!r}", (p, c)))
        if p == c:
            out.append(Violation("self-loop", f"edge {p}->{c}", (p, c)))
    for h in g.hidden:
        pas = sorted(g._pa[h])
        if pas:
            out.append(Violation("hidden-with-parent", f"hidden {h!r} has parents {pas}", (h, *pas)))
        kids = sorted(c for c in g._ch[h] if c in g.domains)
        if len(kids) < 2:
            out.append(
                Violation("hidden-few-children", f"hidden {h!r} has {len(kids)} observed children (need >= 2)", (h,))
            )
    everything = set(g._pa)
    try:
        _lex_topo(everything, lambda v: g._pa[v])
    except GraphError:
        out.append(Violation("cycle", "edge set contains a directed cycle"))
    return ValidationReport(tuple(out))


@dataclass(frozen=True)
class CComponentPartition:
    blocks: tuple[frozenset[str], ...] = field(default_factory=tuple)

    def block_of(self, v: str) -> frozenset[str]:
        for b in self.blocks:
            if v in b:
                return b
        raise KeyError(v)

    def __iter__(self):
        return iter(self.blocks)

    def __len__(self):
        return len(self.blocks)


def c_components(g: CausalGraph) -> CComponentPartition:
    return CComponentPartition(g.components_of(g.V))


def induced_subgraph(g: CausalGraph, h: Iterable[str]) -> CausalGraph:
    """G(H): the observed set H plus hidden ancestors of H, edges restricted."""
    h = frozenset(h)
    unknown = h - g.V
    if unknown:
        raise ValueError(f"not observed variables: {sorted(unknown)}")
    keep_hidden = [u for u in g.hidden if g._ch[u] & h]
    keep = h | set(keep_hidden)
    return CausalGraph(
        [(n, g.domains[n]) for n in g.observed if n in h],
        keep_hidden,
        [(p, c) for p, c in g.edges if p in keep and c in keep],
    )


def topological_order(g: CausalGraph, order: Sequence[str] | None = None) -> list[str]:
    """Lexicographically smallest topological order of the observed variables.

    A user-supplied ``order`` is checked against the edges and returned as-is.
    """
    obs = set(g.observed)
    if order is not None:
        order = list(order)
        if set(order) != obs or len(order) != len(obs):
            raise ValueError("order must list every observed variable exactly once")
        pos = {v: i for i, v in enumerate(order)}
        for p, c in g.edges:
            if p in obs and c in obs and pos[p] > pos[c]:
                raise ValueError(f"order puts {c} before its parent {p}")
        return order
    return _lex_topo(obs, lambda v: g.observed_parents(v))
