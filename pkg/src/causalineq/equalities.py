"""Equality constraints among interventional distributions and term rewriting.

Three rules generate everything here, all stated on Q[H] := P_{v\\H}(v):

* decomposition: Q[H] is the product of Q[H_i] over the c-components H_i of G(H);
* component recovery: each Q[H_j] is a product of ratios of partial sums of
  Q[H] along a topological order of G(H);
* marginalisation: if W contains its own observed ancestors in G(C), then
  summing Q[C] over C \\ W gives Q[W].

:class:`Rewriter` closes a set of source terms under these rules and keeps,
for every reachable free set, the smallest expression found.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Sequence

from .expr import Expr
from .graph import CausalGraph, topological_order

DEFAULT_MAX_DEPTH = 32
DEFAULT_COMPONENT_CAP = 10


class CapExceeded(ValueError):
    """A c-component (or variable set) is larger than the configured cap."""

    def __init__(self, what: str, size: int, cap: int):
        self.what, self.size, self.cap = what, size, cap
        super().__init__(f"{what} has {size} variables, above the configured cap of {cap}")


def check_component_cap(g: CausalGraph, cap: int = DEFAULT_COMPONENT_CAP) -> None:
    for block in g.components_of(g.V):
        if len(block) > cap:
            raise CapExceeded(f"c-component {{{','.join(g.sort(block))}}}", len(block), cap)


def subsets(s: Iterable[str], g: CausalGraph | None = None) -> list[frozenset[str]]:
    """All subsets of ``s``: by size, then lexicographically by sorted names."""
    items = sorted(s)
    out = []
    for k in range(len(items) + 1):
        out.extend(frozenset(c) for c in combinations(items, k))
    return out


def fmt_set(g: CausalGraph, s: Iterable[str]) -> str:
    return "{" + ",".join(g.sort(s)) + "}"


@dataclass(frozen=True)
class InterventionalTerm:
    """P_{v\\H}(v), identified by its free (non-intervened) set H."""

    free: frozenset[str]

    @classmethod
    def from_intervened(cls, g: CausalGraph, t: Iterable[str]) -> InterventionalTerm:
        t = frozenset(t)
        if not t <= g.V:
            raise ValueError(f"unknown variables {sorted(t - g.V)}")
        return cls(g.V - t)

    def intervened(self, g: CausalGraph) -> frozenset[str]:
        return g.V - self.free

    def expr(self) -> Expr:
        return Expr.term(self.free)

    def render(self, g: CausalGraph) -> str:
        return self.expr().render(g)


@dataclass(frozen=True)
class EqualityConstraint:
    lhs: frozenset[str]
    rhs: Expr
    lemma: str
    sets: tuple[tuple[str, tuple[str, ...]], ...] = ()

    @property
    def term(self) -> InterventionalTerm:
        return InterventionalTerm(self.lhs)

    def key(self) -> tuple:
        return (tuple(sorted(self.lhs)), self.rhs.key())

    def residual(self) -> Expr:
        return Expr.term(self.lhs) - self.rhs

    def is_identity(self) -> bool:
        return self.rhs == Expr.term(self.lhs)

    def render(self, g: CausalGraph) -> str:
        return f"{Expr.term(self.lhs).render(g)} = {self.rhs.render(g)}"

    def ident(self, g: CausalGraph) -> str:
        return f"eq:{fmt_set(g, self.lhs)}:{self.lemma}"

    def to_dict(self) -> dict:
        return {
            "kind": "equality",
            "lhs": sorted(self.lhs),
            "rhs": self.rhs.to_dict(),
            "lemma": self.lemma,
            "sets": {k: list(v) for k, v in self.sets},
        }

    @staticmethod
    def from_dict(d) -> EqualityConstraint:
        return EqualityConstraint(
            frozenset(d["lhs"]),
            Expr.from_dict(d["rhs"]),
            d["lemma"],
            tuple((k, tuple(v)) for k, v in d["sets"].items()),
        )


def _prov(**sets: Iterable[str]) -> tuple[tuple[str, tuple[str, ...]], ...]:
    return tuple((k, tuple(sorted(v))) for k, v in sets.items())


# ---------------------------------------------------------------------------
# the three rules as individual constraints


def lemma1_decompose(g: CausalGraph, h: Iterable[str]) -> list[EqualityConstraint]:
    h = frozenset(h)
    rhs = Expr.const(1)
    for block in g.components_of(h):
        rhs = rhs * Expr.term(block)
    return [EqualityConstraint(h, rhs, "decompose", _prov(H=h))]


def _component_ratio(g: CausalGraph, h: frozenset[str], hj: frozenset[str], q_h: Expr, order: Sequence[str]) -> Expr:
    out = Expr.const(1)
    prefix: frozenset[str] = frozenset()
    for v in order:
        nxt = prefix | {v}
        if v in hj:
            num = q_h.sum_over(h - nxt, g)
            den = Expr.const(1) if not prefix else q_h.sum_over(h - prefix, g)
            out = out * num / den
        prefix = nxt
    return out


def lemma1_compute(
    g: CausalGraph, h: Iterable[str], hj: Iterable[str], order: Sequence[str] | None = None
) -> EqualityConstraint:
    """Q[H_j] from Q[H] for a c-component H_j of G(H)."""
    h, hj = frozenset(h), frozenset(hj)
    if hj not in g.components_of(h):
        raise ValueError(f"{sorted(hj)} is not a c-component of G({sorted(h)})")
    if order is None:
        order = g.order_within(h)
    else:
        order = [v for v in order if v in h]
        _check_order(g, h, order)
    rhs = _component_ratio(g, h, hj, Expr.term(h), order)
    lemma = "factorize" if h == g.V else "component"
    return EqualityConstraint(hj, rhs, lemma, _prov(H=h, Hj=hj))


def _check_order(g: CausalGraph, h: frozenset[str], order: Sequence[str]) -> None:
    if set(order) != h:
        raise ValueError("order must cover the whole set")
    pos = {v: i for i, v in enumerate(order)}
    for v in h:
        for p in g.observed_parents(v) & h:
            if pos[p] > pos[v]:
                raise ValueError(f"order puts {v} before its parent {p}")


def lemma2_factorize(g: CausalGraph, order: Sequence[str] | None = None) -> list[EqualityConstraint]:
    """P(v) as the product of its c-component factors, and each factor from P(v)."""
    order = topological_order(g, order)
    out = []
    blocks = g.components_of(g.V)
    if len(blocks) > 1:
        out += lemma1_decompose(g, g.V)
    out += [lemma1_compute(g, g.V, b, order) for b in blocks]
    return out


def lemma3_marginalize(g: CausalGraph, c: Iterable[str], w: Iterable[str]) -> EqualityConstraint | None:
    """sum_{C\\W} Q[C] = Q[W] when W is ancestral in G(C); None otherwise."""
    c, w = frozenset(c), frozenset(w)
    if not w <= c <= g.V:
        raise ValueError("need W <= C <= V")
    if not g.is_ancestral(w, c):
        return None
    return EqualityConstraint(w, Expr.marginal(c, w), "marginalize", _prov(C=c, W=w))


def lemma_rules(g: CausalGraph) -> list[EqualityConstraint]:
    """Every instance of the three rules over all subsets of V (3^n of them)."""
    key = ("rules",)
    hit = g._cache.get(key)
    if hit is not None:
        return hit
    rules: list[EqualityConstraint] = []
    for h in subsets(g.V)[1:]:
        blocks = g.components_of(h)
        if len(blocks) > 1:
            rules += lemma1_decompose(g, h)
            rules += [lemma1_compute(g, h, b) for b in blocks]
        for w in subsets(h)[1:-1]:
            r = lemma3_marginalize(g, h, w)
            if r is not None:
                rules.append(r)
    g._cache[key] = rules
    return rules


# ---------------------------------------------------------------------------
# closure / rewriting


@dataclass
class Rewriter:
    """Closure of a set of source terms under the equality rules.

    ``sources`` are free sets whose terms count as atoms. With ``rules=None``
    the three rules are applied generatively; an explicit rule list (for
    example the output of :func:`lemma_rules`) is applied left to right
    instead, smaller right-hand sides first.
    """

    g: CausalGraph
    sources: frozenset[frozenset[str]]
    rules: Sequence[EqualityConstraint] | None = None
    max_depth: int = DEFAULT_MAX_DEPTH
    best: dict[frozenset[str], Expr] = field(init=False, default_factory=dict)
    how: dict[frozenset[str], tuple[str, tuple]] = field(init=False, default_factory=dict)

    def __post_init__(self):
        self.sources = frozenset(frozenset(s) for s in self.sources)
        self.best[frozenset()] = Expr.const(1)
        self.how[frozenset()] = ("empty", ())
        for s in sorted(self.sources, key=lambda s: (len(s), sorted(s))):
            self.best[s] = Expr.term(s)
            self.how[s] = ("source", _prov(H=s))
        if self.rules is None:
            self._close_generative()
        else:
            self._close_rules(self.rules)

    def _offer(self, s: frozenset[str], cand: Expr, how) -> bool:
        cur = self.best.get(s)
        if cur is None or cand.size() < cur.size():
            self.best[s] = cand
            self.how[s] = how
            return True
        return False

    def _close_generative(self) -> None:
        g = self.g
        queue = deque(sorted(self.best, key=lambda s: (len(s), sorted(s))))
        rounds = 0
        while queue and rounds < self.max_depth:
            rounds += 1
            nxt: deque = deque()
            while queue:
                h = queue.popleft()
                if not h:
                    continue
                e = self.best[h]
                for w in subsets(h)[1:-1]:
                    if g.is_ancestral(w, h):
                        if self._offer(w, e.sum_over(h - w, g), ("marginalize", _prov(C=h, W=w))):
                            nxt.append(w)
                blocks = g.components_of(h)
                if len(blocks) > 1:
                    order = g.order_within(h)
                    for b in blocks:
                        cand = _component_ratio(g, h, b, e, order)
                        if self._offer(b, cand, ("component", _prov(H=h, Hj=b))):
                            nxt.append(b)
            # decomposition: combine known components into their union
            for h in subsets(g.V)[1:]:
                blocks = g.components_of(h)
                if len(blocks) > 1 and all(b in self.best for b in blocks):
                    cand = Expr.const(1)
                    for b in blocks:
                        cand = cand * self.best[b]
                    if self._offer(h, cand, ("decompose", _prov(H=h))):
                        nxt.append(h)
            queue = deque(dict.fromkeys(nxt))

    def _close_rules(self, rules: Sequence[EqualityConstraint]) -> None:
        g = self.g
        ordered = sorted(rules, key=lambda r: (r.rhs.size(), r.key()))
        for _ in range(self.max_depth):
            changed = False
            for r in ordered:
                srcs = r.rhs.sources()
                if not all(s in self.best for s in srcs):
                    continue
                cand = r.rhs.substitute(lambda a: self.best[a.source].sum_over(a.source - a.keep, g), g)
                if self._offer(r.lhs, cand, (r.lemma, r.sets)):
                    changed = True
            if not changed:
                break

    def __contains__(self, free: Iterable[str]) -> bool:
        return frozenset(free) in self.best

    def rewrite(self, free: Iterable[str]) -> Expr | None:
        return self.best.get(frozenset(free))


def obs_rewriter(g: CausalGraph) -> Rewriter:
    """Closure of the observational distribution alone (cached per graph)."""
    key = ("obs",)
    hit = g._cache.get(key)
    if hit is None:
        hit = Rewriter(g, frozenset([g.V]))
        g._cache[key] = hit
    return hit


def rewrite_term(
    g: CausalGraph,
    term: InterventionalTerm | Iterable[str],
    available: Iterable[InterventionalTerm | Iterable[str]],
    equalities: Sequence[EqualityConstraint] | None = None,
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> Expr | None:
    """Express ``term`` over the available terms, or None if not rewritable."""
    free = term.free if isinstance(term, InterventionalTerm) else frozenset(term)
    srcs = frozenset(a.free if isinstance(a, InterventionalTerm) else frozenset(a) for a in available)
    return Rewriter(g, srcs, equalities, max_depth).rewrite(free)


def maximal_marginal_source(g: CausalGraph, h: Iterable[str]) -> frozenset[str]:
    """Largest C with H ancestral in G(C): everything except H's outside parents."""
    h = frozenset(h)
    return g.V - g.outside_parents(h)


def enumerate_equalities(
    g: CausalGraph, full: bool = False, cap: int = DEFAULT_COMPONENT_CAP, order: Sequence[str] | None = None
) -> list[EqualityConstraint]:
    """List the equality constraints, deduplicated.

    Scope is every subset of every c-component plus V itself, or every subset
    of V with ``full=True``. A term computable from P(v) is equated with its
    smallest observational expression; any other term is equated with the
    marginal of the largest interventional distribution it can be read off.
    """
    check_component_cap(g, cap)
    obs = obs_rewriter(g)
    out = lemma2_factorize(g, order)
    if full:
        scope = subsets(g.V)[1:]
    else:
        seen = set()
        for block in g.components_of(g.V):
            seen.update(subsets(block)[1:])
        seen.add(g.V)
        scope = sorted(seen, key=lambda s: (len(s), sorted(s)))
    for h in scope:
        if len(g.components_of(h)) > 1 and h != g.V:
            out += lemma1_decompose(g, h)
        if h == g.V:
            continue
        if h in obs:
            lemma, sets = obs.how[h]
            out.append(EqualityConstraint(h, obs.best[h], "identified", sets))
        else:
            c = maximal_marginal_source(g, h)
            if c != h:
                out.append(lemma3_marginalize(g, c, h))
    uniq: dict[tuple, EqualityConstraint] = {}
    for e in out:
        if e is None or e.is_identity():
            continue
        uniq.setdefault(e.key(), e)
    return list(uniq.values())
