"""Inclusion-exclusion inequalities and their projection onto available terms.

For S1 <= S1' inside a c-component, the signed sum

    e[S1|S1'] = sum_{S2 <= S1' \\ S1} (-1)^{|S2|} Q[S1 | S2]  >= 0

holds at every instantiation (it is a latent-level mixture of products of
probabilities and their complements). :func:`find_ineqs` keeps those whose
terms are all available, pruned to maximal S1', and turns every other one into
a min/sum bound over the available side only.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .equalities import (
    DEFAULT_COMPONENT_CAP,
    InterventionalTerm,
    check_component_cap,
    fmt_set,
    obs_rewriter,
    subsets,
)
from .expr import Expr, Space
from .graph import CausalGraph


def _label(g: CausalGraph, s: Iterable[str]) -> str:
    return ",".join(v.lower() for v in g.sort(s))


@dataclass(frozen=True)
class LinearIneq:
    """sum of sign * Q[free] >= 0 at every full instantiation."""

    component: frozenset[str]
    s1: frozenset[str]
    s1p: frozenset[str]
    terms: tuple[tuple[int, frozenset[str]], ...]
    single_term: bool = False
    implied: bool = False

    @property
    def trivial(self) -> bool:
        return self.single_term or self.implied

    @property
    def reasons(self) -> list[str]:
        out = []
        if self.single_term:
            out.append("single-term")
        if self.implied:
            out.append("implied-by-equalities")
        return out

    def ident(self, g: CausalGraph) -> str:
        return f"ineq:{fmt_set(g, self.s1)}:{fmt_set(g, self.s1p)}"

    def expr(self) -> Expr:
        out = Expr()
        for sign, free in self.terms:
            out = out + Expr.term(free) * sign
        return out

    def frees(self) -> list[frozenset[str]]:
        return [f for _, f in self.terms]

    def render(self, g: CausalGraph) -> str:
        parts = []
        for i, (sign, free) in enumerate(self.terms):
            txt = Expr.term(free).render(g)
            if i == 0:
                parts.append(txt if sign > 0 else f"-{txt}")
            else:
                parts.append(f" {'+' if sign > 0 else '-'} {txt}")
        return "".join(parts) + " >= 0"

    def to_dict(self) -> dict:
        return {
            "kind": "linear",
            "component": sorted(self.component),
            "s1": sorted(self.s1),
            "s1p": sorted(self.s1p),
            "terms": [[s, sorted(f)] for s, f in self.terms],
            "single_term": self.single_term,
            "implied": self.implied,
        }

    @staticmethod
    def from_dict(d) -> LinearIneq:
        return LinearIneq(
            frozenset(d["component"]),
            frozenset(d["s1"]),
            frozenset(d["s1p"]),
            tuple((int(s), frozenset(f)) for s, f in d["terms"]),
            bool(d["single_term"]),
            bool(d["implied"]),
        )


def lemma4_ineq(g: CausalGraph, s1: Iterable[str], s1p: Iterable[str], component: Iterable[str] | None = None) -> LinearIneq:
    s1, s1p = frozenset(s1), frozenset(s1p)
    if not s1 <= s1p <= g.V:
        raise ValueError("need S1 <= S1' <= V")
    terms = tuple(((-1) ** len(s2), s1 | s2) for s2 in subsets(s1p - s1))
    comp = frozenset(component) if component is not None else s1p
    return LinearIneq(comp, s1, s1p, terms, single_term=len(terms) == 1)


# ---------------------------------------------------------------------------
# triviality


_TAUTOLOGY_DRAWS = ((1.0, 40), (0.3, 24))


def _random_joints(g: CausalGraph, seed: int = 0) -> Iterator[np.ndarray]:
    shape = tuple(g.domains[v] for v in g.observed)
    n = int(np.prod(shape))
    rng = np.random.default_rng(seed)
    for alpha, count in _TAUTOLOGY_DRAWS:
        for _ in range(count):
            yield rng.dirichlet(np.full(n, alpha)).reshape(shape)


def holds_for_every_joint(g: CausalGraph, e: Expr, tol: float = 1e-9) -> bool:
    """Numerically test that an observational expression is >= 0 for arbitrary P(v).

    The expression may only reference marginals of P(v). A seeded battery of
    dense and sparse Dirichlet joints is used; a single negative cell refutes.
    """
    if any(a.source != g.V for a in e.marginals()):
        raise ValueError("expression references non-observational terms")
    space = Space.of(g)
    for joint in _random_joints(g):
        val = e.evaluate(space, lambda a: space.sum(joint, g.V - a.keep))
        if val.min() < -tol:
            return False
    return True


def classify(g: CausalGraph, ineq: LinearIneq) -> LinearIneq:
    """Attach the single-term and implied-by-equalities flags."""
    obs = obs_rewriter(g)
    implied = False
    if all(f in obs for f in ineq.frees()):
        rewritten = Expr()
        for sign, f in ineq.terms:
            rewritten = rewritten + obs.best[f] * sign
        const = rewritten.constant()
        implied = (const is not None and const >= 0) or holds_for_every_joint(g, rewritten)
    return LinearIneq(ineq.component, ineq.s1, ineq.s1p, ineq.terms, len(ineq.terms) == 1, implied)


def prop1_family(g: CausalGraph, cap: int = DEFAULT_COMPONENT_CAP) -> list[LinearIneq]:
    """For every c-component T and S1 <= T, the inequality e[S1|T], flagged."""
    check_component_cap(g, cap)
    out = []
    for block in g.components_of(g.V):
        for s1 in subsets(block):
            out.append(classify(g, lemma4_ineq(g, s1, block, block)))
    return out


def lemma5_subsumes(larger: Iterable[str], smaller: Iterable[str]) -> bool:
    """The e[.|S1''] family implies the e[.|S1'] family exactly when S1' < S1''."""
    return frozenset(smaller) < frozenset(larger)


# ---------------------------------------------------------------------------
# availability


class Availability:
    """Which terms count as known.

    A term is available when it is computable from P(v) alone, or its free set
    was listed explicitly. The empty term is the constant 1. Membership is
    per term; explicit terms are not closed under the equality rules.
    """

    def __init__(self, g: CausalGraph, explicit: Iterable[InterventionalTerm | Iterable[str]] = ()):
        self.g = g
        frees = set()
        for t in explicit:
            f = t.free if isinstance(t, InterventionalTerm) else frozenset(t)
            if not f <= g.V:
                raise ValueError(f"unknown variables in available term: {sorted(f - g.V)}")
            frees.add(f)
        self.explicit = frozenset(frees)
        self.obs = obs_rewriter(g)

    @classmethod
    def from_intervened(cls, g: CausalGraph, sets: Iterable[Iterable[str]]) -> Availability:
        return cls(g, [g.V - frozenset(t) for t in sets])

    def with_terms(self, extra: Iterable[Iterable[str]]) -> Availability:
        return Availability(self.g, list(self.explicit) + [frozenset(e) for e in extra])

    def contains(self, free: Iterable[str]) -> bool:
        free = frozenset(free)
        return not free or free in self.obs or free in self.explicit

    __contains__ = contains

    def rewrite(self, free: Iterable[str]) -> Expr:
        free = frozenset(free)
        if free in self.obs:
            return self.obs.best[free]
        if free in self.explicit:
            return Expr.term(free)
        raise KeyError(f"term with free set {sorted(free)} is not available")


def max_supersets(
    g: CausalGraph, s1: Iterable[str], t_i: Iterable[str], available: Availability
) -> set[frozenset[str]]:
    """Maximal S1' with S1 <= S1' <= T whose inequality uses available terms only."""
    s1, t_i = frozenset(s1), frozenset(t_i)
    sup = [s1 | extra for extra in subsets(t_i - s1) if all(available.contains(s1 | s2) for s2 in subsets(extra))]
    return {s for s in sup if not any(s < o for o in sup)}


# ---------------------------------------------------------------------------
# projection


def dependency_vars(e: Expr, g: CausalGraph) -> frozenset[str]:
    """Variables the value of ``e`` can depend on (syntactic over-approximation)."""
    return e.deps(g)


@dataclass(frozen=True)
class ProjectedIneq:
    """sum_{Q} min_{M} body >= rhs, holding for every value of the other variables.

    ``body`` is the signed sum of the available terms, rewritten; the
    unavailable terms are kept for reference and for the intermediate stage
    ``min_M body + sum(unavailable) >= 0``.
    """

    source: LinearIneq
    body: Expr
    min_vars: frozenset[str]
    sum_vars: frozenset[str]
    rhs: int
    available: tuple[tuple[int, frozenset[str]], ...]
    unavailable: tuple[tuple[int, frozenset[str]], ...]

    @property
    def vacuous(self) -> bool:
        """The available side is a constant, so only a domain-size identity is left."""
        return self.body.constant() is not None

    def ident(self, g: CausalGraph) -> str:
        return f"proj:{fmt_set(g, self.source.s1)}:{fmt_set(g, self.source.s1p)}"

    def slack(self, space: Space, resolve) -> np.ndarray:
        arr = self.body.evaluate(space, resolve)
        return space.sum(space.min(arr, self.min_vars), self.sum_vars) - self.rhs

    def intermediate_slack(self, space: Space, resolve) -> np.ndarray:
        """min over M of the body plus the unavailable terms (needs those terms)."""
        arr = space.min(self.body.evaluate(space, resolve), self.min_vars)
        rest = Expr()
        for sign, free in self.unavailable:
            rest = rest + Expr.term(free) * sign
        return arr + rest.evaluate(space, resolve)

    def render(self, g: CausalGraph) -> str:
        if not self.min_vars:
            return f"{(-self.body).sum_over(self.sum_vars, g).render(g)} <= {-self.rhs}"
        inner = f"max_{{{_label(g, self.min_vars)}}}({(-self.body).render(g)})"
        if self.sum_vars:
            inner = f"sum_{{{_label(g, self.sum_vars)}}}({inner})"
        return f"{inner} <= {-self.rhs}"

    def choice_functions(self, g: CausalGraph, limit: int = 4096) -> Iterator[dict]:
        """Pointwise form: each map from Q-values to M-values gives one inequality.

        Yields ``{q_assignment: m_assignment}`` dicts (tuples in sorted-name
        order); stops after ``limit`` of them.
        """
        qn, mn = sorted(self.sum_vars), sorted(self.min_vars)
        qs = list(itertools.product(*[range(g.domains[v]) for v in qn]))
        ms = list(itertools.product(*[range(g.domains[v]) for v in mn]))
        for k, pick in enumerate(itertools.product(ms, repeat=len(qs))):
            if k >= limit:
                return
            yield dict(zip(qs, pick))

    def pointwise_value(self, g: CausalGraph, space: Space, resolve, choice: dict) -> np.ndarray:
        """sum over q of body at (q, choice[q]) minus rhs, as a function of the rest."""
        arr = np.broadcast_to(self.body.evaluate(space, resolve), space.shape)
        qn, mn = sorted(self.sum_vars), sorted(self.min_vars)
        rest = [v for v in space.names if v not in self.sum_vars | self.min_vars]
        total = 0.0
        for q, m in choice.items():
            idx = [slice(None)] * len(space.names)
            for v, x in zip(qn, q):
                idx[space.axis(v)] = x
            for v, x in zip(mn, m):
                idx[space.axis(v)] = x
            total = total + arr[tuple(idx)]
        out = np.asarray(total) - self.rhs
        # re-expand to the full grid over the untouched variables
        shape = [space.sizes[space.axis(v)] if v in rest else 1 for v in space.names]
        return np.broadcast_to(out.reshape(shape), space.shape)

    def render_pointwise(self, g: CausalGraph, choice: dict) -> str:
        qn, mn = sorted(self.sum_vars), sorted(self.min_vars)
        parts = []
        for q, m in choice.items():
            at = ", ".join(f"{v.lower()}={x}" for v, x in zip(qn + mn, q + m))
            parts.append(f"B[{at}]")
        return " + ".join(parts) + f" <= {-self.rhs}   where B = {(-self.body).render(g)}"

    def to_dict(self) -> dict:
        return {
            "kind": "projected",
            "source": self.source.to_dict(),
            "body": self.body.to_dict(),
            "min_vars": sorted(self.min_vars),
            "sum_vars": sorted(self.sum_vars),
            "rhs": self.rhs,
            "available": [[s, sorted(f)] for s, f in self.available],
            "unavailable": [[s, sorted(f)] for s, f in self.unavailable],
        }

    @staticmethod
    def from_dict(d) -> ProjectedIneq:
        return ProjectedIneq(
            LinearIneq.from_dict(d["source"]),
            Expr.from_dict(d["body"]),
            frozenset(d["min_vars"]),
            frozenset(d["sum_vars"]),
            int(d["rhs"]),
            tuple((int(s), frozenset(f)) for s, f in d["available"]),
            tuple((int(s), frozenset(f)) for s, f in d["unavailable"]),
        )


def step2_project(g: CausalGraph, ineq: LinearIneq, available: Availability) -> ProjectedIneq:
    """Move the unavailable terms right, minimise over what they cannot see, sum them away."""
    w1 = tuple((s, f) for s, f in ineq.terms if available.contains(f))
    w2 = tuple((s, f) for s, f in ineq.terms if not available.contains(f))
    body = Expr()
    for sign, f in w1:
        body = body + available.rewrite(f) * sign
    e1 = dependency_vars(body, g)
    e2: frozenset[str] = frozenset()
    q: frozenset[str] = frozenset()
    for _, f in w2:
        e2 |= f | g.outside_parents(f)
        q |= f
    rhs = 0
    for sign, f in w2:
        rhs -= sign * int(np.prod([g.domains[v] for v in q - f], dtype=np.int64))
    return ProjectedIneq(ineq, body, e1 - e2, q, rhs, w1, w2)


@dataclass
class FindIneqsResult:
    kept: list[LinearIneq] = field(default_factory=list)
    projected: list[ProjectedIneq] = field(default_factory=list)
    pruned: list[LinearIneq] = field(default_factory=list)

    def __iter__(self):
        return iter((self.kept, self.projected))

    def nontrivial(self) -> tuple[list[LinearIneq], list[ProjectedIneq]]:
        return [k for k in self.kept if not k.trivial], [p for p in self.projected if not p.vacuous]


def find_ineqs(
    g: CausalGraph, available: Availability | Iterable[Iterable[str]] = (), cap: int = DEFAULT_COMPONENT_CAP
) -> FindIneqsResult:
    """Keep the fully available inequalities (maximal S1' only) and project the rest."""
    check_component_cap(g, cap)
    if not isinstance(available, Availability):
        available = Availability(g, available)
    res = FindIneqsResult()
    for block in g.components_of(g.V):
        kept: list[LinearIneq] = []
        for s1 in subsets(block):
            for extra in subsets(block - s1):
                ineq = lemma4_ineq(g, s1, s1 | extra, block)
                if all(available.contains(f) for f in ineq.frees()):
                    drop = [k for k in kept if k.s1 == s1 and k.s1p < ineq.s1p]
                    res.pruned += drop
                    kept = [k for k in kept if not (k.s1 == s1 and k.s1p < ineq.s1p)]
                    kept.append(ineq)
                else:
                    res.projected.append(step2_project(g, ineq, available))
        res.kept += [classify(g, k) for k in kept]
    return res
