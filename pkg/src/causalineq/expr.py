"""Symbolic probability expressions over interventional marginals.

Every expression is kept in one canonical form: a sum of monomials with
rational coefficients, each monomial a product of atoms raised to integer
powers. Two atom kinds exist:

* :class:`Marginal` ``(H, K)`` stands for ``sum_{H \\ K} P_{v\\H}(v)``, the
  marginal over ``K`` of the interventional distribution whose non-intervened
  set is ``H``. ``Marginal(V, A)`` is the observational marginal ``P(a)``,
  ``Marginal(H, H)`` the full term ``P_{v\\H}(v)``.
* :class:`SumOver` wraps a monomial whose summation could not be pushed into
  a marginal.

Conditionals ``P(a|b)`` are stored as ``P(ab) / P(b)``; ratios evaluate with
the convention ``0/0 := 0``. Summation is simplified eagerly (a variable that
appears in a single marginal, to the first power, is marginalised away), so
telescoping chains cancel and equal expressions usually compare equal.
"""

from __future__ import annotations

import re
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import TYPE_CHECKING, Callable, Iterable, Iterator, Mapping

import numpy as np

if TYPE_CHECKING:
    from .graph import CausalGraph


def _names(s: Iterable[str]) -> tuple[str, ...]:
    return tuple(sorted(s))


class Atom:
    __slots__ = ()

    def key(self) -> tuple:
        raise NotImplementedError

    def deps(self, g: CausalGraph) -> frozenset[str]:
        raise NotImplementedError

    def size(self) -> int:
        raise NotImplementedError

    def __lt__(self, other: Atom) -> bool:
        return self.key() < other.key()


@dataclass(frozen=True, eq=True)
class Marginal(Atom):
    source: frozenset[str]
    keep: frozenset[str]

    def __post_init__(self):
        if not self.keep <= self.source:
            raise ValueError(f"keep {sorted(self.keep)} not inside source {sorted(self.source)}")

    def key(self) -> tuple:
        return (0, _names(self.source), _names(self.keep))

    def deps(self, g: CausalGraph) -> frozenset[str]:
        # P_{v\H} depends on v only through H and Pa(H).
        return self.keep | g.outside_parents(self.source)

    def size(self) -> int:
        return 1


@dataclass(frozen=True, eq=True)
class SumOver(Atom):
    bound: frozenset[str]
    body: "Monomial"

    def key(self) -> tuple:
        return (1, _names(self.bound), self.body.key())

    def deps(self, g: CausalGraph) -> frozenset[str]:
        return self.body.deps(g) - self.bound

    def size(self) -> int:
        return 1 + self.body.size()


@dataclass(frozen=True)
class Monomial:
    factors: tuple[tuple[Atom, int], ...] = ()

    @staticmethod
    def of(pairs: Mapping[Atom, int] | Iterable[tuple[Atom, int]]) -> Monomial:
        acc: dict[Atom, int] = defaultdict(int)
        items = pairs.items() if isinstance(pairs, Mapping) else pairs
        for a, e in items:
            acc[a] += e
        return Monomial(tuple(sorted(((a, e) for a, e in acc.items() if e), key=lambda p: p[0].key())))

    def key(self) -> tuple:
        return tuple((a.key(), e) for a, e in self.factors)

    def __mul__(self, other: Monomial) -> Monomial:
        return Monomial.of(self.factors + other.factors)

    def inverse(self) -> Monomial:
        return Monomial(tuple((a, -e) for a, e in self.factors))

    def deps(self, g: CausalGraph) -> frozenset[str]:
        out: frozenset[str] = frozenset()
        for a, _ in self.factors:
            out |= a.deps(g)
        return out

    def size(self) -> int:
        return sum(a.size() * abs(e) for a, e in self.factors)

    def __bool__(self) -> bool:
        return bool(self.factors)


Coef = Fraction


class Expr:
    """Immutable canonical polynomial over atoms."""

    __slots__ = ("terms", "_hash")

    def __init__(self, terms: Mapping[Monomial, Fraction] | Iterable[tuple[Monomial, Fraction]] = ()):
        acc: dict[Monomial, Fraction] = defaultdict(Fraction)
        items = terms.items() if isinstance(terms, Mapping) else terms
        for m, c in items:
            acc[m] += Fraction(c)
        self.terms: tuple[tuple[Monomial, Fraction], ...] = tuple(
            sorted(((m, c) for m, c in acc.items() if c != 0), key=lambda p: p[0].key())
        )
        self._hash = hash(tuple((m.key(), c) for m, c in self.terms))

    # -- construction ---------------------------------------------------------

    @staticmethod
    def const(c) -> Expr:
        return Expr([(Monomial(), Fraction(c))])

    @staticmethod
    def atom(a: Atom, power: int = 1) -> Expr:
        return Expr([(Monomial(((a, power),)), Fraction(1))])

    @staticmethod
    def marginal(source: Iterable[str], keep: Iterable[str]) -> Expr:
        keep = frozenset(keep)
        if not keep:
            return Expr.const(1)
        return Expr.atom(Marginal(frozenset(source), keep))

    @staticmethod
    def term(free: Iterable[str]) -> Expr:
        """The full interventional term P_{v\\H}(v); the empty term is 1."""
        free = frozenset(free)
        return Expr.marginal(free, free)

    @staticmethod
    def prob(g: CausalGraph, a: Iterable[str], given: Iterable[str] = ()) -> Expr:
        """Observational P(a | given) as a ratio of joint marginals."""
        a, b = frozenset(a), frozenset(given)
        return Expr.marginal(g.V, a | b) / Expr.marginal(g.V, b)

    # -- algebra --------------------------------------------------------------

    @staticmethod
    def _lift(x) -> Expr:
        if isinstance(x, Expr):
            return x
        if isinstance(x, (int, Fraction)):
            return Expr.const(x)
        if isinstance(x, float) and float(x).is_integer():
            return Expr.const(int(x))
        return NotImplemented

    def __add__(self, other) -> Expr:
        other = Expr._lift(other)
        if other is NotImplemented:
            return NotImplemented
        return Expr(self.terms + other.terms)

    __radd__ = __add__

    def __neg__(self) -> Expr:
        return Expr((m, -c) for m, c in self.terms)

    def __sub__(self, other) -> Expr:
        other = Expr._lift(other)
        if other is NotImplemented:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other) -> Expr:
        return Expr._lift(other) - self

    def __mul__(self, other) -> Expr:
        other = Expr._lift(other)
        if other is NotImplemented:
            return NotImplemented
        return Expr((m1 * m2, c1 * c2) for m1, c1 in self.terms for m2, c2 in other.terms)

    __rmul__ = __mul__

    def __truediv__(self, other) -> Expr:
        other = Expr._lift(other)
        if other is NotImplemented:
            return NotImplemented
        if len(other.terms) != 1:
            raise ZeroDivisionError("division only by a single nonzero monomial")
        m, c = other.terms[0]
        return self * Expr([(m.inverse(), 1 / c)])

    def __pow__(self, n: int) -> Expr:
        if n < 0:
            return Expr.const(1) / (self ** (-n))
        out = Expr.const(1)
        for _ in range(n):
            out = out * self
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, Expr):
            other = Expr._lift(other)
            if other is NotImplemented:
                return False
        return self._hash == other._hash and self.key() == other.key()

    def __hash__(self) -> int:
        return self._hash

    def key(self) -> tuple:
        return tuple((m.key(), c) for m, c in self.terms)

    # -- inspection -------------------------------------------------------------

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def is_monomial(self) -> bool:
        return len(self.terms) == 1

    def constant(self) -> Fraction | None:
        if not self.terms:
            return Fraction(0)
        if len(self.terms) == 1 and not self.terms[0][0]:
            return self.terms[0][1]
        return None

    def size(self) -> int:
        return sum(max(m.size(), 1) for m, _ in self.terms)

    def deps(self, g: CausalGraph) -> frozenset[str]:
        out: frozenset[str] = frozenset()
        for m, _ in self.terms:
            out |= m.deps(g)
        return out

    def marginals(self) -> set[Marginal]:
        """Every Marginal atom, including those nested inside sums."""
        out: set[Marginal] = set()

        def walk(mono: Monomial):
            for a, _ in mono.factors:
                if isinstance(a, Marginal):
                    out.add(a)
                else:
                    walk(a.body)

        for m, _ in self.terms:
            walk(m)
        return out

    def sources(self) -> set[frozenset[str]]:
        return {a.source for a in self.marginals()}

    def coefficient_of(self, mono: Monomial) -> Fraction:
        for m, c in self.terms:
            if m == mono:
                return c
        return Fraction(0)

    # -- transformations --------------------------------------------------------

    def sum_over(self, variables: Iterable[str], g: CausalGraph) -> Expr:
        vs = frozenset(variables)
        if not vs:
            return self
        out = []
        for m, c in self.terms:
            m2, c2 = _sum_monomial(m, c, vs, g)
            out.append((m2, c2))
        return Expr(out)

    def substitute(self, fn: Callable[[Marginal], "Expr | None"], g: CausalGraph) -> Expr:
        """Replace Marginal atoms by expressions (``fn`` returns None to keep one)."""
        total = Expr()
        for m, c in self.terms:
            total = total + _subst_monomial(m, fn, g) * Expr.const(c)
        return total

    # -- numerics -----------------------------------------------------------------

    def evaluate(self, space: "Space", resolve: Callable[[Marginal], np.ndarray]) -> np.ndarray:
        cache: dict[Atom, np.ndarray] = {}
        out = np.zeros(space.shape)
        for m, c in self.terms:
            out = out + float(c) * _eval_monomial(m, space, resolve, cache)
        return out

    def evaluate_parts(self, space: "Space", resolve) -> list[tuple[float, np.ndarray, np.ndarray]]:
        """Per monomial: (coefficient, numerator, denominator) with top-level powers split."""
        cache: dict[Atom, np.ndarray] = {}
        out = []
        for m, c in self.terms:
            num = np.ones(space.shape)
            den = np.ones(space.shape)
            for a, e in m.factors:
                arr = _eval_atom(a, space, resolve, cache)
                if e > 0:
                    num = num * arr**e
                else:
                    den = den * arr ** (-e)
            out.append((float(c), num, den))
        return out

    # -- display --------------------------------------------------------------------

    def render(self, g: CausalGraph) -> str:
        if not self.terms:
            return "0"
        parts = []
        for i, (m, c) in enumerate(_display_order(self.terms)):
            body = _render_monomial(m, g)
            sign = "-" if c < 0 else "+"
            mag = abs(c)
            if not body:
                txt = _fmt_coef(mag)
            elif mag == 1:
                txt = body
            else:
                txt = f"{_fmt_coef(mag)} {body}"
            if i == 0:
                parts.append(("-" if sign == "-" else "") + txt)
            else:
                parts.append(f" {sign} {txt}")
        return "".join(parts)

    def __repr__(self) -> str:
        return f"Expr({self.to_dict()!r})"

    # -- serialisation ----------------------------------------------------------------

    def to_dict(self) -> dict:
        return {"terms": [{"coef": str(c), "factors": _mono_to_list(m)} for m, c in self.terms]}

    @staticmethod
    def from_dict(d: Mapping) -> Expr:
        return Expr((_mono_from_list(t["factors"]), Fraction(t["coef"])) for t in d["terms"])


# ---------------------------------------------------------------------------
# internals


def _add_factor(factors: dict[Atom, int], a: Atom, e: int) -> None:
    n = factors.get(a, 0) + e
    if n:
        factors[a] = n
    else:
        factors.pop(a, None)


def _sum_monomial(m: Monomial, c: Fraction, vs: frozenset[str], g: CausalGraph) -> tuple[Monomial, Fraction]:
    factors = dict(m.factors)
    pending = set(vs)
    progress = True
    while pending and progress:
        progress = False
        for y in sorted(pending):
            dep = [(a, e) for a, e in factors.items() if y in a.deps(g)]
            if not dep:
                c = c * g.domain_size(y)
            elif len(dep) == 1 and dep[0][1] == 1 and isinstance(dep[0][0], Marginal) and y in dep[0][0].keep:
                a = dep[0][0]
                del factors[a]
                if len(a.keep) > 1:
                    _add_factor(factors, Marginal(a.source, a.keep - {y}), 1)
            elif len(dep) == 1 and dep[0][1] == 1 and isinstance(dep[0][0], SumOver):
                a = dep[0][0]
                del factors[a]
                _add_factor(factors, SumOver(a.bound | {y}, a.body), 1)
            else:
                continue
            pending.discard(y)
            progress = True
            break
    if pending:
        bound = frozenset(pending)
        inner = {a: e for a, e in factors.items() if a.deps(g) & bound}
        for a in inner:
            del factors[a]
        _add_factor(factors, SumOver(bound, Monomial.of(inner)), 1)
    return Monomial.of(factors), c


def _subst_monomial(m: Monomial, fn, g: CausalGraph) -> Expr:
    out = Expr.const(1)
    for a, e in m.factors:
        if isinstance(a, Marginal):
            rep = fn(a)
            piece = Expr.atom(a) if rep is None else rep
        else:
            body = _subst_monomial(a.body, fn, g)
            piece = body.sum_over(a.bound, g)
        out = out * (piece ** e)
    return out


class Space:
    """Full instantiation grid of the observed variables, in a fixed axis order."""

    def __init__(self, names: Iterable[str], sizes: Iterable[int]):
        self.names = tuple(names)
        self.sizes = tuple(int(s) for s in sizes)
        self.shape = self.sizes
        self._axis = {n: i for i, n in enumerate(self.names)}

    @classmethod
    def of(cls, g: CausalGraph) -> Space:
        return cls(g.observed, [g.domains[v] for v in g.observed])

    def axis(self, name: str) -> int:
        return self._axis[name]

    def axes(self, names: Iterable[str]) -> tuple[int, ...]:
        return tuple(sorted(self._axis[n] for n in names))

    def sum(self, arr: np.ndarray, names: Iterable[str]) -> np.ndarray:
        ax = self.axes(names)
        if not ax:
            return np.broadcast_to(arr, self.shape)
        return np.broadcast_to(np.broadcast_to(arr, self.shape).sum(axis=ax, keepdims=True), self.shape)

    def min(self, arr: np.ndarray, names: Iterable[str]) -> np.ndarray:
        ax = self.axes(names)
        if not ax:
            return np.broadcast_to(arr, self.shape)
        return np.broadcast_to(np.broadcast_to(arr, self.shape).min(axis=ax, keepdims=True), self.shape)

    def instantiation(self, flat_index: int) -> dict[str, int]:
        idx = np.unravel_index(flat_index, self.shape)
        return {n: int(i) for n, i in zip(self.names, idx)}


def _eval_atom(a: Atom, space: Space, resolve, cache) -> np.ndarray:
    hit = cache.get(a)
    if hit is None:
        if isinstance(a, Marginal):
            hit = np.broadcast_to(resolve(a), space.shape)
        else:
            hit = space.sum(_eval_monomial(a.body, space, resolve, cache), a.bound)
        cache[a] = hit
    return hit


def _eval_monomial(m: Monomial, space: Space, resolve, cache) -> np.ndarray:
    num = np.ones(space.shape)
    den = None
    for a, e in m.factors:
        arr = _eval_atom(a, space, resolve, cache)
        if e > 0:
            num = num * arr**e
        else:
            den = arr ** (-e) if den is None else den * arr ** (-e)
    if den is None:
        return num
    return np.divide(num, den, out=np.zeros(space.shape), where=den != 0)


def _fmt_coef(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def _display_order(terms):
    # constants first, then by size, then canonical key; display only
    return sorted(terms, key=lambda p: (bool(p[0]), p[0].size(), p[0].key()))


def _label(g: CausalGraph, names: Iterable[str]) -> str:
    return ",".join(v.lower() for v in g.sort(names))


def _render_prob(g: CausalGraph, source: frozenset[str], a: frozenset[str], b: frozenset[str]) -> str:
    t = g.V - source
    head = "P" if not t else "P_{" + _label(g, t) + "}"
    inner = _label(g, a) + ("|" + _label(g, b) if b else "")
    return f"{head}({inner})"


def _render_monomial(m: Monomial, g: CausalGraph) -> str:
    by_source: dict[frozenset[str], tuple[list, list]] = {}
    sums = []
    for a, e in m.factors:
        if isinstance(a, SumOver):
            sums.append((a, e))
            continue
        num, den = by_source.setdefault(a.source, ([], []))
        (num if e > 0 else den).extend([a.keep] * abs(e))
    pieces: list[str] = []
    tail: list[str] = []
    for source in sorted(by_source, key=lambda s: (len(g.V - s), _names(g.V - s))):
        num, den = by_source[source]
        num = sorted(num, key=lambda k: (-len(k), g.sort(k)))
        den = sorted(den, key=lambda k: (-len(k), g.sort(k)))
        for k in num:
            match = next((d for d in den if d < k), None)
            if match is not None:
                den.remove(match)
                pieces.append(_render_prob(g, source, k - match, match))
            else:
                pieces.append(_render_prob(g, source, k, frozenset()))
        tail += [_render_prob(g, source, d, frozenset()) for d in den]
    for a, e in sums:
        txt = "sum_{" + _label(g, a.bound) + "}(" + (_render_monomial(a.body, g) or "1") + ")"
        if e == 1:
            pieces.append(txt)
        elif e > 0:
            pieces.append(f"{txt}^{e}")
        else:
            tail += [txt] * (-e)
    out = " ".join(pieces)
    if tail:
        out = (out or "1") + "".join(f" / {t}" for t in tail)
    return out


def _atom_to_dict(a: Atom) -> dict:
    if isinstance(a, Marginal):
        return {"type": "marginal", "source": list(_names(a.source)), "keep": list(_names(a.keep))}
    return {"type": "sum", "bound": list(_names(a.bound)), "body": _mono_to_list(a.body)}


def _mono_to_list(m: Monomial) -> list:
    return [{"atom": _atom_to_dict(a), "exp": e} for a, e in m.factors]


def _atom_from_dict(d: Mapping) -> Atom:
    if d["type"] == "marginal":
        return Marginal(frozenset(d["source"]), frozenset(d["keep"]))
    if d["type"] == "sum":
        return SumOver(frozenset(d["bound"]), _mono_from_list(d["body"]))
    raise ValueError(f"unknown atom type {d['type']!r}")


def _mono_from_list(items) -> Monomial:
    return Monomial.of((_atom_from_dict(f["atom"]), int(f["exp"])) for f in items)


# ---------------------------------------------------------------------------
# parser for the textual notation produced by Expr.render


class ParseError(ValueError):
    pass


_TOKEN = re.compile(
    r"\s*(?:(?P<sum>sum_\{)|(?P<psub>P_\{)|(?P<p>P\()|(?P<num>\d+(?:/\d+)?)"
    r"|(?P<name>[A-Za-z][A-Za-z0-9_']*)|(?P<op>[-+*/^(){}|,]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    pos, out = 0, []
    text = text.replace("∅", "")
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos:].strip()[:1]!r} at column {pos + 1}")
        kind = m.lastgroup
        out.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    out.append(("eof", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str, g: CausalGraph):
        self.toks = _tokenize(text)
        self.i = 0
        self.g = g
        self.lookup = {v.lower(): v for v in g.observed}
        self.lookup.update({v: v for v in g.observed})

    def peek(self):
        return self.toks[self.i]

    def take(self, kind=None, value=None):
        tok = self.toks[self.i]
        if (kind and tok[0] != kind) or (value and tok[1] != value):
            want = value or kind
            raise ParseError(f"expected {want!r} at column {tok[2] + 1}, found {tok[1]!r}")
        self.i += 1
        return tok

    def names(self, closer: str) -> frozenset[str]:
        out = []
        while self.peek()[1] not in (closer, "|"):
            tok = self.take("name")
            v = self.lookup.get(tok[1])
            if v is None:
                raise ParseError(f"unknown variable {tok[1]!r} at column {tok[2] + 1}")
            out.append(v)
            if self.peek()[1] == ",":
                self.take(value=",")
        return frozenset(out)

    def expr(self) -> Expr:
        total = Expr()
        sign = 1
        if self.peek()[1] in "+-" and self.peek()[0] == "op":
            sign = -1 if self.take()[1] == "-" else 1
        total = total + self.product() * sign
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            sign = -1 if self.take()[1] == "-" else 1
            total = total + self.product() * sign
        return total

    def _starts_factor(self) -> bool:
        kind, val, _ = self.peek()
        return kind in ("sum", "psub", "p", "num") or (kind == "op" and val == "(")

    def product(self) -> Expr:
        out = self.factor()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val == "*":
                self.take()
                out = out * self.factor()
            elif kind == "op" and val == "/":
                self.take()
                out = out / self.factor()
            elif self._starts_factor():
                out = out * self.factor()
            else:
                return out

    def factor(self) -> Expr:
        base = self.primary()
        if self.peek()[1] == "^":
            self.take()
            neg = False
            if self.peek()[1] == "-":
                self.take()
                neg = True
            n = int(self.take("num")[1])
            base = base ** (-n if neg else n)
        return base

    def primary(self) -> Expr:
        kind, val, col = self.peek()
        if kind == "num":
            self.take()
            return Expr.const(Fraction(val))
        if kind == "op" and val == "(":
            self.take()
            e = self.expr()
            self.take(value=")")
            return e
        if kind == "sum":
            self.take()
            vs = self.names("}")
            self.take(value="}")
            self.take(value="(")
            e = self.expr()
            self.take(value=")")
            return e.sum_over(vs, self.g)
        if kind in ("p", "psub"):
            self.take()
            t: frozenset[str] = frozenset()
            if kind == "psub":
                t = self.names("}")
                self.take(value="}")
                self.take(value="(")
            a = self.names(")")
            b: frozenset[str] = frozenset()
            if self.peek()[1] == "|":
                self.take()
                b = self.names(")")
            self.take(value=")")
            if (a | b) & t:
                raise ParseError(f"intervened variables also listed as outcomes at column {col + 1}")
            if a & b:
                raise ParseError(f"overlapping conditional sets at column {col + 1}")
            source = self.g.V - t
            return Expr.marginal(source, a | b) / Expr.marginal(source, b)
        raise ParseError(f"unexpected {val!r} at column {col + 1}")


def parse_expr(text: str, g: CausalGraph) -> Expr:
    """Parse the rendered notation, e.g. ``1 - P_{y,z}(x) + sum_{w1}(P(w1))``."""
    p = _Parser(text, g)
    e = p.expr()
    p.take("eof")
    return e


def iter_atoms(e: Expr) -> Iterator[Atom]:
    for m, _ in e.terms:
        for a, _ in m.factors:
            yield a
