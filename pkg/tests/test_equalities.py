import numpy as np
import pytest

from causalineq.equalities import (
    CapExceeded,
    InterventionalTerm,
    Rewriter,
    enumerate_equalities,
    lemma1_compute,
    lemma1_decompose,
    lemma2_factorize,
    lemma3_marginalize,
    lemma_rules,
    obs_rewriter,
    rewrite_term,
    subsets,
)
from causalineq.evaluator import TableSet, evaluate
from causalineq.expr import Expr, parse_expr
from causalineq.graph import CausalGraph
from causalineq.oracle import all_interventionals, random_model

from conftest import fs

# (lhs intervened set, rhs) in the textbook notation; lowercase names, comma separated
INSTRUMENT_GOLDEN = [
    ("Z", "P(x,y|z)"),
    ("Y,Z", "P(x|z)"),
    ("X,Z", "P_{x}(y)"),
]

TWO_BLOCK_GOLDEN = [
    ("W1,W2", "P(z|w1,x,w2,y) P(y|w1,x,w2) P(x|w1)"),
    ("W1,W2,Z", "P(y|w1,x,w2) P(x|w1)"),
    ("W1,W2,Y", "P_{w1,y}(x,z)"),
    ("W1,W2,X", "P_{w2,x}(y,z)"),
    ("W1,W2,Y,Z", "P(x|w1)"),
    ("W1,W2,X,Z", "P_{w2,x}(y)"),
    ("W1,W2,X,Y", "P_{y}(z)"),
    ("X,Y,Z", "P(w2|w1,x) P(w1)"),
    ("X,Y,Z,W2", "P(w1)"),
    ("X,Y,Z,W1", "sum_{w1}(P(w2|w1,x) P(w1))"),
]


def golden_keys(g, rows):
    out = set()
    for inter, rhs in rows:
        free = g.V - frozenset(inter.split(","))
        out.add((tuple(sorted(free)), parse_expr(rhs, g).key()))
    return out


def test_instrument_golden(instrument):
    eqs = enumerate_equalities(instrument)
    keys = {e.key() for e in eqs}
    want = golden_keys(instrument, INSTRUMENT_GOLDEN)
    assert want <= keys
    extra = [e for e in eqs if e.key() not in want]
    assert all(e.lemma in ("decompose", "factorize") for e in extra)


def test_two_block_golden(two_block):
    eqs = enumerate_equalities(two_block)
    keys = {e.key() for e in eqs}
    want = golden_keys(two_block, TWO_BLOCK_GOLDEN)
    assert want <= keys, [r for r, k in zip(TWO_BLOCK_GOLDEN, sorted(want)) if k not in keys]
    extra = [e for e in eqs if e.key() not in want]
    assert all(e.lemma in ("decompose", "factorize") for e in extra)


def test_no_identities_or_duplicates(two_block):
    eqs = enumerate_equalities(two_block, full=True)
    assert len({e.key() for e in eqs}) == len(eqs)
    assert not any(e.is_identity() for e in eqs)


def test_lemma1_decompose(two_block):
    (e,) = lemma1_decompose(two_block, two_block.V)
    assert e.rhs == Expr.term(fs("W1", "W2")) * Expr.term(fs("X", "Y", "Z"))


def test_lemma1_compute_requires_component(two_block):
    with pytest.raises(ValueError):
        lemma1_compute(two_block, two_block.V, {"X", "Y"})


def test_lemma1_compute_bad_order(instrument):
    with pytest.raises(ValueError):
        lemma1_compute(instrument, instrument.V, {"X", "Y"}, order=["Y", "X", "Z"])


def test_lemma2_two_chain():
    g = CausalGraph({"A": 2, "B": 2}, [], [("A", "B")]).checked()
    eqs = {e.lhs: e.rhs for e in lemma2_factorize(g) if e.lemma == "factorize"}
    assert eqs[fs("A")] == parse_expr("P(a)", g)
    assert eqs[fs("B")] == parse_expr("P(b|a)", g)


def test_lemma3_needs_ancestral(instrument):
    assert lemma3_marginalize(instrument, {"X", "Y"}, {"Y"}) is None
    e = lemma3_marginalize(instrument, {"X", "Y"}, {"X"})
    assert e.rhs == Expr.marginal(fs("X", "Y"), fs("X"))


def test_rewrite_term_from_observational(two_block):
    g = two_block
    got = rewrite_term(g, InterventionalTerm(fs("X", "Y")), [g.V])
    assert got == parse_expr("P(y|w1,x,w2) P(x|w1)", g)
    assert rewrite_term(g, fs("Y"), [g.V]) is None


def test_rewrite_through_interventional_source(two_block):
    g = two_block
    # Q[Z] = sum_x Q[X,Z]: X is not a parent of Z
    got = rewrite_term(g, fs("Z"), [g.V, fs("X", "Z")])
    assert got == Expr.marginal(fs("X", "Z"), fs("Z"))


@pytest.mark.parametrize("name", ["instrument", "two_block"])
def test_rule_list_agrees_with_generative_closure(request, name):
    g = request.getfixturevalue(name)
    for sources in ([g.V], [g.V, fs("Y", "Z")] if "Z" in g.V and "W1" in g.V else [g.V, fs("Y")]):
        a = Rewriter(g, frozenset(map(frozenset, sources)))
        b = Rewriter(g, frozenset(map(frozenset, sources)), lemma_rules(g))
        assert set(a.best) == set(b.best)


def test_cap(instrument):
    with pytest.raises(CapExceeded):
        enumerate_equalities(instrument, cap=1)


def test_markov_truncated_factorization():
    """No hidden variables: every term equals the product of its own CPTs."""
    # declaration order differs from the topological order, so CPT axes need permuting
    g = CausalGraph({"C": 2, "A": 2, "B": 3}, [], [("A", "B"), ("B", "C"), ("A", "C")]).checked()
    params = random_model(g, seed=3)
    ts = TableSet(g, list(all_interventionals(params).values()))
    obs = obs_rewriter(g)
    for h in subsets(g.V)[1:]:
        assert h in obs
        # closed form from the CPTs, independently of the oracle's einsum path
        closed = np.ones(ts.space.shape)
        for v in h:
            cpt = params.cpts[v]
            axes = [g.observed.index(p) for p in params.parent_order[v]] + [g.observed.index(v)]
            shape = [1] * 3
            for ax in axes:
                shape[ax] = g.domains[g.observed[ax]]
            closed = closed * np.transpose(cpt, np.argsort(axes)).reshape(shape)
        assert np.allclose(ts.expr(obs.best[h]), closed, atol=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_equalities_hold_on_oracle(two_block, seed):
    g = two_block
    ts = TableSet(g, list(all_interventionals(random_model(g, seed=seed)).values()))
    rep = evaluate(g, enumerate_equalities(g, full=True), ts)
    assert rep.worst > -1e-9
