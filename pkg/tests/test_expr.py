import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalineq.expr import Expr, Marginal, ParseError, Space, parse_expr
from causalineq.inequalities import dependency_vars

from conftest import fs


def obs_resolver(g, joint):
    space = Space.of(g)
    return space, lambda a: space.sum(joint, g.V - a.keep)


def test_chain_rule_cancels(instrument):
    g = instrument
    assert parse_expr("P(x,y|z)", g) == parse_expr("P(y|z,x) P(x|z)", g)
    assert parse_expr("P(x,y|z)", g) == Expr.prob(g, "XY", "Z")


def test_marginalising_single_factor(instrument):
    g = instrument
    e = parse_expr("sum_{y}(P(x,y|z))", g)
    assert e == parse_expr("P(x|z)", g)


def test_sum_of_product_stays_wrapped(two_block):
    g = two_block
    e = parse_expr("sum_{w1}(P(w2|w1,x) P(w1))", g)
    assert e.size() > 1
    assert dependency_vars(e, g) == fs("X", "W2")


def test_domain_factor_for_free_sum(instrument):
    g = instrument
    assert parse_expr("sum_{y}(P(x|z))", g) == parse_expr("2 P(x|z)", g)


@pytest.mark.parametrize(
    "text, deps",
    [
        ("P_{w2,x}(y,z)", {"W2", "X", "Y", "Z"}),
        ("P(x|w1)", {"X", "W1"}),
        ("sum_{z}(P(x,z))", {"X"}),
        ("P_{w1,w2,x,y}(z)", {"Y", "Z"}),
    ],
)
def test_dependency_vars(two_block, text, deps):
    assert dependency_vars(parse_expr(text, two_block), two_block) == frozenset(deps)


def test_render_parse_roundtrip(two_block):
    g = two_block
    for text in [
        "P(y,z|w1,x,w2) P(x|w1)",
        "1 - P_{w1,w2,y,z}(x) - P_{w1,x,w2,y}(z) + P_{w1,w2,y}(x,z)",
        "sum_{w1}(P(w2|w1,x) P(w1))",
        "P_{x,w2}(y,z) - 1/2 P(x)",
    ]:
        e = parse_expr(text, g)
        assert parse_expr(e.render(g), g) == e


def test_dict_roundtrip(two_block):
    e = parse_expr("sum_{w1}(P(w2|w1,x) P(w1)) - 3 P_{x,w2}(y)", two_block)
    assert Expr.from_dict(e.to_dict()) == e


def test_zero_over_zero(instrument):
    g = instrument
    joint = np.zeros((2, 2, 2))
    joint[0, 0, 0] = 1.0  # z=1 never happens
    space, res = obs_resolver(g, joint)
    val = parse_expr("P(x|z)", g).evaluate(space, res)
    assert val[1].max() == 0.0
    assert val[0, 0, 0] == 1.0


@pytest.mark.parametrize("bad", ["P(q)", "P(x|", "P_{x}(x)", "P(x|x)", "sum_{y}", "P(x) $"])
def test_parse_errors(instrument, bad):
    with pytest.raises(ParseError):
        parse_expr(bad, instrument)


def test_marginal_keep_inside_source():
    with pytest.raises(ValueError):
        Marginal(fs("X"), fs("X", "Y"))


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.sampled_from(["P(x|z)", "P(x,y|z)", "P(y)", "P(z)", "P(x,y,z)"]), min_size=1, max_size=3),
    st.sets(st.sampled_from(["X", "Y", "Z"]), min_size=1),
    st.integers(0, 10**6),
)
def test_symbolic_sum_matches_numeric_sum(instrument, factors, bound, seed):
    """sum_over() simplification agrees with summing the evaluated array."""
    g = instrument
    e = Expr.const(1)
    for f in factors:
        e = e * parse_expr(f, g)
    joint = np.random.default_rng(seed).dirichlet(np.ones(8)).reshape(2, 2, 2)
    space, res = obs_resolver(g, joint)
    direct = space.sum(e.evaluate(space, res), bound)
    simplified = e.sum_over(bound, g).evaluate(space, res)
    assert np.allclose(direct, simplified, atol=1e-12)
