import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalineq.graph import (
    CausalGraph,
    GraphError,
    c_components,
    induced_subgraph,
    topological_order,
    validate_graph,
)

from conftest import fs


def test_instrument_components(instrument):
    assert set(c_components(instrument)) == {fs("Z"), fs("X", "Y")}
    assert instrument.order == ("Z", "X", "Y")


def test_two_block_components(two_block):
    blocks = c_components(two_block)
    assert set(blocks) == {fs("W1", "W2"), fs("X", "Y", "Z")}
    assert blocks.block_of("Y") == fs("X", "Y", "Z")
    assert two_block.order == ("W1", "X", "W2", "Y", "Z")


def test_no_hidden_gives_singletons():
    g = CausalGraph({"A": 2, "B": 2, "C": 2}, [], [("A", "B"), ("B", "C")]).checked()
    assert len(c_components(g)) == 3


@pytest.mark.parametrize(
    "kwargs, kind",
    [
        (dict(observed={"A": 2, "B": 2}, edges=[("A", "B"), ("B", "A")]), "cycle"),
        (dict(observed={"A": 2}, edges=[("A", "A")]), "self-loop"),
        (dict(observed={"A": 1}), "domain-size"),
        (dict(observed={"A": 2}, edges=[("A", "Q")]), "unknown-variable"),
        (dict(observed={"A": 2, "B": 2}, hidden=["U"], edges=[("U", "A")]), "hidden-few-children"),
        (dict(observed={"A": 2, "B": 2}, hidden=["U"], edges=[("A", "U"), ("U", "A"), ("U", "B")]), "hidden-with-parent"),
    ],
)
def test_validation_kinds(kwargs, kind):
    g = CausalGraph(**kwargs)
    report = validate_graph(g)
    assert kind in report.kinds()
    with pytest.raises(GraphError) as err:
        g.checked()
    assert kind in err.value.report.kinds()


def test_duplicate_names():
    g = CausalGraph([("A", 2), ("A", 3)])
    assert "duplicate-name" in validate_graph(g).kinds()


def test_bidirected_expands_to_hidden_root():
    g = CausalGraph({"A": 2, "B": 2}, bidirected=[("A", "B")]).checked()
    assert len(g.hidden) == 1
    assert set(c_components(g)) == {fs("A", "B")}


def test_induced_subgraph_keeps_relevant_hidden(two_block):
    sub = induced_subgraph(two_block, {"W1", "X"})
    assert set(sub.observed) == {"W1", "X"}
    assert set(sub.hidden) == {"U1", "U3"}
    assert ("W1", "X") in sub.edges
    # U1 and U3 now have a single observed child each, which G(H) allows
    assert set(sub.components_of(sub.V)) == {fs("W1"), fs("X")}


def test_user_order_checked(instrument):
    assert topological_order(instrument, ["Z", "X", "Y"]) == ["Z", "X", "Y"]
    with pytest.raises(ValueError):
        topological_order(instrument, ["X", "Z", "Y"])


@st.composite
def random_dags(draw):
    n = draw(st.integers(2, 6))
    names = [f"V{i}" for i in range(n)]
    edges = [(names[i], names[j]) for i in range(n) for j in range(i + 1, n) if draw(st.booleans())]
    hidden, h_edges = [], []
    for k in range(draw(st.integers(0, 3))):
        kids = draw(st.lists(st.sampled_from(names), min_size=2, max_size=n, unique=True))
        hidden.append(f"U{k}")
        h_edges += [(f"U{k}", c) for c in kids]
    return CausalGraph({v: 2 for v in names}, hidden, edges + h_edges).checked()


@settings(max_examples=60, deadline=None)
@given(random_dags())
def test_components_partition_and_order(g):
    blocks = c_components(g)
    members = [v for b in blocks for v in b]
    assert sorted(members) == sorted(g.observed)
    pos = {v: i for i, v in enumerate(g.order)}
    for p, c in g.edges:
        if p in pos and c in pos:
            assert pos[p] < pos[c]


@settings(max_examples=40, deadline=None)
@given(random_dags())
def test_relabel_preserves_structure(g):
    mapping = {v: "N" + v for v in g.observed}
    h = g.relabel(mapping)
    assert {frozenset(mapping[v] for v in b) for b in c_components(g)} == set(c_components(h))
