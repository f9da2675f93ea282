"""Equality and inequality constraints of hidden-variable causal models."""

from .equalities import (
    CapExceeded,
    EqualityConstraint,
    InterventionalTerm,
    Rewriter,
    enumerate_equalities,
    lemma1_compute,
    lemma1_decompose,
    lemma2_factorize,
    lemma3_marginalize,
    rewrite_term,
)
from .evaluator import BoundResult, EvalReport, TableSet, UnresolvedTerm, bounds, evaluate, instrumental_battery
from .expr import Expr, Marginal, ParseError, Space, SumOver, parse_expr
from .graph import CausalGraph, GraphError, c_components, induced_subgraph, topological_order, validate_graph
from .inequalities import (
    Availability,
    LinearIneq,
    ProjectedIneq,
    dependency_vars,
    find_ineqs,
    lemma4_ineq,
    lemma5_subsumes,
    max_supersets,
    prop1_family,
    step2_project,
)
from .io import load_graph
from .oracle import FullModelParams, all_interventionals, interventional, product_check, random_model
from .tables import DistributionTable

__all__ = [n for n in dir() if not n.startswith("_")]
__version__ = "0.1.0"
