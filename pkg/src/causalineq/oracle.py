"""Brute-force ground truth from explicit latent-variable parameters.

Every distribution is computed by summing the truncated product over all
hidden configurations with ``np.einsum``. Nothing here uses the equality or
inequality engines, so agreement between the two is a genuine check.
"""

from __future__ import annotations

import itertools
import string
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .graph import CausalGraph
from .tables import DistributionTable, table_from_array

DEFAULT_MEMORY_CAP = 10**7


class OracleSizeError(ValueError):
    pass


@dataclass(frozen=True)
class FullModelParams:
    """CPTs for observed variables and priors for hidden roots.

    ``cpts[v]`` has axes ``parent_order[v] + (v,)``; the last axis sums to
    one. ``priors[u]`` is a probability vector over the hidden variable ``u``.
    """

    graph: CausalGraph
    cpts: Mapping[str, np.ndarray]
    priors: Mapping[str, np.ndarray]
    parent_order: Mapping[str, tuple[str, ...]]

    @property
    def hidden_sizes(self) -> dict[str, int]:
        return {u: len(p) for u, p in self.priors.items()}

    def size(self, name: str) -> int:
        return self.graph.domains[name] if name in self.graph.domains else len(self.priors[name])

    def problems(self, tol: float = 1e-12) -> list[str]:
        out = []
        for v, cpt in self.cpts.items():
            want = tuple(self.size(p) for p in self.parent_order[v]) + (self.size(v),)
            if cpt.shape != want:
                out.append(f"CPT of {v} has shape {cpt.shape}, expected {want}")
                continue
            if cpt.min() < 0:
                out.append(f"CPT of {v} has negative entries")
            if np.abs(cpt.sum(axis=-1) - 1).max() > tol:
                out.append(f"CPT columns of {v} do not sum to 1")
        for u, p in self.priors.items():
            if p.min() < 0 or abs(p.sum() - 1) > tol:
                out.append(f"prior of {u} is not a distribution")
        return out


def random_model(
    g: CausalGraph,
    hidden_domain: int = 4,
    seed: int | None = 0,
    concentration: float = 1.0,
    hidden_sizes: Mapping[str, int] | None = None,
) -> FullModelParams:
    """CPT columns and priors drawn from a symmetric Dirichlet."""
    rng = np.random.default_rng(seed)
    sizes = {u: (hidden_sizes or {}).get(u, hidden_domain) for u in g.hidden}
    size = lambda n: g.domains[n] if n in g.domains else sizes[n]  # noqa: E731
    priors = {u: rng.dirichlet(np.full(sizes[u], concentration)) for u in g.hidden}
    cpts, order = {}, {}
    for v in g.order:
        pa = tuple(g.sort(g.observed_parents(v))) + tuple(sorted(g.hidden_parents(v)))
        order[v] = pa
        shape = tuple(size(p) for p in pa)
        k = g.domains[v]
        draws = rng.dirichlet(np.full(k, concentration), size=int(np.prod(shape, dtype=np.int64)))
        cpts[v] = draws.reshape(shape + (k,))
    return FullModelParams(g, cpts, priors, order)


def _letters(names: Iterable[str]) -> dict[str, str]:
    pool = string.ascii_letters
    names = list(names)
    if len(names) > len(pool):
        raise OracleSizeError("too many variables for einsum")
    return dict(zip(names, pool))


def _check_size(params: FullModelParams, cap: int) -> None:
    g = params.graph
    total = int(np.prod([g.domains[v] for v in g.observed], dtype=np.int64))
    total *= int(np.prod(list(params.hidden_sizes.values()) or [1], dtype=np.int64))
    if total > cap:
        raise OracleSizeError(f"joint table over observed and hidden variables has {total} entries, above the cap of {cap}")


def _latent_sum(
    params: FullModelParams,
    factors: Iterable[str],
    complements: Iterable[str] = (),
    cap: int = DEFAULT_MEMORY_CAP,
) -> np.ndarray:
    """sum_u prod_{factors} P(v_i|pa_i,u) prod_{complements} (1 - P(v_j|pa_j,u)) P(u).

    Returned on the full observed grid (graph variable order).
    """
    g = params.graph
    _check_size(params, cap)
    lab = _letters(list(g.observed) + list(g.hidden))
    ops, subs = [], []
    for v in factors:
        ops.append(params.cpts[v])
        subs.append("".join(lab[p] for p in params.parent_order[v]) + lab[v])
    for v in complements:
        ops.append(1.0 - params.cpts[v])
        subs.append("".join(lab[p] for p in params.parent_order[v]) + lab[v])
    used = set("".join(subs))
    for u in g.hidden:
        if lab[u] in used:
            ops.append(params.priors[u])
            subs.append(lab[u])
    out_vars = [v for v in g.observed if lab[v] in used]
    shape = tuple(g.domains[v] for v in g.observed)
    if not ops:
        return np.ones(shape)
    arr = np.einsum(",".join(subs) + "->" + "".join(lab[v] for v in out_vars), *ops, optimize="greedy")
    full = [g.domains[v] if v in out_vars else 1 for v in g.observed]
    return np.broadcast_to(arr.reshape(full), shape).copy()


def term_array(params: FullModelParams, free: Iterable[str], cap: int = DEFAULT_MEMORY_CAP) -> np.ndarray:
    """P_{v\\H}(v) on the full grid, read as a family over the intervened values."""
    g = params.graph
    free = frozenset(free)
    return _latent_sum(params, [v for v in g.observed if v in free], cap=cap)


def interventional(
    params: FullModelParams, t: Mapping[str, int], cap: int = DEFAULT_MEMORY_CAP
) -> DistributionTable:
    """P_t(v) for one intervention value t: truncated product, zero off t."""
    g = params.graph
    unknown = set(t) - set(g.observed)
    if unknown:
        raise ValueError(f"unknown variables {sorted(unknown)}")
    arr = term_array(params, g.V - set(t), cap)
    mask = np.ones(arr.shape, dtype=bool)
    for v, x in t.items():
        ax = g.observed.index(v)
        sel = np.zeros(g.domains[v], dtype=bool)
        sel[int(x)] = True
        shape = [1] * arr.ndim
        shape[ax] = g.domains[v]
        mask &= sel.reshape(shape)
    return table_from_array(g, t.keys(), np.where(mask, arr, 0.0), dict(t))


def all_interventionals(params: FullModelParams, cap: int = DEFAULT_MEMORY_CAP) -> dict[frozenset[str], DistributionTable]:
    """One whole-family table per intervened set T (covers every t in Dm(T))."""
    g = params.graph
    out = {}
    for k in range(len(g.observed) + 1):
        for t in itertools.combinations(g.observed, k):
            inter = frozenset(t)
            out[inter] = table_from_array(g, inter, term_array(params, g.V - inter, cap))
    return out


def all_term_arrays(params: FullModelParams, cap: int = DEFAULT_MEMORY_CAP) -> dict[frozenset[str], np.ndarray]:
    g = params.graph
    return {g.V - t: tab.values for t, tab in all_interventionals(params, cap).items()}


def product_check(params: FullModelParams, ineq) -> np.ndarray:
    """Latent-level product form of an inclusion-exclusion inequality.

    Returns, on the full grid, sum_u prod_{S1} P(v_i|.) prod_{S1'\\S1} (1 - P(v_j|.)) P(u)
    with the observed variables outside S1' left uncounted.
    """
    g = params.graph
    s1, s1p = frozenset(ineq.s1), frozenset(ineq.s1p)
    return _latent_sum(params, [v for v in g.observed if v in s1], [v for v in g.observed if v in s1p - s1])


def export_tables(params: FullModelParams, directory, intervened_sets: Iterable[Iterable[str]] | None = None) -> list:
    """Write family tables in the distribution-file format; returns the paths."""
    from pathlib import Path

    g = params.graph
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    tabs = all_interventionals(params)
    keys = list(tabs) if intervened_sets is None else [frozenset(t) for t in intervened_sets]
    paths = []
    for t in sorted(keys, key=lambda s: (len(s), g.sort(s))):
        name = "obs" if not t else "do_" + "_".join(g.sort(t))
        p = d / f"{name}.dist"
        tabs[t].save(p)
        paths.append(p)
    return paths
