"""Dense distribution tables and their line-oriented file format.

A table holds P_{v\\H}(v) for every full instantiation v of the observed
variables: the value at v is the interventional probability of v's free part
under the intervention fixing the intervened part to v's values. Tables for a
single intervention value (``fixed``) are zero off that value.

File grammar (``#`` starts a comment, blank lines ignored)::

    intervened: W1,W2,Y          # or OBS
    variables: W1:2 X:2 W2:2 Y:2 Z:2
    fixed: W1=0,W2=1,Y=0         # optional
    values:
    0.03125
    ...                          # one number per line, row-major
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .graph import CausalGraph


class TableFormatError(ValueError):
    def __init__(self, msg: str, line: int | None = None, source: str = "<table>"):
        self.line = line
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {msg}")


@dataclass
class DistributionTable:
    variables: tuple[str, ...]
    sizes: tuple[int, ...]
    intervened: frozenset[str]
    values: np.ndarray
    fixed: dict[str, int] | None = None
    label: str = field(default="", compare=False)

    def __post_init__(self):
        self.variables = tuple(self.variables)
        self.sizes = tuple(int(s) for s in self.sizes)
        self.intervened = frozenset(self.intervened)
        self.values = np.asarray(self.values, dtype=float).reshape(self.sizes)
        if self.fixed is not None:
            self.fixed = {k: int(v) for k, v in self.fixed.items()}

    @property
    def free(self) -> frozenset[str]:
        return frozenset(self.variables) - self.intervened

    def problems(self, tol: float = 1e-9) -> list[str]:
        out = []
        if len(set(self.variables)) != len(self.variables):
            out.append("duplicate variable names")
        if not self.intervened <= set(self.variables):
            out.append(f"intervened variables {sorted(self.intervened - set(self.variables))} not declared")
        if self.values.size and (self.values.min() < -tol or self.values.max() > 1 + tol):
            out.append("entries outside [0, 1]")
        if not np.all(np.isfinite(self.values)):
            out.append("non-finite entries")
        if out:
            return out
        free_axes = tuple(i for i, v in enumerate(self.variables) if v not in self.intervened)
        if self.fixed is None:
            sums = self.values.sum(axis=free_axes) if free_axes else self.values
            if np.abs(sums - 1).max(initial=0) > tol:
                out.append(
                    f"entries over the free variables sum to {float(sums.min()):.12g}..{float(sums.max()):.12g}, not 1"
                )
        else:
            if set(self.fixed) != set(self.intervened):
                out.append("fixed assignment must cover exactly the intervened variables")
                return out
            mask = self._fixed_mask()
            if np.abs(self.values[~mask]).max(initial=0) > tol:
                out.append("nonzero entries inconsistent with the fixed intervention")
            if abs(self.values.sum() - 1) > tol:
                out.append(f"entries sum to {self.values.sum():.12g}, not 1")
        return out

    def _fixed_mask(self) -> np.ndarray:
        mask = np.ones(self.sizes, dtype=bool)
        for i, v in enumerate(self.variables):
            if v in (self.fixed or {}):
                keep = np.zeros(self.sizes[i], dtype=bool)
                keep[self.fixed[v]] = True
                shape = [1] * len(self.sizes)
                shape[i] = self.sizes[i]
                mask &= keep.reshape(shape)
        return mask

    def checked(self, tol: float = 1e-9) -> DistributionTable:
        bad = self.problems(tol)
        if bad:
            raise TableFormatError("; ".join(bad), source=self.label or "<table>")
        return self

    def aligned(self, g: CausalGraph) -> np.ndarray:
        """Values with axes in the graph's observed-variable order."""
        if set(self.variables) != set(g.observed):
            raise TableFormatError(
                f"table variables {sorted(self.variables)} differ from graph variables {sorted(g.observed)}",
                source=self.label or "<table>",
            )
        for v, s in zip(self.variables, self.sizes):
            if g.domains[v] != s:
                raise TableFormatError(f"{v} has {s} values here but {g.domains[v]} in the graph", source=self.label or "<table>")
        perm = [self.variables.index(v) for v in g.observed]
        return np.transpose(self.values, perm)

    # -- text format -----------------------------------------------------------

    def to_text(self) -> str:
        lines = [f"intervened: {','.join(v for v in self.variables if v in self.intervened) or 'OBS'}"]
        lines.append("variables: " + " ".join(f"{v}:{s}" for v, s in zip(self.variables, self.sizes)))
        if self.fixed is not None and self.fixed:
            lines.append("fixed: " + ",".join(f"{v}={self.fixed[v]}" for v in self.variables if v in self.fixed))
        lines.append("values:")
        lines += [repr(float(x)) for x in self.values.ravel()]
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str, source: str = "<table>") -> DistributionTable:
        header: dict[str, tuple[str, int]] = {}
        values: list[float] = []
        in_values = False
        for no, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if in_values:
                try:
                    values.append(float(line))
                except ValueError:
                    raise TableFormatError(f"expected a number, found {line!r}", no, source) from None
                continue
            key, sep, rest = line.partition(":")
            key = key.strip().lower()
            if not sep:
                raise TableFormatError(f"expected 'key: value', found {line!r}", no, source)
            if key == "values":
                in_values = True
                if rest.strip():
                    raise TableFormatError("values start on the line after 'values:'", no, source)
                continue
            if key not in ("intervened", "variables", "fixed"):
                raise TableFormatError(f"unknown header field {key!r}", no, source)
            if key in header:
                raise TableFormatError(f"duplicate header field {key!r}", no, source)
            header[key] = (rest.strip(), no)
        for need in ("intervened", "variables"):
            if need not in header:
                raise TableFormatError(f"missing header field {need!r}", None, source)
        names, sizes = [], []
        text_vars, no = header["variables"]
        for item in text_vars.split():
            n, sep, s = item.partition(":")
            if not sep or not s.isdigit():
                raise TableFormatError(f"variables entry {item!r} should look like NAME:SIZE", no, source)
            names.append(n)
            sizes.append(int(s))
        text_int, no = header["intervened"]
        intervened = frozenset() if text_int.upper() in ("OBS", "") else frozenset(x.strip() for x in text_int.split(","))
        unknown = intervened - set(names)
        if unknown:
            raise TableFormatError(f"intervened names unknown variables {sorted(unknown)}", no, source)
        fixed = None
        if "fixed" in header:
            text_fix, no = header["fixed"]
            fixed = {}
            for item in text_fix.split(","):
                n, sep, x = item.strip().partition("=")
                if not sep or not x.strip().isdigit():
                    raise TableFormatError(f"fixed entry {item!r} should look like NAME=VALUE", no, source)
                fixed[n.strip()] = int(x)
        expect = int(np.prod(sizes, dtype=np.int64))
        if len(values) != expect:
            raise TableFormatError(f"expected {expect} values, found {len(values)}", None, source)
        return DistributionTable(tuple(names), tuple(sizes), intervened, np.array(values), fixed, label=source)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())

    @staticmethod
    def load(path: str | Path) -> DistributionTable:
        p = Path(path)
        return DistributionTable.from_text(p.read_text(), source=str(p))


def family_arrays(g: CausalGraph, tables: Iterable[DistributionTable], tol: float = 1e-9) -> dict[frozenset[str], np.ndarray]:
    """Whole-family arrays keyed by free set.

    Single-value tables sharing an intervened set are merged, and only used
    once every value of the intervened variables is covered.
    """
    out: dict[frozenset[str], np.ndarray] = {}
    partial: dict[frozenset[str], list[DistributionTable]] = {}
    for t in tables:
        t.checked(tol)
        arr = t.aligned(g)
        if t.fixed is None:
            out[g.V - t.intervened] = arr
        else:
            partial.setdefault(t.intervened, []).append(t)
    for inter, group in partial.items():
        free = g.V - inter
        if free in out:
            continue
        seen = {tuple(sorted(t.fixed.items())) for t in group}
        need = int(np.prod([g.domains[v] for v in inter], dtype=np.int64))
        if len(seen) == need:
            out[free] = sum(t.aligned(g) for t in {tuple(sorted(t.fixed.items())): t for t in group}.values())
    return out


def table_from_array(g: CausalGraph, intervened: Iterable[str], arr: np.ndarray, fixed: Mapping[str, int] | None = None) -> DistributionTable:
    return DistributionTable(g.observed, [g.domains[v] for v in g.observed], frozenset(intervened), arr, dict(fixed) if fixed is not None else None)
