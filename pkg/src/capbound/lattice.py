"""Grid index sets, configurations, scan orders, and entropy helpers.

Cells are (i, j) integer pairs with i the row (growing downwards) and j the
column. All operations are pure; IndexSet and Configuration are immutable
and hashable, so they are safe to share across threads.
"""

from __future__ import annotations

import math
from typing import Iterable, Mapping

import numpy as np

LN2 = math.log(2.0)

# order_compare outcomes
PRECEDES = -1
EQUAL = 0
SUCCEEDS = 1

ORDER_KINDS = ("lex", "irs", "skip")


class IndexSet:
    """Finite set of grid cells, canonically ordered by (row, column)."""

    __slots__ = ("cells", "_members")

    def __init__(self, cells: Iterable[tuple[int, int]] = ()):
        self.cells = tuple(sorted({(int(i), int(j)) for i, j in cells}))
        self._members = frozenset(self.cells)

    def __len__(self) -> int:
        return len(self.cells)

    def __iter__(self):
        return iter(self.cells)

    def __contains__(self, cell) -> bool:
        return cell in self._members

    def __eq__(self, other) -> bool:
        return isinstance(other, IndexSet) and self.cells == other.cells

    def __hash__(self) -> int:
        return hash(self.cells)

    def __repr__(self) -> str:
        return f"IndexSet({list(self.cells)})"

    def shift(self, alpha: int, beta: int) -> "IndexSet":
        return IndexSet((i + alpha, j + beta) for i, j in self.cells)

    def union(self, other: "IndexSet") -> "IndexSet":
        return IndexSet(self.cells + other.cells)

    def intersection(self, other: "IndexSet") -> "IndexSet":
        return IndexSet(c for c in self.cells if c in other)

    def issubset(self, other: "IndexSet") -> bool:
        return self._members <= other._members


def rect(r: int, s: int) -> IndexSet:
    """The r-by-s rectangle anchored at the origin."""
    return IndexSet((i, j) for i in range(r) for j in range(s))


def padded_rect(r: int, s: int, delta: int) -> IndexSet:
    """The r-by-s rectangle enlarged by delta rows/columns on every side."""
    return rect(r + 2 * delta, s + 2 * delta).shift(-delta, -delta)


class Configuration:
    """Assignment of an alphabet symbol to every cell of a finite support."""

    __slots__ = ("support", "values")

    def __init__(self, support: IndexSet, values):
        """values may be a mapping cell -> symbol or a sequence aligned with
        the canonical cell order of the support."""
        self.support = support
        if isinstance(values, Mapping):
            if set(values.keys()) != set(support.cells):
                raise ValueError("values must cover exactly the support cells")
            self.values = tuple(int(values[c]) for c in support.cells)
        else:
            vals = tuple(int(v) for v in values)
            if len(vals) != len(support):
                raise ValueError("values length does not match support size")
            self.values = vals

    @classmethod
    def from_rows(cls, rows) -> "Configuration":
        """Build a rectangular configuration at the origin from nested rows."""
        arr = np.asarray(rows, dtype=int)
        if arr.ndim != 2:
            raise ValueError("from_rows expects a 2-D array of symbols")
        r, s = arr.shape
        return cls(rect(r, s), arr.reshape(-1))

    def __getitem__(self, cell) -> int:
        try:
            pos = self.support.cells.index(cell)
        except ValueError:
            raise KeyError(f"cell {cell} outside support") from None
        return self.values[pos]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Configuration)
            and self.support == other.support
            and self.values == other.values
        )

    def __hash__(self) -> int:
        return hash((self.support, self.values))

    def __repr__(self) -> str:
        pairs = ", ".join(f"{c}:{v}" for c, v in zip(self.support.cells, self.values))
        return f"Configuration({pairs})"

    def mapping(self) -> dict:
        return dict(zip(self.support.cells, self.values))

    def shift(self, alpha: int, beta: int) -> "Configuration":
        moved = self.support.shift(alpha, beta)
        # canonical order is preserved under shifting, so values carry over
        return Configuration(moved, self.values)

    def restrict(self, v: IndexSet) -> "Configuration":
        if not v.issubset(self.support):
            raise ValueError("restriction target is not a subset of the support")
        m = self.mapping()
        return Configuration(v, tuple(m[c] for c in v.cells))


def shift(obj, alpha: int, beta: int):
    """Shift an IndexSet or Configuration by (alpha, beta)."""
    return obj.shift(alpha, beta)


def restrict(w: Configuration, v: IndexSet) -> Configuration:
    """Restrict configuration w to the index set v (must be inside support)."""
    return w.restrict(v)


def _cmp_lex(p, q) -> int:
    if p == q:
        return EQUAL
    return PRECEDES if p < q else SUCCEEDS


def _cmp_irs(p, q) -> int:
    # rows are scanned even-first, then ordinary raster inside each parity class
    (i1, j1), (i2, j2) = p, q
    if p == q:
        return EQUAL
    k1 = (i1 % 2, i1, j1)
    k2 = (i2 % 2, i2, j2)
    return PRECEDES if k1 < k2 else SUCCEEDS


def _cmp_skip(p, q) -> int:
    # inside a row, even columns come before odd columns
    (i1, j1), (i2, j2) = p, q
    if p == q:
        return EQUAL
    k1 = (i1, j1 % 2, j1)
    k2 = (i2, j2 % 2, j2)
    return PRECEDES if k1 < k2 else SUCCEEDS


_COMPARATORS = {"lex": _cmp_lex, "irs": _cmp_irs, "skip": _cmp_skip}


def order_compare(kind: str, p: tuple[int, int], q: tuple[int, int]) -> int:
    """Compare two cells under a built-in strict total order.

    Returns PRECEDES (-1), EQUAL (0) or SUCCEEDS (+1).
    """
    try:
        cmp = _COMPARATORS[kind]
    except KeyError:
        raise ValueError(f"unknown order {kind!r}; expected one of {ORDER_KINDS}") from None
    return cmp(tuple(p), tuple(q))


def precedes(kind: str, p, q) -> bool:
    return order_compare(kind, p, q) == PRECEDES


def window_predecessors(kind: str, window: IndexSet, p: tuple[int, int]) -> IndexSet:
    """All cells of the window that strictly precede p under the given order."""
    return IndexSet(q for q in window if precedes(kind, q, p))


def entropy(dist) -> float:
    """Shannon entropy in bits of a probability vector.

    Entries must be non-negative and sum to 1 within 1e-9; zero entries
    contribute nothing.
    """
    d = np.asarray(dist, dtype=float).reshape(-1)
    if d.size and d.min() < 0.0:
        raise ValueError("negative probability entry")
    total = d.sum()
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"probabilities sum to {total!r}, not 1")
    pos = d[d > 0.0]
    return float(-(pos * (np.log(pos) / LN2)).sum())
