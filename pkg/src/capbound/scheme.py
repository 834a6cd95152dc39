"""Bounding schemes: weighted scan-order terms with periodic colorings.

A scheme term fixes a scan order, a periodic coloring of the plane, one
anchor cell per color, and a weight. For each color the term contributes a
conditional-entropy expression: the anchor cell conditioned on the cells of
the patch that precede it in scan order when the patch is dropped onto any
plane position of that color. The set of preceding in-patch cells must not
depend on which position of the color was chosen; `validate_scheme` checks
exactly that, together with the weight and color-balance requirements.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .lattice import IndexSet, ORDER_KINDS, precedes, rect


class SchemeError(ValueError):
    pass


@dataclass(frozen=True)
class SchemeTerm:
    order: str
    colors: int
    period: tuple[tuple[int, ...], ...]  # rows of the periodic color matrix
    anchors: tuple[tuple[int, int], ...]  # one (a, b) per color, inside the patch
    weight: float

    def __post_init__(self):
        if self.order not in ORDER_KINDS:
            raise SchemeError(f"unknown order {self.order!r}")
        if self.colors < 1:
            raise SchemeError("need at least one color")
        period = tuple(tuple(int(v) for v in row) for row in self.period)
        object.__setattr__(self, "period", period)
        if not period or not period[0]:
            raise SchemeError("period matrix must be non-empty")
        if any(len(row) != len(period[0]) for row in period):
            raise SchemeError("period matrix rows must have equal length")
        if any(v < 1 or v > self.colors for row in period for v in row):
            raise SchemeError("period entries must be colors 1..c")
        anchors = tuple((int(a), int(b)) for a, b in self.anchors)
        object.__setattr__(self, "anchors", anchors)
        if len(anchors) != self.colors:
            raise SchemeError("need exactly one anchor per color")
        if self.weight < 0:
            raise SchemeError("term weight must be non-negative")

    def color_at(self, i: int, j: int) -> int:
        pi, pj = len(self.period), len(self.period[0])
        return self.period[i % pi][j % pj]


@dataclass(frozen=True)
class Scheme:
    r: int
    s: int
    terms: tuple[SchemeTerm, ...]

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if self.r < 1 or self.s < 1:
            raise SchemeError("patch dimensions must be positive")

    def describe(self) -> str:
        parts = []
        for t in self.terms:
            anchors = ";".join(f"{a},{b}" for a, b in t.anchors)
            parts.append(f"{t.order}[{anchors}]x{t.weight:g}")
        return " + ".join(parts)


@dataclass(frozen=True)
class ContextPair:
    """Conditioning context inside the patch and the same set plus anchor."""

    context: IndexSet  # cells the anchor is conditioned on
    joint: IndexSet  # context plus the anchor cell


def simple_scheme(r: int, s: int, t: int) -> Scheme:
    """Single raster-order term, one color, anchor at (r-1, t)."""
    if not 0 <= t < s:
        raise SchemeError(f"anchor column t={t} outside 0..{s - 1}")
    term = SchemeTerm(order="lex", colors=1, period=((1,),), anchors=((r - 1, t),), weight=1.0)
    return Scheme(r=r, s=s, terms=(term,))


def skip_scheme(r: int, s: int, b1: int, b2: int, weight: float = 1.0) -> Scheme:
    """Single skip-order term with the column-parity coloring.

    Anchors sit on the last patch row at columns b1 (even-column color) and
    b2 (odd-column color).
    """
    for b in (b1, b2):
        if not 0 <= b < s:
            raise SchemeError(f"anchor column {b} outside 0..{s - 1}")
    term = SchemeTerm(
        order="skip",
        colors=2,
        period=((1, 2),),
        anchors=((r - 1, b1), (r - 1, b2)),
        weight=weight,
    )
    return Scheme(r=r, s=s, terms=(term,))


def irs_scheme(r: int, s: int, anchor1: tuple[int, int], anchor2: tuple[int, int]) -> Scheme:
    """Single interleaved-raster term with the row-parity coloring."""
    term = SchemeTerm(
        order="irs",
        colors=2,
        period=((1,), (2,)),
        anchors=(tuple(anchor1), tuple(anchor2)),
        weight=1.0,
    )
    return Scheme(r=r, s=s, terms=(term,))


def mixture(r: int, s: int, weighted_terms) -> Scheme:
    """Combine (term, weight) pairs, rescaling each term's weight."""
    terms = []
    for term, w in weighted_terms:
        terms.append(
            SchemeTerm(
                order=term.order,
                colors=term.colors,
                period=term.period,
                anchors=term.anchors,
                weight=float(w),
            )
        )
    return Scheme(r=r, s=s, terms=tuple(terms))


def _context_at(term: SchemeTerm, r: int, s: int, color: int, i: int, j: int) -> IndexSet:
    """Patch cells preceding (i, j) when the patch is placed with the
    color's anchor on (i, j)."""
    a, b = term.anchors[color - 1]
    di, dj = i - a, j - b
    return IndexSet(
        (u, v)
        for u in range(r)
        for v in range(s)
        if precedes(term.order, (u + di, v + dj), (i, j))
    )


def _representative(term: SchemeTerm, color: int) -> tuple[int, int]:
    pi, pj = len(term.period), len(term.period[0])
    for i in range(pi):
        for j in range(pj):
            if term.period[i][j] == color:
                return (i, j)
    raise SchemeError(f"color {color} never occurs in the period matrix")


def derive_contexts(term: SchemeTerm, r: int, s: int) -> list[ContextPair]:
    """Per color: the conditioning context and the context plus anchor."""
    for a, b in term.anchors:
        if not (0 <= a < r and 0 <= b < s):
            raise SchemeError(f"anchor ({a}, {b}) outside the {r}x{s} patch")
    pairs = []
    for color in range(1, term.colors + 1):
        i, j = _representative(term, color)
        context = _context_at(term, r, s, color, i, j)
        anchor = term.anchors[color - 1]
        if anchor in context:
            raise SchemeError("anchor cannot precede itself")
        pairs.append(ContextPair(context=context, joint=context.union(IndexSet([anchor]))))
    return pairs


@dataclass
class SchemeValidation:
    ok: bool
    violations: list[str]


def validate_scheme(scheme: Scheme, weight_tol: float = 1e-12) -> SchemeValidation:
    """Check weights, exact color balance, and placement-independence of the
    per-color context sets over one period plus a margin."""
    violations = []
    total = sum(t.weight for t in scheme.terms)
    if abs(total - 1.0) > weight_tol:
        violations.append(f"weights sum to {total!r}, not 1")

    for k, term in enumerate(scheme.terms):
        flat = [v for row in term.period for v in row]
        counts = [flat.count(c) for c in range(1, term.colors + 1)]
        if len(set(counts)) != 1 or counts[0] == 0:
            violations.append(
                f"term {k}: color counts {counts} in the period are not all equal"
            )
            continue
        try:
            derived = derive_contexts(term, scheme.r, scheme.s)
        except SchemeError as exc:
            violations.append(f"term {k}: {exc}")
            continue
        pi, pj = len(term.period), len(term.period[0])
        # cover every residue class of the coloring and of the built-in
        # orders' parities, plus a margin of two cells
        for i in range(-2, 2 * max(pi, 2) + 2):
            for j in range(-2, 2 * max(pj, 2) + 2):
                color = term.color_at(i, j)
                got = _context_at(term, scheme.r, scheme.s, color, i, j)
                if got != derived[color - 1].context:
                    violations.append(
                        f"term {k}: context at ({i}, {j}) (color {color}) depends"
                        f" on the placement, not only on the color"
                    )
                    break
            else:
                continue
            break

    return SchemeValidation(ok=not violations, violations=violations)


def scheme_to_json(scheme: Scheme) -> dict:
    return {
        "r": scheme.r,
        "s": scheme.s,
        "terms": [
            {
                "order": t.order,
                "rho": t.weight,
                "period": [list(row) for row in t.period],
                "anchors": [list(a) for a in t.anchors],
            }
            for t in scheme.terms
        ],
    }


def scheme_from_json(data: dict) -> Scheme:
    terms = []
    for td in data["terms"]:
        period = tuple(tuple(row) for row in td["period"])
        colors = max(v for row in period for v in row)
        terms.append(
            SchemeTerm(
                order=td["order"],
                colors=colors,
                period=period,
                anchors=tuple(tuple(a) for a in td["anchors"]),
                weight=float(td["rho"]),
            )
        )
    scheme = Scheme(r=int(data["r"]), s=int(data["s"]), terms=tuple(terms))
    if "contexts" in data:
        # explicit context sets, cross-checked against the derivation
        for td, term in zip(data["contexts"], scheme.terms):
            derived = derive_contexts(term, scheme.r, scheme.s)
            for color, cells in enumerate(td, start=1):
                stated = IndexSet(tuple(map(tuple, cells)))
                if stated != derived[color - 1].context:
                    raise SchemeError(
                        f"stated context for color {color} does not match the derivation"
                    )
    return scheme


def load_scheme(path) -> Scheme:
    return scheme_from_json(json.loads(Path(path).read_text()))


def save_scheme(scheme: Scheme, path) -> None:
    Path(path).write_text(json.dumps(scheme_to_json(scheme), indent=2) + "\n")
