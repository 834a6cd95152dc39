"""Concave program assembly: stationarity equalities plus the weighted
conditional-entropy objective over patch probabilities.

The variable vector assigns a probability to every patch. Equality rows come
from: normalization, vertical and horizontal shift-invariance of the
(r-1)-row and (s-1)-column marginals, and, when the constraint declares
them, reflection / complementation identities on single patches and
transposition identities on the top-left square marginal. The objective is
a weighted sum over scheme terms of H(anchor+context) - H(context), computed
from marginal vectors; it is concave in the patch probabilities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .constraint import ConstraintSpec
from .lattice import IndexSet, rect
from .patches import MarginalMap, PatchSet, marginal_map
from .scheme import Scheme, derive_contexts, validate_scheme

LN2 = math.log(2.0)

ROW_TAGS = ("normalization", "vertical", "horizontal", "reflect", "transpose", "complement")


class ProgramError(ValueError):
    pass


@dataclass
class LinearSystem:
    """Sparse equality system A p = b with a provenance tag per row."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    tags: list[str]

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_vars(self) -> int:
        return self.matrix.shape[1]

    def tag_counts(self) -> dict[str, int]:
        counts = {t: 0 for t in ROW_TAGS}
        for t in self.tags:
            counts[t] += 1
        return counts

    def residual(self, p: np.ndarray) -> float:
        if self.n_rows == 0:
            return 0.0
        return float(np.abs(self.matrix @ p - self.rhs).max())


@dataclass
class TermMaps:
    """Marginalization maps and weight for one (term, color) objective part."""

    weight: float  # rho / c for the owning term
    joint_map: MarginalMap  # anchor plus context cells
    context_map: MarginalMap  # context cells only


@dataclass
class ConcaveProgram:
    patchset: PatchSet
    system: LinearSystem
    terms: list[TermMaps]

    def __post_init__(self):
        n = len(self.patchset)
        self._joint_idx = [t.joint_map.group_of.astype(np.intp) for t in self.terms]
        self._ctx_idx = [t.context_map.group_of.astype(np.intp) for t in self.terms]
        self._joint_sizes = [t.joint_map.n_groups for t in self.terms]
        self._ctx_sizes = [t.context_map.n_groups for t in self.terms]
        self._weights = np.array([t.weight for t in self.terms])
        self.n_vars = n

    def marginal_vectors(self, p: np.ndarray):
        """Per term: (joint marginal vector, context marginal vector)."""
        p = np.asarray(p, dtype=float)
        out = []
        for idx_y, idx_z, gy, gz in zip(
            self._joint_idx, self._ctx_idx, self._joint_sizes, self._ctx_sizes
        ):
            out.append(
                (np.bincount(idx_y, weights=p, minlength=gy),
                 np.bincount(idx_z, weights=p, minlength=gz))
            )
        return out


def _xlog2x(v: np.ndarray) -> np.ndarray:
    out = np.zeros_like(v)
    pos = v > 0.0
    out[pos] = v[pos] * (np.log(v[pos]) / LN2)
    return out


def objective_value(prog: ConcaveProgram, p: np.ndarray) -> float:
    """Weighted sum of H(joint) - H(context) marginal entropies, in bits.

    Zero marginals contribute nothing (x log x -> 0). Entries of p must be
    non-negative; normalization is not required here.
    """
    p = np.asarray(p, dtype=float)
    if p.size and p.min() < 0.0:
        raise ProgramError("negative probability entry")
    total = 0.0
    for w, (my, mz) in zip(prog._weights, prog.marginal_vectors(p)):
        total += w * (-_xlog2x(my).sum() + _xlog2x(mz).sum())
    return float(total)


def objective_gradient(prog: ConcaveProgram, p: np.ndarray, clip_eps: float = 1e-12) -> np.ndarray:
    """Exact gradient of objective_value; marginals below clip_eps are
    clipped inside the logarithms only, keeping the gradient finite near the
    boundary of the simplex."""
    p = np.asarray(p, dtype=float)
    g = np.zeros(prog.n_vars)
    for w, idx_y, idx_z, (my, mz) in zip(
        prog._weights, prog._joint_idx, prog._ctx_idx, prog.marginal_vectors(p)
    ):
        ly = np.log(np.maximum(my, clip_eps)) / LN2
        lz = np.log(np.maximum(mz, clip_eps)) / LN2
        g += w * (lz[idx_z] - ly[idx_y])
    return g


def _reflect_vert_ids(ps: PatchSet) -> np.ndarray:
    arr = ps.array.reshape(len(ps), ps.r, ps.s)
    flipped = np.ascontiguousarray(arr[:, ::-1, :]).reshape(len(ps), -1)
    return _lookup_ids(ps, flipped)


def _reflect_horiz_ids(ps: PatchSet) -> np.ndarray:
    arr = ps.array.reshape(len(ps), ps.r, ps.s)
    flipped = np.ascontiguousarray(arr[:, :, ::-1]).reshape(len(ps), -1)
    return _lookup_ids(ps, flipped)


def _complement_ids(ps: PatchSet) -> np.ndarray:
    comp = (ps.alphabet_size - 1) - ps.array
    return _lookup_ids(ps, comp)


def _lookup_ids(ps: PatchSet, rows: np.ndarray) -> np.ndarray:
    """Map transformed patches back to ids; -1 when not a valid patch."""
    out = np.empty(len(rows), dtype=np.int64)
    for i, row in enumerate(np.ascontiguousarray(rows, dtype=np.uint8)):
        out[i] = ps.index.get(row.tobytes(), -1)
    return out


class _RowBuilder:
    """Accumulates deduplicated sparse rows with sign-canonical keys."""

    def __init__(self, n_vars: int):
        self.n_vars = n_vars
        self.rows = []  # (idx array, coef array, rhs)
        self.tags = []
        self._seen = set()

    def add(self, idx, coef, rhs: float, tag: str) -> None:
        idx = np.asarray(idx, dtype=np.int64)
        coef = np.asarray(coef, dtype=float)
        keep = coef != 0.0
        idx, coef = idx[keep], coef[keep]
        if idx.size == 0:
            return  # identity row
        order = np.argsort(idx)
        idx, coef = idx[order], coef[order]
        sign = 1.0
        if coef[0] < 0 or (coef[0] == 0 and rhs < 0):
            sign = -1.0
        key = (idx.tobytes(), (sign * coef).tobytes(), sign * rhs)
        if key in self._seen:
            return
        self._seen.add(key)
        self.rows.append((idx, coef, rhs))
        self.tags.append(tag)

    def add_pair_difference(self, map_a: dict, map_b: dict, tag: str) -> None:
        """Rows sum(map_a[content]) - sum(map_b[content]) = 0 per content."""
        for content in sorted(set(map_a) | set(map_b)):
            counts: dict[int, float] = {}
            for pid in map_a.get(content, ()):
                counts[pid] = counts.get(pid, 0.0) + 1.0
            for pid in map_b.get(content, ()):
                counts[pid] = counts.get(pid, 0.0) - 1.0
            items = sorted(counts.items())
            self.add([i for i, _ in items], [c for _, c in items], 0.0, tag)

    def build(self) -> LinearSystem:
        data, indices, indptr, rhs = [], [], [0], []
        for idx, coef, b in self.rows:
            indices.extend(idx.tolist())
            data.extend(coef.tolist())
            indptr.append(len(indices))
            rhs.append(b)
        matrix = sp.csr_matrix(
            (np.array(data), np.array(indices, dtype=np.int32), np.array(indptr, dtype=np.int32)),
            shape=(len(self.rows), self.n_vars),
        )
        return LinearSystem(matrix=matrix, rhs=np.array(rhs), tags=list(self.tags))


def _groups_by_content(ps: PatchSet, subset: IndexSet) -> dict[bytes, np.ndarray]:
    mm = marginal_map(ps, subset)
    groups = mm.groups()
    return {mm.group_values[g].tobytes(): members for g, members in enumerate(groups)}


def build_linear_system(ps: PatchSet, spec: ConstraintSpec) -> LinearSystem:
    """Normalization, stationarity, and declared-symmetry equality rows."""
    n = len(ps)
    if n == 0:
        raise ProgramError("empty patch set")
    r, s = ps.r, ps.s
    rb = _RowBuilder(n)
    rb.add(np.arange(n), np.ones(n), 1.0, "normalization")

    if r >= 2:
        top = IndexSet((i, j) for i in range(r - 1) for j in range(s))
        bottom = top.shift(1, 0)
        rb.add_pair_difference(
            _groups_by_content(ps, top), _groups_by_content(ps, bottom), "vertical"
        )
    if s >= 2:
        left = IndexSet((i, j) for i in range(r) for j in range(s - 1))
        right = left.shift(0, 1)
        rb.add_pair_difference(
            _groups_by_content(ps, left), _groups_by_content(ps, right), "horizontal"
        )

    if "reflect" in spec.symmetry:
        for mapped in (_reflect_vert_ids(ps), _reflect_horiz_ids(ps)):
            _add_involution_rows(rb, mapped, "reflect")
    if "complement" in spec.symmetry:
        _add_involution_rows(rb, _complement_ids(ps), "complement")
    if "transpose" in spec.symmetry:
        m = min(r, s)
        square = rect(m, m)
        mm = marginal_map(ps, square)
        groups = mm.groups()
        content_to_group = {mm.group_values[g].tobytes(): g for g in range(mm.n_groups)}
        for g in range(mm.n_groups):
            chi = mm.group_values[g].reshape(m, m)
            tau = np.ascontiguousarray(chi.T)
            if np.array_equal(chi, tau):
                continue
            other = content_to_group.get(tau.tobytes())
            counts: dict[int, float] = {}
            for pid in groups[g]:
                counts[pid] = counts.get(pid, 0.0) + 1.0
            if other is not None:
                for pid in groups[other]:
                    counts[pid] = counts.get(pid, 0.0) - 1.0
            items = sorted(counts.items())
            rb.add([i for i, _ in items], [c for _, c in items], 0.0, "transpose")

    return rb.build()


def _add_involution_rows(rb: _RowBuilder, mapped: np.ndarray, tag: str) -> None:
    """Rows p_x = p_{T(x)} for an involution T on patch ids; when T(x) falls
    outside the patch set, x cannot occur in any invariant distribution and
    is pinned to zero."""
    for x, y in enumerate(mapped):
        y = int(y)
        if y == x:
            continue
        if y < 0:
            rb.add([x], [1.0], 0.0, tag)
        elif x < y:
            rb.add([x, y], [1.0, -1.0], 0.0, tag)


def assemble_program(
    ps: PatchSet, spec: ConstraintSpec, scheme: Scheme, system: LinearSystem | None = None
) -> ConcaveProgram:
    """Build the equality system plus per-(term, color) marginal maps.

    A prebuilt system for the same patch set may be passed in; scheme sweeps
    share it since the rows do not depend on the scheme.
    """
    if (scheme.r, scheme.s) != (ps.r, ps.s):
        raise ProgramError(
            f"scheme is for a {scheme.r}x{scheme.s} patch, patches are {ps.r}x{ps.s}"
        )
    check = validate_scheme(scheme)
    if not check.ok:
        raise ProgramError("invalid scheme: " + "; ".join(check.violations))

    if system is None:
        system = build_linear_system(ps, spec)
    terms: list[TermMaps] = []
    for term in scheme.terms:
        pairs = derive_contexts(term, scheme.r, scheme.s)
        for pair in pairs:
            terms.append(
                TermMaps(
                    weight=term.weight / term.colors,
                    joint_map=marginal_map(ps, pair.joint),
                    context_map=marginal_map(ps, pair.context),
                )
            )
    return ConcaveProgram(patchset=ps, system=system, terms=terms)
