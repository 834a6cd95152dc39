"""Stripe baseline: normalized dominant eigenvalue of a width-N transfer graph.

Restricting a 2-D constraint to stripes of a fixed width N and dropping the
constraints between stripes leaves a 1-D constraint whose growth rate
upper-bounds the 2-D capacity. Vertices of the transfer graph are the valid
h-by-N blocks, where h is one less than the tallest forbidden window (at
least 1), so edges capture every vertical rule exactly; the bound is
(1/N) log2 of the Perron eigenvalue of the adjacency matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .constraint import ConstraintSpec
from .patches import PatchSet, enumerate_patches

DEFAULT_VERTEX_BUDGET = 2_000_000


class StripeError(RuntimeError):
    pass


@dataclass
class TransferGraph:
    spec_digest: str
    width: int
    height: int  # rows per vertex block
    vertices: PatchSet
    adjacency: sp.csr_matrix

    @property
    def n_vertices(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.nnz)


def memory_height(spec: ConstraintSpec) -> int:
    """Vertical memory: tallest forbidden window minus one, at least 1."""
    return max(1, spec.max_window_height() - 1)


def build_transfer_graph(
    spec: ConstraintSpec, N: int, vertex_budget: int = DEFAULT_VERTEX_BUDGET
) -> TransferGraph:
    """Vertices are valid h-by-N blocks; u -> v when u's last h-1 rows equal
    v's first h-1 rows and the stacked (h+1)-by-N block is valid."""
    if N < 1:
        raise ValueError("stripe width must be positive")
    h = memory_height(spec)
    would_be = spec.alphabet_size ** (h * N)
    if would_be > vertex_budget:
        raise StripeError(
            f"transfer graph would need up to {would_be} vertices"
            f" (budget {vertex_budget})"
        )
    vertices = enumerate_patches(spec, h, N, 0)
    n = len(vertices)
    arr = vertices.array.reshape(n, h, N)

    # group candidate successors by their leading h-1 rows
    by_head: dict[bytes, list[int]] = {}
    for idx in range(n):
        by_head.setdefault(arr[idx, : h - 1, :].tobytes(), []).append(idx)

    from .lattice import Configuration, rect
    from .constraint import is_valid

    stacked_window = rect(h + 1, N)
    rows_i, cols_j = [], []
    for u in range(n):
        tail = arr[u, 1:, :].tobytes()
        for v in by_head.get(tail, ()):
            block = np.concatenate([arr[u], arr[v, -1:, :]], axis=0)
            if is_valid(spec, Configuration(stacked_window, block.reshape(-1))):
                rows_i.append(u)
                cols_j.append(v)
    adjacency = sp.csr_matrix(
        (np.ones(len(rows_i)), (rows_i, cols_j)), shape=(n, n)
    )
    return TransferGraph(
        spec_digest=spec.digest(),
        width=N,
        height=h,
        vertices=vertices,
        adjacency=adjacency,
    )


@dataclass
class PerronResult:
    value: float
    residual: float
    iterations: int
    component_size: int


def _power_iteration(
    A: sp.csr_matrix, tol: float, max_iter: int, residual_tol: float = 1e-10
) -> PerronResult:
    """Dominant eigenvalue of an irreducible non-negative matrix via power
    iteration on A + I (primitive, so convergence is geometric). Converged
    when the Rayleigh quotient settles and the eigen-residual is small."""
    m = A.shape[0]
    v = np.full(m, 1.0 / math.sqrt(m))
    lam = 0.0
    residual = np.inf
    for it in range(1, max_iter + 1):
        w = A @ v + v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return PerronResult(0.0, 0.0, it, m)
        w /= norm
        new_lam = float(w @ (A @ w))
        settled = abs(new_lam - lam) <= tol * max(1.0, abs(new_lam))
        v = w
        lam = new_lam
        if settled:
            residual = float(np.abs(A @ v - lam * v).max() / np.abs(v).max())
            if residual <= residual_tol:
                break
    if not np.isfinite(residual):
        residual = float(np.abs(A @ v - lam * v).max() / np.abs(v).max())
    return PerronResult(lam, residual, it, m)


def perron_eigenvalue(graph_or_matrix, tol: float = 1e-12, max_iter: int = 500_000) -> float:
    return perron_details(graph_or_matrix, tol=tol, max_iter=max_iter).value


def perron_details(graph_or_matrix, tol: float = 1e-12, max_iter: int = 500_000) -> PerronResult:
    """Largest eigenvalue over the strongly connected components.

    The spectrum of a block-triangular matrix is the union of its diagonal
    blocks', so the maximum over components is the Perron eigenvalue of the
    whole graph. Empty graphs report eigenvalue 0.
    """
    if isinstance(graph_or_matrix, TransferGraph):
        A = graph_or_matrix.adjacency
    else:
        A = sp.csr_matrix(np.asarray(graph_or_matrix, dtype=float)) if not sp.issparse(
            graph_or_matrix
        ) else sp.csr_matrix(graph_or_matrix)
    m = A.shape[0]
    if m == 0:
        raise ValueError("empty graph")
    if A.nnz == 0:
        return PerronResult(0.0, 0.0, 0, m)
    n_comp, labels = connected_components(A, directed=True, connection="strong")
    best = PerronResult(0.0, 0.0, 0, 0)
    for comp in range(n_comp):
        members = np.flatnonzero(labels == comp)
        sub = A[members][:, members]
        if len(members) == 1 and sub.nnz == 0:
            continue
        res = _power_iteration(sp.csr_matrix(sub), tol, max_iter)
        if res.value > best.value:
            best = res
    return best


@dataclass
class StripeReport:
    bound: float
    eigenvalue: float
    residual: float
    width: int
    height: int
    n_vertices: int
    n_edges: int


def stripe_upper_bound(spec: ConstraintSpec, N: int) -> float:
    """(1/N) log2 of the transfer-graph Perron eigenvalue, in bits/symbol."""
    return stripe_report(spec, N).bound


def stripe_report(spec: ConstraintSpec, N: int) -> StripeReport:
    graph = build_transfer_graph(spec, N)
    res = perron_details(graph)
    if res.value <= 0.0:
        bound = -math.inf
    else:
        bound = math.log2(res.value) / N
    return StripeReport(
        bound=bound,
        eigenvalue=res.value,
        residual=res.residual,
        width=N,
        height=graph.height,
        n_vertices=graph.n_vertices,
        n_edges=graph.n_edges,
    )
