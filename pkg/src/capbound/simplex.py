"""Dense-basis revised simplex for equality-form linear programs.

Solves max c.x subject to A x = b, x >= 0. Phase 1 starts from an
all-artificial identity basis and drives the infeasibility to zero;
redundant rows (those whose artificial cannot be pivoted out) are removed.
Phase 2 prices with Dantzig's rule and falls back to Bland's rule after a
run of degenerate pivots. Rows are equilibrated to unit max-norm and the
ratio test is the two-pass Harris variant, which prefers numerically large
pivots; the basis inverse is maintained by pivot outer-products and rebuilt
periodically from scratch to control drift.

The stationarity polytopes this solver exists for are extremely degenerate
(one inhomogeneous row, everything else homogeneous), which makes naive
simplex paths crawl. A core may therefore be built with a deterministic
right-hand-side perturbation lying in the column space of A, which keeps
feasibility intact while making vertices generically non-degenerate. Every
solve also reports a dual vector together with its value against the
*unperturbed* right-hand side and the measured dual infeasibility; by weak
duality,

    max { c.x : A x = b_true, x >= 0 }  <=  y.b_true + dual_slack * |x|_1,

so callers can certify bounds over the true polytope no matter how the
iterates were steered. The basis survives between calls with different
objectives, which makes the repeated linear subproblems of
conditional-gradient loops cheap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_FAILURE = "numerical-failure"


@dataclass
class LPProblem:
    """max c.x  s.t.  A x = b, x >= 0."""

    c: np.ndarray
    A: sp.spmatrix
    b: np.ndarray


@dataclass
class LPResult:
    status: str
    value: float
    x: np.ndarray | None
    pivots: int
    residual: float
    # dual certificate pieces (valid for the unperturbed right-hand side)
    y: np.ndarray | None = None
    dual_value: float = np.nan
    dual_slack: float = np.nan


def _weyl_pattern(m: int) -> np.ndarray:
    """Deterministic factors in [1, 2) (Weyl sequence)."""
    idx = np.arange(1, m + 1, dtype=np.float64)
    return 1.0 + np.modf(idx * 0.6180339887498949)[0]


class SimplexCore:
    """Reusable simplex state over a fixed feasible region."""

    def __init__(
        self,
        A,
        b,
        tol: float = 1e-9,
        refactor_every: int = 128,
        stall_limit: int = 500,
        max_pivots: int | None = None,
        perturb: float = 0.0,
    ):
        A = sp.csr_matrix(A, dtype=float)
        b = np.asarray(b, dtype=float).copy()
        # equilibrate rows to unit max-norm (pure row rescaling; same polytope)
        row_max = np.maximum.reduceat(
            np.abs(A.data), A.indptr[:-1], dtype=float
        ) if A.nnz else np.ones(A.shape[0])
        row_max = np.where(np.diff(A.indptr) > 0, row_max, 1.0)
        scale = 1.0 / row_max
        A = sp.csc_matrix(sp.diags(scale) @ A)
        b = b * scale
        flip = b < 0
        if flip.any():
            sgn = np.ones(len(b))
            sgn[flip] = -1.0
            A = sp.csc_matrix(sp.diags(sgn) @ A)
            b = b * sgn
        self.A = A
        self.AT = sp.csr_matrix(A.T)
        self.m, self.n = A.shape
        self.b_true = b
        self.perturb = float(perturb)
        if perturb > 0.0 and self.m:
            # shift inside the column space: the polytope becomes
            # {q >= 0 : A q = A (q0 + eps w)}, non-empty whenever the
            # original is, and generically free of degenerate vertices
            shift = A @ _weyl_pattern(self.n)
            smax = float(np.abs(shift).max())
            self.b = b + (perturb / smax) * shift if smax > 0 else b.copy()
        else:
            self.b = b.copy()
        self.tol = tol
        self.refactor_every = refactor_every
        self.stall_limit = stall_limit
        self.max_pivots = max_pivots if max_pivots is not None else 200 * (self.m + self.n) + 1000

        self.basis: np.ndarray | None = None  # var ids; id >= n means artificial
        self.x_basic: np.ndarray | None = None
        self.binv: np.ndarray | None = None
        self._pivots_since_refactor = 0
        self.total_pivots = 0
        # devex reference weights persist across solves so warm calls keep
        # their pricing memory
        self._devex = np.ones(self.n + self.m)

    # -- basis linear algebra ------------------------------------------------

    def _column(self, j: int) -> np.ndarray:
        col = np.zeros(self.m)
        if j >= self.n:
            col[j - self.n] = 1.0
        else:
            lo, hi = self.A.indptr[j], self.A.indptr[j + 1]
            col[self.A.indices[lo:hi]] = self.A.data[lo:hi]
        return col

    def _ftran(self, j: int) -> np.ndarray:
        """binv @ (column j), using the column's sparsity."""
        if j >= self.n:
            return self.binv[:, j - self.n].copy()
        lo, hi = self.A.indptr[j], self.A.indptr[j + 1]
        idx = self.A.indices[lo:hi]
        vals = self.A.data[lo:hi]
        return self.binv[:, idx] @ vals

    def _refactor(self) -> bool:
        B = np.zeros((self.m, self.m))
        for pos, j in enumerate(self.basis):
            B[:, pos] = self._column(int(j))
        try:
            self.binv = np.linalg.inv(B)
        except np.linalg.LinAlgError:
            return False
        self.x_basic = self.binv @ self.b
        np.clip(self.x_basic, 0.0, None, out=self.x_basic)
        self._pivots_since_refactor = 0
        return True

    def _pivot(self, enter: int, leave_pos: int, d: np.ndarray, theta: float) -> None:
        self.x_basic -= theta * d
        self.x_basic[leave_pos] = theta
        np.clip(self.x_basic, 0.0, None, out=self.x_basic)
        self.basis[leave_pos] = enter
        piv_row = self.binv[leave_pos] / d[leave_pos]
        d_other = d.copy()
        d_other[leave_pos] = 0.0
        self.binv -= np.outer(d_other, piv_row)
        self.binv[leave_pos] = piv_row
        self.total_pivots += 1
        self._pivots_since_refactor += 1
        if self._pivots_since_refactor >= self.refactor_every:
            self._refactor()

    # -- pivot selection -----------------------------------------------------

    def _reduced_costs(self, c_full: np.ndarray) -> np.ndarray:
        y = self.binv.T @ c_full[self.basis]
        z = np.empty(self.n + self.m)
        z[: self.n] = c_full[: self.n] - self.AT @ y
        z[self.n :] = c_full[self.n :] - y
        return z

    def _ratio_leave_harris(self, d: np.ndarray) -> int | None:
        """Two-pass Harris ratio test: bound the step with a small
        feasibility slack, then take the numerically largest pivot among the
        rows that stay within the bound."""
        pos = np.flatnonzero(d > self.tol)
        if pos.size == 0:
            return None
        slack = 1e-9
        bound = float(np.min((self.x_basic[pos] + slack) / d[pos]))
        cand = pos[self.x_basic[pos] / d[pos] <= bound]
        return int(cand[np.argmax(d[cand])])

    def _ratio_leave_bland(self, d: np.ndarray) -> int | None:
        pos = np.flatnonzero(d > self.tol)
        if pos.size == 0:
            return None
        ratios = self.x_basic[pos] / d[pos]
        best = ratios.min()
        ties = pos[ratios <= best + 1e-12 * (1.0 + abs(best))]
        return int(ties[np.argmin(self.basis[ties])])

    def _iterate(self, c_full: np.ndarray, pricing_tol: float | None = None) -> str:
        """Pivot to optimality: Devex pricing (approximate steepest edge),
        Harris ratio test, Bland fallback after a degenerate stall."""
        tol = (pricing_tol if pricing_tol is not None else self.tol) * (
            1.0 + float(np.abs(c_full).max(initial=0.0))
        )
        bland = False
        stall = 0
        pivots = 0
        explosion_guard = 1e6 * (1.0 + float(np.abs(self.b).max(initial=0.0)))
        devex = self._devex
        while True:
            if pivots >= self.max_pivots:
                return NUMERICAL_FAILURE
            z = self._reduced_costs(c_full)
            z[self.basis] = 0.0
            z[self.n :] = 0.0  # artificials never re-enter
            candidates = np.flatnonzero(z > tol)
            if candidates.size == 0:
                return OPTIMAL
            if bland:
                enter = int(candidates[0])
                d = self._ftran(enter)
                leave_pos = self._ratio_leave_bland(d)
            else:
                scores = z[candidates] ** 2 / devex[candidates]
                enter = int(candidates[np.argmax(scores)])
                d = self._ftran(enter)
                leave_pos = self._ratio_leave_harris(d)
            if leave_pos is None:
                return UNBOUNDED
            theta = float(max(self.x_basic[leave_pos] / d[leave_pos], 0.0))
            # devex reference-weight update from the pivot row
            alpha = self.AT @ self.binv[leave_pos]
            piv = d[leave_pos]
            gamma_q = max(devex[enter], 1.0)
            ratio2 = (alpha / piv) ** 2 * gamma_q
            np.maximum(devex[: self.n], ratio2, out=devex[: self.n])
            devex[self.basis[leave_pos]] = max(gamma_q / piv**2, 1.0)
            if devex.max() > 1e12:
                devex[:] = 1.0
            self._pivot(enter, leave_pos, d, theta)
            pivots += 1
            if not np.isfinite(self.x_basic).all() or self.x_basic.max() > explosion_guard:
                # basis inverse went bad; rebuild and continue
                if not self._refactor():
                    return NUMERICAL_FAILURE
            if theta <= 1e-12:
                stall += 1
                if stall > self.stall_limit:
                    bland = True
            else:
                stall = 0
                bland = False

    def _phase_one(self) -> str:
        self.basis = self.n + np.arange(self.m, dtype=np.int64)
        self.binv = np.eye(self.m)
        self.x_basic = self.b.copy()
        self._pivots_since_refactor = 0
        c_full = np.zeros(self.n + self.m)
        c_full[self.n :] = -1.0
        status = self._iterate(c_full)
        if status == NUMERICAL_FAILURE:
            return status
        # judge feasibility from a freshly factorized state, not the
        # incrementally updated one, so pivot drift cannot masquerade as
        # infeasibility
        self._refactor()
        infeas = float(self.x_basic[self.basis >= self.n].sum()) if self.m else 0.0
        if infeas > 1e-8 * (1.0 + float(np.abs(self.b).max(initial=0.0))):
            return INFEASIBLE
        self._drive_out_artificials()
        return OPTIMAL

    def _drive_out_artificials(self) -> None:
        """Pivot basic artificials onto real columns; rows that admit no such
        pivot are linearly dependent on the rest and get removed."""
        redundant = []
        for pos in range(self.m):
            if self.basis[pos] < self.n:
                continue
            row = self.AT @ self.binv[pos]
            row[self.basis[self.basis < self.n]] = 0.0
            cand = np.flatnonzero(np.abs(row) > 1e-7)
            if cand.size:
                enter = int(cand[np.argmax(np.abs(row[cand]))])
                d = self._ftran(enter)
                if abs(d[pos]) > 1e-9:
                    self._pivot(enter, pos, d, float(max(self.x_basic[pos] / d[pos], 0.0)))
                    continue
            redundant.append(pos)
        if redundant:
            keep = np.ones(self.m, dtype=bool)
            keep[redundant] = False
            keep_idx = np.flatnonzero(keep)
            self.A = sp.csc_matrix(sp.csr_matrix(self.A)[keep_idx])
            self.AT = sp.csr_matrix(self.A.T)
            self.b = self.b[keep_idx]
            self.b_true = self.b_true[keep_idx]
            self.m = len(keep_idx)
            self.basis = np.array(
                [v for pos, v in enumerate(self.basis) if keep[pos]], dtype=np.int64
            )
            self.max_pivots = 200 * (self.m + self.n) + 1000
            if not self._refactor():
                raise RuntimeError("basis became singular after dropping redundant rows")

    # -- public interface ----------------------------------------------------

    def ensure_feasible(self) -> str:
        if self.basis is None:
            status = self._phase_one()
            if status != OPTIMAL:
                self.basis = None
                return status
        return OPTIMAL

    def maximize(self, c, exact: bool = False, pricing_tol: float | None = None) -> LPResult:
        """Maximize c.x over the (possibly perturbed) polytope.

        With exact=True the basis is refactorized at the end so the reported
        vertex, dual vector, and dual slack come from a fresh factorization.
        A loose pricing_tol stops pivoting once no reduced cost exceeds it;
        the measured dual slack then accounts for the remaining optimality
        error, keeping dual-based bounds valid.
        """
        c = np.asarray(c, dtype=float)
        if c.shape != (self.n,):
            raise ValueError(f"objective has {c.shape}, expected ({self.n},)")
        if self.m == 0:
            if (c > self.tol).any():
                return LPResult(UNBOUNDED, np.inf, None, 0, 0.0)
            return LPResult(OPTIMAL, 0.0, np.zeros(self.n), 0, 0.0, np.zeros(0), 0.0, 0.0)
        status = self.ensure_feasible()
        if status != OPTIMAL:
            return LPResult(status, np.nan, None, self.total_pivots, np.nan)
        c_full = np.zeros(self.n + self.m)
        c_full[: self.n] = c
        before = self.total_pivots
        status = self._iterate(c_full, pricing_tol)
        if status == UNBOUNDED:
            # rule out an unbounded verdict caused by inverse drift
            self._refactor()
            status = self._iterate(c_full, pricing_tol)
            if status == UNBOUNDED:
                return LPResult(UNBOUNDED, np.inf, None, self.total_pivots - before, np.nan)
        if exact and self._pivots_since_refactor > 0:
            self._refactor()
            # drift healing may re-open tiny reduced costs; settle them
            settle = self._iterate(c_full, pricing_tol)
            if settle == UNBOUNDED:
                return LPResult(UNBOUNDED, np.inf, None, self.total_pivots - before, np.nan)
            if self._pivots_since_refactor > 0:
                self._refactor()
        x = self.solution()
        residual = float(np.abs(self.A @ x - self.b).max())
        value = float(c @ x)
        y = self.binv.T @ c_full[self.basis]
        z = c - (self.AT @ y)
        z[self.basis[self.basis < self.n]] = 0.0
        dual_slack = max(float(z.max(initial=0.0)), 0.0)
        dual_value = float(y @ self.b_true)
        if status == NUMERICAL_FAILURE:
            return LPResult(
                NUMERICAL_FAILURE, value, x, self.total_pivots - before, residual,
                y, dual_value, dual_slack,
            )
        return LPResult(
            OPTIMAL, value, x, self.total_pivots - before, residual, y, dual_value, dual_slack
        )

    def feasible_vertex(self) -> np.ndarray | None:
        if self.m == 0:
            return np.zeros(self.n)
        if self.ensure_feasible() != OPTIMAL:
            return None
        return self.solution()

    def solution(self) -> np.ndarray:
        x = np.zeros(self.n)
        real = self.basis < self.n
        x[self.basis[real]] = self.x_basic[real]
        return x


def lp_maximize(lp: LPProblem) -> LPResult:
    """One-shot exact solve of max c.x over {A x = b, x >= 0}."""
    core = SimplexCore(lp.A, lp.b)
    return core.maximize(lp.c, exact=True)
