"""Conditional-gradient maximization of the concave program plus the
gradient-linearized LP certificate.

The solve works in a reduced variable space: every two-variable equality row
(the reflection / complementation / square-transposition identities) merges
its variables into one orbit, and single-variable zero rows pin variables to
zero. The reduced polytope is affinely identical to the original one, so
values, gaps and certificates transfer exactly. One simplex core is kept
alive across all conditional-gradient iterations (and across schemes sharing
the polytope), so each linear subproblem warm-starts from the last basis.

The stationarity polytope is extremely degenerate, so the simplex core runs
against a deterministically perturbed right-hand side; iterates are pulled
back onto the true polytope before reporting. Certification never relies on
the perturbed values: the final linear subproblem returns a dual vector
whose value against the true right-hand side upper-bounds g.p over the true
polytope by weak duality, and the certificate is

    certified = f(p~) + max_polytope g~.p - g~.p~ + floating-point slack,

valid by concavity of the objective.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .program import (
    ConcaveProgram,
    LinearSystem,
    ProgramError,
    assemble_program,
    build_linear_system,
    objective_gradient,
    objective_value,
)
from .simplex import (
    INFEASIBLE,
    LPProblem,
    LPResult,
    NUMERICAL_FAILURE,
    OPTIMAL,
    SimplexCore,
    UNBOUNDED,
    lp_maximize,
)

LN2 = math.log(2.0)

CONVERGED = "converged"
ITERATION_LIMIT = "iteration-limit"

# right-hand-side perturbation used by the internal cores; see module docstring
DEFAULT_PERTURBATION = 1e-7


@dataclass
class SolveOptions:
    gap_tolerance: float = 1e-7
    max_iterations: int = 100000
    clip_eps: float = 1e-12
    away_steps: bool = True
    line_search_iters: int = 60
    seed: int = 0
    verbose: bool = False

    def __post_init__(self):
        if self.gap_tolerance <= 0 or self.clip_eps <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class SolveResult:
    p_tilde: np.ndarray
    f_tilde: float
    g_tilde: np.ndarray
    gap: float
    certified: float
    iterations: int
    status: str
    certified_lp: float = np.nan
    certified_slack: float = 0.0
    residual: float = np.nan
    trace: list = field(default_factory=list)
    reduced_vars: int = 0
    reduced_rows: int = 0


@dataclass
class CertifiedBound:
    value: float
    lp_value: float
    slack: float
    status: str
    residual: float


class Reduction:
    """Orbit merge of symmetric variables and zero pins, with row rewrite."""

    def __init__(self, system: LinearSystem):
        matrix = system.matrix
        n = system.n_vars
        parent = np.arange(n)

        def find(v: int) -> int:
            while parent[v] != v:
                parent[v] = parent[parent[v]]
                v = parent[v]
            return v

        pinned_vars = []
        other_rows = []
        indptr, indices, data = matrix.indptr, matrix.indices, matrix.data
        for i in range(system.n_rows):
            lo, hi = indptr[i], indptr[i + 1]
            cols = indices[lo:hi]
            vals = data[lo:hi]
            if system.rhs[i] == 0.0 and len(cols) == 2 and set(vals) == {1.0, -1.0}:
                ra, rb = find(int(cols[0])), find(int(cols[1]))
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
                continue
            if system.rhs[i] == 0.0 and len(cols) == 1:
                pinned_vars.append(int(cols[0]))
                continue
            other_rows.append(i)

        pinned_roots = {find(v) for v in pinned_vars}
        orbit_of = np.full(n, -1, dtype=np.int64)
        next_id = 0
        for v in range(n):
            root = find(v)
            if root in pinned_roots:
                continue
            if orbit_of[root] < 0:
                orbit_of[root] = next_id
                next_id += 1
            orbit_of[v] = orbit_of[root]
        self.orbit_of = orbit_of
        self.n_orbits = next_id
        self.n_full = n
        valid = orbit_of >= 0
        self.orbit_size = np.bincount(orbit_of[valid], minlength=next_id).astype(float)
        self._lookup = np.where(valid, orbit_of, next_id)

        self.infeasible = False
        rows = []
        seen = set()
        for i in other_rows:
            lo, hi = indptr[i], indptr[i + 1]
            acc: dict[int, float] = {}
            for col, val in zip(indices[lo:hi], data[lo:hi]):
                o = orbit_of[col]
                if o < 0:
                    continue
                acc[int(o)] = acc.get(int(o), 0.0) + float(val)
            items = sorted((o, c) for o, c in acc.items() if c != 0.0)
            rhs = float(system.rhs[i])
            if not items:
                if rhs != 0.0:
                    self.infeasible = True
                continue
            idx = np.array([o for o, _ in items], dtype=np.int64)
            coef = np.array([c for _, c in items])
            sign = -1.0 if coef[0] < 0 else 1.0
            key = (idx.tobytes(), (sign * coef).tobytes(), sign * rhs)
            if key in seen:
                continue
            seen.add(key)
            rows.append((idx, coef, rhs))

        if self.n_orbits == 0:
            self.infeasible = True
            rows = []
        data_l, ind_l, ptr_l, rhs_l = [], [], [0], []
        for idx, coef, rhs in rows:
            ind_l.extend(idx.tolist())
            data_l.extend(coef.tolist())
            ptr_l.append(len(ind_l))
            rhs_l.append(rhs)
        self.A = sp.csr_matrix(
            (np.array(data_l), np.array(ind_l, dtype=np.int32), np.array(ptr_l, dtype=np.int32)),
            shape=(len(rows), max(self.n_orbits, 1)),
        )
        self.b = np.array(rhs_l)

    def expand(self, q: np.ndarray) -> np.ndarray:
        q_ext = np.append(q, 0.0)
        return q_ext[self._lookup]

    def collapse(self, vec: np.ndarray) -> np.ndarray:
        valid = self.orbit_of >= 0
        return np.bincount(
            self.orbit_of[valid], weights=vec[valid], minlength=self.n_orbits
        )


def _initial_point(red: Reduction, core: SimplexCore):
    """Uniform start, least-squares corrected onto the core's equality rows;
    a phase-1 vertex when the correction leaves the polytope."""
    n_unpinned = float(red.orbit_size.sum())
    q0 = np.full(red.n_orbits, 1.0 / n_unpinned)
    if core.A.shape[0]:
        resid = core.b - core.A @ q0
        if np.abs(resid).max() > 1e-14:
            delta = spla.lsqr(core.A, resid, atol=1e-14, btol=1e-14, iter_lim=8 * red.n_orbits)[0]
            q0 = q0 + delta
        q0 = np.clip(q0, 0.0, None)
        if np.abs(core.A @ q0 - core.b).max() <= 1e-9:
            return q0
        return core.feasible_vertex()
    return q0


def _project_polytope(red: Reduction, q: np.ndarray, rounds: int = 3):
    """Pull a point onto the true (unperturbed) polytope."""
    q = np.clip(q, 0.0, None)
    if red.A.shape[0] == 0:
        return q, 0.0
    residual = float(np.abs(red.A @ q - red.b).max())
    for _ in range(rounds):
        if residual <= 1e-12:
            break
        delta = spla.lsqr(red.A, red.b - red.A @ q, atol=1e-14, btol=1e-14,
                          iter_lim=8 * red.n_orbits)[0]
        q = np.clip(q + delta, 0.0, None)
        residual = float(np.abs(red.A @ q - red.b).max())
    return q, residual


def _directional_derivative_factory(prog: ConcaveProgram, p_x, p_d, clip_eps: float):
    mv_x = prog.marginal_vectors(p_x)
    mv_d = prog.marginal_vectors(p_d)

    def phi_prime(gamma: float) -> float:
        total = 0.0
        for w, (yx, zx), (yd, zd) in zip(prog._weights, mv_x, mv_d):
            y = np.maximum(yx + gamma * yd, clip_eps)
            z = np.maximum(zx + gamma * zd, clip_eps)
            total += w * (float(zd @ np.log(z)) - float(yd @ np.log(y))) / LN2
        return total

    return phi_prime


def _line_search(phi_prime, gamma_max: float, iters: int) -> float:
    """Bisection on the (decreasing) directional derivative of the concave
    one-dimensional slice."""
    if gamma_max <= 0.0:
        return 0.0
    if phi_prime(gamma_max) >= 0.0:
        return gamma_max
    lo, hi = 0.0, gamma_max
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if phi_prime(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class _ActiveSet:
    """Vertices and convex weights describing the current iterate."""

    def __init__(self, q0: np.ndarray):
        self.vertices = [q0.copy()]
        self.weights = [1.0]
        self._index = {q0.tobytes(): 0}

    def add_mass(self, v: np.ndarray, gamma: float) -> None:
        self.weights = [w * (1.0 - gamma) for w in self.weights]
        key = v.tobytes()
        at = self._index.get(key)
        if at is None:
            self.vertices.append(v.copy())
            self.weights.append(gamma)
            self._index[key] = len(self.vertices) - 1
        else:
            self.weights[at] += gamma
        self._prune()

    def away_mass(self, at: int, gamma: float) -> None:
        self.weights = [w * (1.0 + gamma) for w in self.weights]
        self.weights[at] -= gamma
        self._prune()

    def _prune(self) -> None:
        keep = [i for i, w in enumerate(self.weights) if w > 1e-14]
        if len(keep) != len(self.weights):
            self.vertices = [self.vertices[i] for i in keep]
            self.weights = [self.weights[i] for i in keep]
            self._index = {v.tobytes(): i for i, v in enumerate(self.vertices)}
        total = sum(self.weights)
        if total > 0 and abs(total - 1.0) > 1e-9:
            self.weights = [w / total for w in self.weights]

    def reconstruct(self) -> np.ndarray:
        out = np.zeros_like(self.vertices[0])
        for w, v in zip(self.weights, self.vertices):
            out += w * v
        return out


def _certification_slack(n_vars: int, gradient: np.ndarray) -> float:
    gmax = float(np.abs(gradient).max()) if gradient.size else 0.0
    return n_vars * np.finfo(float).eps * gmax


def solve_concave(prog: ConcaveProgram, opts: SolveOptions | None = None) -> SolveResult:
    """Away-step conditional-gradient ascent with a certificate at the end."""
    opts = opts or SolveOptions()
    red = Reduction(prog.system)
    if red.infeasible:
        return _infeasible_result(prog)
    core = SimplexCore(red.A, red.b, perturb=DEFAULT_PERTURBATION)
    return _solve_reduced(prog, red, core, opts)


def _infeasible_result(prog: ConcaveProgram) -> SolveResult:
    n = prog.n_vars
    return SolveResult(
        p_tilde=np.zeros(n),
        f_tilde=np.nan,
        g_tilde=np.zeros(n),
        gap=np.nan,
        certified=np.nan,
        iterations=0,
        status=INFEASIBLE,
    )


def _solve_reduced(
    prog: ConcaveProgram, red: Reduction, core: SimplexCore, opts: SolveOptions
) -> SolveResult:
    q = _initial_point(red, core)
    if q is None:
        return _infeasible_result(prog)

    def f_of(qv: np.ndarray) -> float:
        return objective_value(prog, red.expand(np.clip(qv, 0.0, None)))

    active = _ActiveSet(q)
    fval = f_of(q)
    trace = []
    status = ITERATION_LIMIT
    iterations = 0
    lp_failed = False

    for it in range(opts.max_iterations):
        iterations = it + 1
        g_full = objective_gradient(prog, red.expand(np.clip(q, 0.0, None)), opts.clip_eps)
        gq = red.collapse(g_full)
        res = core.maximize(gq)
        if res.status != OPTIMAL:
            status = res.status
            lp_failed = True
            break
        v = res.x
        gap = float(gq @ v - gq @ q)
        trace.append((it, fval, gap))
        if gap <= opts.gap_tolerance:
            status = CONVERGED
            break

        vertex = None
        away_at = None
        if opts.away_steps and active.vertices:
            scores = [float(gq @ av) for av in active.vertices]
            ia = int(np.argmin(scores))
            away_gain = float(gq @ q) - scores[ia]
            lam = active.weights[ia]
            if away_gain > gap and lam < 1.0 - 1e-12:
                away_at = ia
        if away_at is None:
            direction = v - q
            gamma_max = 1.0
            vertex = v
        else:
            direction = q - active.vertices[away_at]
            lam = active.weights[away_at]
            gamma_max = lam / (1.0 - lam)

        phi_prime = _directional_derivative_factory(
            prog, red.expand(np.clip(q, 0.0, None)), red.expand(direction), opts.clip_eps
        )
        gamma = _line_search(phi_prime, gamma_max, opts.line_search_iters)
        if gamma <= 0.0:
            status = CONVERGED  # no admissible ascent left within tolerance
            break
        q = q + gamma * direction
        np.clip(q, 0.0, None, out=q)
        if vertex is not None:
            active.add_mass(vertex, gamma)
        else:
            active.away_mass(away_at, gamma)

        new_f = f_of(q)
        if new_f < fval - 1e-9:
            # drift control: rebuild the iterate from its convex decomposition
            q = active.reconstruct()
            new_f = f_of(q)
        fval = new_f
        if opts.verbose and it % 50 == 0:
            print(f"  it={it:6d}  f={fval:.9f}  gap={gap:.3e}")

    # pull the iterate back onto the true polytope and certify there
    q_true, red_residual = _project_polytope(red, q)
    p_tilde = red.expand(q_true)
    f_tilde = objective_value(prog, p_tilde)
    g_tilde = objective_gradient(prog, p_tilde, opts.clip_eps)
    full_residual = prog.system.residual(p_tilde)
    if lp_failed:
        return SolveResult(
            p_tilde=p_tilde,
            f_tilde=f_tilde,
            g_tilde=g_tilde,
            gap=np.nan,
            certified=np.nan,
            iterations=iterations,
            status=status,
            residual=full_residual,
            trace=trace,
            reduced_vars=red.n_orbits,
            reduced_rows=red.A.shape[0],
        )
    gq = red.collapse(g_tilde)
    res = core.maximize(gq, exact=True)
    if res.status != OPTIMAL:
        return SolveResult(
            p_tilde=p_tilde,
            f_tilde=f_tilde,
            g_tilde=g_tilde,
            gap=np.nan,
            certified=np.nan,
            iterations=iterations,
            status=res.status,
            residual=full_residual,
            trace=trace,
            reduced_vars=red.n_orbits,
            reduced_rows=red.A.shape[0],
        )
    # y.b_true + slack >= max g.p over the true polytope (weak duality;
    # the l1 norm of any feasible point is at most 1)
    true_lp_max = res.dual_value + res.dual_slack
    gap = true_lp_max - float(gq @ q_true)
    certified_lp = f_tilde + gap
    slack = _certification_slack(prog.n_vars, g_tilde)
    certified = certified_lp + slack
    return SolveResult(
        p_tilde=p_tilde,
        f_tilde=f_tilde,
        g_tilde=g_tilde,
        gap=gap,
        certified=certified,
        iterations=iterations,
        status=status,
        certified_lp=certified_lp,
        certified_slack=slack,
        residual=full_residual,
        trace=trace,
        reduced_vars=red.n_orbits,
        reduced_rows=red.A.shape[0],
    )


def certify_bound(
    prog: ConcaveProgram,
    p_tilde: np.ndarray,
    f_tilde: float,
    g_tilde: np.ndarray,
) -> CertifiedBound:
    """Gradient-linearized LP bound at an arbitrary feasible point."""
    red = Reduction(prog.system)
    if red.infeasible:
        return CertifiedBound(np.nan, np.nan, np.nan, INFEASIBLE, np.nan)
    core = SimplexCore(red.A, red.b)
    g_tilde = np.asarray(g_tilde, dtype=float)
    res = core.maximize(red.collapse(g_tilde), exact=True)
    if res.status != OPTIMAL:
        return CertifiedBound(np.nan, np.nan, np.nan, res.status, np.nan)
    true_lp_max = res.dual_value + res.dual_slack
    lp_value = f_tilde + true_lp_max - float(g_tilde @ np.asarray(p_tilde, dtype=float))
    slack = _certification_slack(prog.n_vars, g_tilde)
    return CertifiedBound(
        value=lp_value + slack,
        lp_value=lp_value,
        slack=slack,
        status=OPTIMAL,
        residual=prog.system.residual(np.asarray(p_tilde, dtype=float)),
    )


class SolveContext:
    """Shared polytope state for solving many schemes over one patch set.

    The equality system, its reduction, and the simplex basis depend only on
    the constraint and the patch size, so scheme sweeps reuse them all.
    """

    def __init__(self, patchset, spec, perturbation: float = DEFAULT_PERTURBATION):
        self.patchset = patchset
        self.spec = spec
        self.system = build_linear_system(patchset, spec)
        self.reduction = Reduction(self.system)
        self.core = (
            None
            if self.reduction.infeasible
            else SimplexCore(self.reduction.A, self.reduction.b, perturb=perturbation)
        )

    def solve(self, scheme, opts: SolveOptions | None = None) -> SolveResult:
        prog = assemble_program(self.patchset, self.spec, scheme, system=self.system)
        if self.reduction.infeasible or self.core is None:
            return _infeasible_result(prog)
        return _solve_reduced(prog, self.reduction, self.core, opts or SolveOptions())
