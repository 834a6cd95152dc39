"""Command-line front end.

Subcommands: solve (enumerate -> assemble -> maximize -> certify), stripe
(transfer-matrix baseline), search (deterministic scheme sweeps), enumerate
(patch counts, optionally per padding radius), validate-scheme.

Every command prints a human summary to stdout and writes a line-oriented
``key = value`` results file with 9-decimal fixed-point numbers. The results
file is reproducible byte-for-byte for identical inputs and tool version;
wall-clock timings therefore go to stdout only. The headline number of a
solve is always the certified bound, never the raw objective value.

Exit codes: 0 success, 1 invalid configuration, 2 infeasible or empty patch
set, 3 numerical failure in the solver (a partial report is still written).
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .constraint import ConstraintError, ConstraintSpec, resolve_constraint, verify_symmetry
from .patches import cached_enumerate, enumerate_patches
from .scheme import (
    Scheme,
    SchemeError,
    SchemeTerm,
    load_scheme,
    mixture,
    save_scheme,
    simple_scheme,
    skip_scheme,
    validate_scheme,
)
from .solver import (
    CONVERGED,
    SolveContext,
    SolveOptions,
    SolveResult,
)
from .simplex import INFEASIBLE, NUMERICAL_FAILURE, OPTIMAL
from .stripe import StripeError, stripe_report


class ConfigError(ValueError):
    pass


EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INFEASIBLE = 2
EXIT_NUMERICAL = 3


def _fmt(value) -> str:
    if isinstance(value, float):
        if not np.isfinite(value):
            return "nan"
        return f"{value:.9f}"
    return str(value)


class Report:
    """Ordered key = value lines, echoed to a results file."""

    def __init__(self, command: str):
        self.pairs: list[tuple[str, str]] = []
        self.add("tool", "capbound")
        self.add("version", __version__)
        self.add("command", command)

    def add(self, key: str, value) -> None:
        self.pairs.append((key, _fmt(value)))

    def write(self, path) -> None:
        text = "".join(f"{k} = {v}\n" for k, v in self.pairs)
        Path(path).write_text(text)


def _cache_dir(args) -> Path:
    if getattr(args, "cache_dir", None):
        return Path(args.cache_dir)
    env = os.environ.get("CAPBOUND_CACHE")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "capbound"


def _load_constraint(args) -> ConstraintSpec:
    try:
        spec = resolve_constraint(args.constraint)
    except (ConstraintError, OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    is_file = Path(args.constraint).exists()
    if is_file and not getattr(args, "no_verify", False):
        reports = verify_symmetry(spec, M=3)
        bad = [f for f, rep in reports.items() if not rep.ok]
        if bad:
            raise ConfigError(
                f"declared symmetry flags failed verification at M=3: {', '.join(bad)}"
            )
    return spec


def _parse_simple_anchor(text: str) -> int:
    text = text.strip()
    if text.startswith("t="):
        text = text[2:]
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"bad --simple value {text!r}; expected t=<int>") from None


def _load_scheme(args, r: int, s: int) -> Scheme:
    if getattr(args, "scheme", None) and getattr(args, "simple", None) is not None:
        raise ConfigError("give either --scheme or --simple, not both")
    if getattr(args, "scheme", None):
        try:
            scheme = load_scheme(args.scheme)
        except (OSError, SchemeError, KeyError, ValueError) as exc:
            raise ConfigError(f"cannot load scheme: {exc}") from exc
        if (scheme.r, scheme.s) != (r, s):
            raise ConfigError(
                f"scheme file is for {scheme.r}x{scheme.s}, run asks for {r}x{s}"
            )
        return scheme
    if getattr(args, "simple", None) is not None:
        t = _parse_simple_anchor(args.simple)
        if not 0 <= t < s:
            raise ConfigError(f"--simple t={t} outside 0..{s - 1}")
        return simple_scheme(r, s, t)
    raise ConfigError("a scheme is required: --scheme <file> or --simple t=<t>")


def _solver_options(args) -> SolveOptions:
    return SolveOptions(
        gap_tolerance=args.gap_tol,
        max_iterations=args.max_iters,
        away_steps=not getattr(args, "no_away_steps", False),
        seed=getattr(args, "seed", 0),
        verbose=getattr(args, "verbose", False),
    )


def _echo_inputs(report: Report, spec: ConstraintSpec, args) -> None:
    report.add("constraint", spec.name)
    report.add("constraint_digest", spec.digest()[:16])
    report.add("alphabet_size", spec.alphabet_size)
    for key in ("r", "s", "delta", "width"):
        if hasattr(args, key) and getattr(args, key) is not None:
            report.add(key, getattr(args, key))


def _add_system_counts(report: Report, ctx: SolveContext) -> None:
    counts = ctx.system.tag_counts()
    report.add("patch_count", len(ctx.patchset))
    report.add("rows_total", ctx.system.n_rows)
    for tag in ("normalization", "vertical", "horizontal", "reflect", "transpose", "complement"):
        report.add(f"rows_{tag}", counts[tag])
    report.add("reduced_vars", ctx.reduction.n_orbits)
    report.add("reduced_rows", ctx.reduction.A.shape[0])


def _add_solve_result(report: Report, result: SolveResult, prefix: str = "") -> None:
    report.add(prefix + "f_tilde", result.f_tilde)
    report.add(prefix + "gap", result.gap)
    report.add(prefix + "certified_lp", result.certified_lp)
    report.add(prefix + "certified_slack", result.certified_slack)
    report.add(prefix + "certified", result.certified)
    report.add(prefix + "iterations", result.iterations)
    report.add(prefix + "residual", result.residual)
    report.add(prefix + "status", result.status)


def _result_exit_code(result: SolveResult) -> int:
    if result.status == INFEASIBLE:
        return EXIT_INFEASIBLE
    if result.status in (NUMERICAL_FAILURE,):
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_solve(args) -> int:
    report = Report("solve")
    t0 = time.perf_counter()
    spec = _load_constraint(args)
    scheme = _load_scheme(args, args.r, args.s)
    check = validate_scheme(scheme)
    if not check.ok:
        raise ConfigError("invalid scheme: " + "; ".join(check.violations))
    _echo_inputs(report, spec, args)
    report.add("scheme", scheme.describe())

    ps = cached_enumerate(spec, args.r, args.s, args.delta, _cache_dir(args))
    report.add("patch_count_enumerated", len(ps))
    if len(ps) == 0:
        report.add("status", "empty-patch-set")
        report.add("stage", "enumerate")
        report.write(args.out)
        print("patch set is empty; nothing to solve")
        return EXIT_INFEASIBLE

    ctx = SolveContext(ps, spec)
    _add_system_counts(report, ctx)
    result = ctx.solve(scheme, _solver_options(args))
    _add_solve_result(report, result)

    if args.stripe_width:
        stripe = stripe_report(spec, args.stripe_width)
        report.add("stripe_width", args.stripe_width)
        report.add("stripe_bound", stripe.bound)

    report.write(args.out)
    elapsed = time.perf_counter() - t0
    print(f"constraint         : {spec.name} ({len(ps)} patches at {args.r}x{args.s})")
    print(f"scheme             : {scheme.describe()}")
    print(f"objective value    : {result.f_tilde:.9f}  (gap {result.gap:.3e})")
    print(f"status             : {result.status}  [{result.iterations} iterations, {elapsed:.2f}s]")
    if np.isfinite(result.certified):
        print(f"certified upper bound: {result.certified:.9f}")
    return _result_exit_code(result)


def cmd_stripe(args) -> int:
    report = Report("stripe")
    t0 = time.perf_counter()
    spec = _load_constraint(args)
    _echo_inputs(report, spec, args)
    try:
        stripe = stripe_report(spec, args.width)
    except StripeError as exc:
        report.add("status", "budget-exceeded")
        report.add("stage", "build-transfer-graph")
        report.write(args.out)
        print(f"error: {exc}")
        return EXIT_CONFIG
    report.add("height", stripe.height)
    report.add("vertex_count", stripe.n_vertices)
    report.add("edge_count", stripe.n_edges)
    report.add("eigenvalue", stripe.eigenvalue)
    report.add("eigen_residual", stripe.residual)
    report.add("bound", stripe.bound)
    report.add("status", "ok")
    report.write(args.out)
    elapsed = time.perf_counter() - t0
    print(
        f"stripe width {args.width}: {stripe.n_vertices} blocks, "
        f"{stripe.n_edges} edges, eigenvalue {stripe.eigenvalue:.9f} "
        f"(residual {stripe.residual:.2e}, {elapsed:.2f}s)"
    )
    print(f"stripe upper bound : {stripe.bound:.9f}")
    return EXIT_OK


def _lex_term(r: int, s: int, t: int, weight: float) -> SchemeTerm:
    return SchemeTerm(order="lex", colors=1, period=((1,),), anchors=((r - 1, t),), weight=weight)


def _skip_term(r: int, s: int, b1: int, b2: int, weight: float) -> SchemeTerm:
    return SchemeTerm(
        order="skip", colors=2, period=((1, 2),), anchors=((r - 1, b1), (r - 1, b2)), weight=weight
    )


def _rho_grid(step: float) -> list[float]:
    if not 0.0 < step < 1.0:
        raise ConfigError("--rho-step must be in (0, 1)")
    k = round(1.0 / step)
    return [i * step for i in range(1, k) if 0.0 < i * step < 1.0]


def _search_candidates(args, r: int, s: int):
    """Deterministic candidate stream per search space.

    Staged spaces yield (stage, scheme) pairs; later stages may depend on the
    best result of earlier ones, which the runner resolves lazily.
    """
    space = args.space
    window = args.anchor_window if args.anchor_window > 0 else s
    anchors = list(range(max(0, s - window), s))
    if space == "simple":
        return [("single", simple_scheme(r, s, t)) for t in range(s)], None
    if space == "lex-pairs":
        cands = [("single", simple_scheme(r, s, t)) for t in range(s)]
        for t1 in range(s):
            for t2 in range(t1 + 1, s):
                for rho in _rho_grid(args.rho_step):
                    sch = mixture(r, s, [(_lex_term(r, s, t1, 0), rho), (_lex_term(r, s, t2, 0), 1 - rho)])
                    cands.append(("pair", sch))
        return cands, None
    if space == "skip-pairs":
        return [
            ("single", skip_scheme(r, s, b1, b2)) for b1 in anchors for b2 in anchors
        ], None
    if space == "lex-skip":
        stage_a = [("lex", simple_scheme(r, s, t)) for t in range(s)]
        stage_b = [("skip", skip_scheme(r, s, b1, b2)) for b1 in anchors for b2 in anchors]

        def stage_c(best_lex: Scheme, best_skip: Scheme):
            out = []
            lex_t = best_lex.terms[0]
            skip_t = best_skip.terms[0]
            for rho in _rho_grid(args.rho_step):
                out.append(
                    ("mix", mixture(r, s, [(lex_t, rho), (skip_t, 1 - rho)]))
                )
            return out

        return stage_a + stage_b, stage_c
    raise ConfigError(f"unknown search space {args.space!r}")


def cmd_search(args) -> int:
    report = Report("search")
    t0 = time.perf_counter()
    spec = _load_constraint(args)
    _echo_inputs(report, spec, args)
    report.add("space", args.space)

    ps = cached_enumerate(spec, args.r, args.s, args.delta, _cache_dir(args))
    if len(ps) == 0:
        report.add("status", "empty-patch-set")
        report.add("stage", "enumerate")
        report.write(args.out)
        print("patch set is empty; nothing to search")
        return EXIT_INFEASIBLE

    ctx = SolveContext(ps, spec)
    _add_system_counts(report, ctx)
    opts = _solver_options(args)

    candidates, stage_c = _search_candidates(args, args.r, args.s)
    evaluated = []  # (stage, scheme, result)
    best_by_stage: dict[str, tuple[float, Scheme]] = {}

    def run(stage: str, scheme: Scheme) -> None:
        result = ctx.solve(scheme, opts)
        evaluated.append((stage, scheme, result))
        value = result.certified if np.isfinite(result.certified) else np.inf
        if stage not in best_by_stage or value < best_by_stage[stage][0]:
            best_by_stage[stage] = (value, scheme)
        if args.verbose:
            print(f"  [{stage}] {scheme.describe():40s} certified={result.certified:.9f}")

    for stage, scheme in candidates:
        run(stage, scheme)
    if stage_c is not None:
        if "lex" in best_by_stage and "skip" in best_by_stage:
            for stage, scheme in stage_c(best_by_stage["lex"][1], best_by_stage["skip"][1]):
                run(stage, scheme)

    finite = [
        (i, res.certified)
        for i, (_, _, res) in enumerate(evaluated)
        if np.isfinite(res.certified)
    ]
    if not finite:
        report.add("status", "no-candidate-solved")
        report.write(args.out)
        print("no candidate produced a certified bound")
        return EXIT_NUMERICAL
    best_index = min(finite, key=lambda iv: (iv[1], iv[0]))[0]
    best_stage, best_scheme, best_result = evaluated[best_index]

    report.add("candidates", len(evaluated))
    for i, (stage, scheme, res) in enumerate(evaluated):
        report.add(f"candidate_{i}", f"[{stage}] {scheme.describe()} certified={_fmt(res.certified)}")
    report.add("best_index", best_index)
    report.add("best_scheme", best_scheme.describe())
    _add_solve_result(report, best_result, prefix="best_")
    report.write(args.out)
    if args.save_scheme:
        save_scheme(best_scheme, args.save_scheme)

    elapsed = time.perf_counter() - t0
    print(f"searched {len(evaluated)} candidates in {elapsed:.1f}s")
    print(f"best scheme        : {best_scheme.describe()}")
    print(f"certified upper bound: {best_result.certified:.9f}")
    return _result_exit_code(best_result)


def cmd_enumerate(args) -> int:
    report = Report("enumerate")
    spec = _load_constraint(args)
    _echo_inputs(report, spec, args)
    deltas = list(range(args.delta, args.delta_sweep + 1)) if args.delta_sweep >= args.delta else [args.delta]
    counts = []
    for d in deltas:
        ps = (
            cached_enumerate(spec, args.r, args.s, d, _cache_dir(args))
            if not args.no_cache
            else enumerate_patches(spec, args.r, args.s, d)
        )
        counts.append((d, len(ps)))
        report.add(f"patch_count_delta_{d}", len(ps))
        print(f"delta={d}: {len(ps)} patches")
    report.add("status", "ok")
    report.write(args.out)
    return EXIT_OK if counts[-1][1] > 0 else EXIT_INFEASIBLE


def cmd_validate_scheme(args) -> int:
    report = Report("validate-scheme")
    try:
        scheme = load_scheme(args.scheme)
    except (OSError, SchemeError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot load scheme: {exc}") from exc
    check = validate_scheme(scheme)
    report.add("scheme", scheme.describe())
    report.add("r", scheme.r)
    report.add("s", scheme.s)
    report.add("ok", str(check.ok).lower())
    for i, v in enumerate(check.violations):
        report.add(f"violation_{i}", v)
    report.write(args.out)
    if check.ok:
        print(f"scheme ok: {scheme.describe()}")
        return EXIT_OK
    print("scheme INVALID:")
    for v in check.violations:
        print(f"  - {v}")
    return EXIT_CONFIG


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="capbound",
        description="Certified upper bounds on the capacity of 2-D constraints",
    )
    parser.add_argument("--version", action="version", version=f"capbound {__version__}")
    sub = parser.add_subparsers(dest="cmd", required=True)

    def common(p, with_rs=True):
        p.add_argument("--constraint", required=True, help="builtin name (rll-d-k, nib, free) or file")
        if with_rs:
            p.add_argument("--r", type=int, required=True)
            p.add_argument("--s", type=int, required=True)
            p.add_argument("--delta", type=int, default=0)
        p.add_argument("--out", default="capbound.result", help="machine-readable results file")
        p.add_argument("--cache-dir", default=None)
        p.add_argument("--no-verify", action="store_true", help="skip symmetry verification of constraint files")
        p.add_argument("--verbose", action="store_true")

    def solver_flags(p):
        p.add_argument("--gap-tol", type=float, default=1e-7)
        p.add_argument("--max-iters", type=int, default=100000)
        p.add_argument("--no-away-steps", action="store_true")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("solve", help="maximize the concave program and certify the bound")
    common(p)
    solver_flags(p)
    p.add_argument("--scheme", default=None, help="scheme file")
    p.add_argument("--simple", default=None, help="simple scheme anchor, t=<int>")
    p.add_argument("--stripe-width", type=int, default=0, help="also report a stripe baseline")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("stripe", help="transfer-matrix stripe baseline")
    common(p, with_rs=False)
    p.add_argument("--width", type=int, required=True)
    p.set_defaults(func=cmd_stripe)

    p = sub.add_parser("search", help="sweep scheme candidates, minimize the certified bound")
    common(p)
    solver_flags(p)
    p.add_argument("--space", required=True, choices=("simple", "lex-pairs", "skip-pairs", "lex-skip"))
    p.add_argument("--rho-step", type=float, default=0.25)
    p.add_argument("--anchor-window", type=int, default=0, help="restrict skip anchors to the last W columns (0 = all)")
    p.add_argument("--save-scheme", default=None, help="write the winning scheme file here")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("enumerate", help="count valid patches (optionally sweeping delta)")
    common(p)
    p.add_argument("--delta-sweep", type=int, default=-1, help="also count for delta..delta-sweep")
    p.add_argument("--no-cache", action="store_true")
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("validate-scheme", help="check a scheme file")
    p.add_argument("--scheme", required=True)
    p.add_argument("--out", default="capbound.result")
    p.set_defaults(func=cmd_validate_scheme)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConstraintError, SchemeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
