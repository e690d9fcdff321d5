"""``ere-lab`` command-line interface.

Exit codes: 0 ok, 1 usage or parse error, 2 assumption violation, 3 no
contraction, 4 blow-up, 5 failed verification, 6 export size cap exceeded.
"""

import argparse
import json
import os
import sys

import numpy as np

from .config import dump_problem, load_problem
from .exceptions import (
    AssumptionError,
    BlowUpError,
    NoContractionError,
    NoConvergenceError,
    NotPositiveDefiniteError,
    ParseError,
)
from .instances import BUILTINS, get_instance
from .mollify import mollify_problem
from .montecarlo import DEFAULT_LADDER, McConfig, mc_cost, mc_p1_diag, simulate_closed_loop, spike_test
from .ode import MatrixPath, diag_p1, integrate_p2, p1_triangle
from .problem import validate_assumptions
from .reduced import integrate_reduced_example1
from .solver import solve_equilibrium

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_CONTRACTION, EXIT_BLOWUP, EXIT_VERIFY, EXIT_CAP = range(7)

RUN_FILE = "run.json"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="ere-lab", description="Equilibrium strategies for time-inconsistent FBSDE LQ problems.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, needs_input=True):
        p.add_argument("--input", required=needs_input, help="problem file or built-in name " + str(sorted(BUILTINS)))
        p.add_argument("--out", default=".", help="output directory (default: current)")
        p.add_argument("--grid", type=int, help="override the number of grid steps N")
        p.add_argument("--mollify", type=float, metavar="EPS", help="mollify non-smooth data with width EPS")
        return p

    common(sub.add_parser("validate", help="check the assumptions"))
    solve = common(sub.add_parser("solve", help="solve for the equilibrium gain"))
    solve.add_argument("--tol", type=float, default=1e-10)
    solve.add_argument("--max-iters", type=int, default=200)
    solve.add_argument("--override-assumptions", action="store_true")
    verify = common(sub.add_parser("verify", help="Monte Carlo checks of a previous solve"), needs_input=False)
    verify.add_argument("--paths", type=int, default=10_000)
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--antithetic", action="store_true")
    verify.add_argument("--x0", help="comma-separated initial state (default: all ones)")
    ex = sub.add_parser("example1", help="reduced scalar system of the escaping example")
    ex.add_argument("--out", default=".")
    ex.add_argument("--grid", type=int, default=400)
    tri = common(sub.add_parser("export-triangle", help="full P1(t, s) of a previous solve"), needs_input=False)
    tri.add_argument("--max-rows", type=int, default=1_000_000)
    return parser


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _fmt(x):
    return "%.17g" % x


def write_path_csv(path, mp, label):
    """One line per node: time, then the matrix entries row-major."""
    r, c = mp.shape
    header = ["t"] + [f"{label}_{i + 1}_{j + 1}" for i in range(r) for j in range(c)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for t, val in zip(mp.times, mp.values):
            fh.write(",".join([_fmt(t)] + [_fmt(x) for x in val.reshape(-1)]) + "\n")


def read_path_csv(path, grid, shape):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[0] != grid.N + 1 or data.shape[1] != 1 + shape[0] * shape[1]:
        raise ParseError(f"unexpected table shape {data.shape}", field=os.path.basename(path))
    return MatrixPath(grid, data[:, 1:].reshape((-1,) + tuple(shape)))


def resolve_problem(source, grid=None, mollify=None):
    if os.path.exists(source):
        problem = load_problem(source)
        if grid is not None:
            problem = problem.with_grid(grid)
    elif source in BUILTINS:
        problem = get_instance(source, grid)
    else:
        raise ParseError(f"no such file or built-in instance: {source!r}", field="--input")
    if mollify is not None:
        if not mollify > 0:
            raise ParseError("mollification width must be positive", field="--mollify")
        problem = mollify_problem(problem, mollify)
    return problem


def _load_run(out):
    path = os.path.join(out, RUN_FILE)
    if not os.path.exists(path):
        raise ParseError(f"no previous solve found in {out!r}", field="--out")
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _problem_from_run(args):
    run = _load_run(args.out)
    source = args.input or run["input"]
    grid = args.grid if args.grid is not None else run["N"]
    moll = args.mollify if args.mollify is not None else run.get("mollify")
    problem = resolve_problem(source, grid, moll)
    theta = read_path_csv(os.path.join(args.out, "theta.csv"), problem.grid, (problem.k, problem.n))
    return problem, theta, run


def _say(msg):
    print(msg, flush=True)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_validate(args):
    problem = resolve_problem(args.input, args.grid, args.mollify)
    report = validate_assumptions(problem)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "validation.txt"), "w", encoding="utf-8") as fh:
        fh.write(report.to_text())
    for c in report.failures + report.warnings:
        _say(c.line())
    if not report.h2_ok:
        _say("validation FAILED (positivity assumptions)")
        return EXIT_VALIDATION
    if not report.h3_ok:
        _say("validation passed with warnings (monotonicity/caps)")
    else:
        _say("validation passed")
    return EXIT_OK


def cmd_solve(args):
    if not args.tol > 0:
        raise ParseError("tol must be positive", field="--tol")
    problem = resolve_problem(args.input, args.grid, args.mollify)
    if not args.override_assumptions:
        report = validate_assumptions(problem)
        if not report.h2_ok:
            for c in report.failures:
                _say(c.line())
            return EXIT_VALIDATION
        for c in report.failures:
            _say("warning: " + c.line())
    sol, diag = solve_equilibrium(
        problem, tol=args.tol, max_iters=args.max_iters, override_assumptions=True
    )
    out = args.out
    os.makedirs(out, exist_ok=True)
    write_path_csv(os.path.join(out, "theta.csv"), sol.theta, "theta")
    write_path_csv(os.path.join(out, "p1_diag.csv"), sol.p1_diag, "p1")
    write_path_csv(os.path.join(out, "p2.csv"), sol.p2, "p2")
    write_path_csv(os.path.join(out, "value.csv"), sol.value, "v")
    with open(os.path.join(out, "certificates.txt"), "w", encoding="utf-8") as fh:
        fh.write(sol.certificates.to_text())
    with open(os.path.join(out, "diagnostics.txt"), "w", encoding="utf-8") as fh:
        fh.write(diag.to_text().replace(f"elapsed_seconds {diag.elapsed:.3f}\n", ""))
    run = {"input": args.input, "N": problem.grid.N, "mollify": args.mollify, "tol": args.tol}
    with open(os.path.join(out, RUN_FILE), "w", encoding="utf-8") as fh:
        json.dump(run, fh, indent=1, sort_keys=True)
    try:
        dump_problem(problem, os.path.join(out, "problem.yaml"))
    except ValueError:
        pass
    c = sol.certificates
    _say(f"solved {problem.name}: residual {c.residual:.3e}, sup|V| {c.sup_value:.6g} <= {c.cv_bound:.6g}, "
         f"sup|theta| {c.sup_theta:.6g} <= {c.cstar_bound:.6g}")
    return EXIT_OK


def _parse_x0(text, n):
    if text is None:
        return np.ones(n)
    try:
        x = np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise ParseError("x0 must be comma-separated numbers", field="--x0") from None
    if len(x) != n:
        raise ParseError(f"x0 must have {n} components", field="--x0")
    return x


def cmd_verify(args):
    problem, theta, _ = _problem_from_run(args)
    out = args.out
    value = read_path_csv(os.path.join(out, "value.csv"), problem.grid, (problem.n, problem.n))
    cfg = McConfig(paths=args.paths, seed=args.seed, antithetic=args.antithetic)
    x0 = _parse_x0(args.x0, problem.n)
    N = problem.grid.N
    p2 = integrate_p2(problem, theta)
    diag = diag_p1(problem, theta, p2)
    rows = []
    failures = []

    def add(check, t, rep, comps=None):
        est = np.atleast_1d(np.asarray(rep.estimate, float)).reshape(-1)
        se = np.atleast_1d(np.asarray(rep.stderr, float)).reshape(-1)
        tgt = np.atleast_1d(np.asarray(rep.target, float)).reshape(-1) if rep.target is not None else [np.nan] * len(est)
        z = np.atleast_1d(np.asarray(rep.z, float)).reshape(-1) if rep.z is not None else [np.nan] * len(est)
        comps = comps or [str(i) for i in range(len(est))]
        for i in range(len(est)):
            rows.append((check, t, comps[i], est[i], se[i], tgt[i], z[i], rep.passed))
        if not rep.passed:
            failures.append(f"{check} at t={t:.6g}")

    for i in np.linspace(0, N, 6).astype(int)[:-1]:
        rep = mc_p1_diag(problem, theta, p2, int(i), cfg, target=diag[int(i)])
        n = problem.n
        add("p1_diag", i * problem.grid.h, rep, [f"{a + 1}_{b + 1}" for a in range(n) for b in range(n)])
    rep = simulate_closed_loop(problem, theta, p2, x0, 0, cfg)
    add("bsde_identity", 0.0, rep)
    spike_nodes = np.linspace(0, N, 4).astype(int)[:-1]
    for i in spike_nodes:
        i = int(i)
        target = 0.5 * x0 @ value[i] @ x0
        rep = mc_cost(problem, theta, i, x0, cfg, target=target)
        add("cost", i * problem.grid.h, rep)
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 7]))
    h = problem.grid.h
    for i in spike_nodes:
        i = int(i)
        ladder = [e for e in DEFAULT_LADDER if i + round(e / h) <= N and e >= 2 * h]
        if len(ladder) < 2:
            continue
        dirs = rng.standard_normal((2, problem.k))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        dirs = np.concatenate([dirs, -dirs]) * SPIKE_SCALE * max(1.0, float(np.linalg.norm(x0)))
        rep = spike_test(problem, None, i, x0, dirs, ladder, cfg, theta=theta)
        add("spike", i * h, rep, [f"dir{d}" for d in range(len(dirs))])

    with open(os.path.join(out, "verify.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write("check,t,component,estimate,stderr,target,z,passed\n")
        for check, t, comp, est, se, tgt, z, ok in rows:
            fh.write(",".join([check, _fmt(t), comp, _fmt(est), _fmt(se), _fmt(tgt), _fmt(z), str(bool(ok)).lower()]) + "\n")
    if failures:
        _say("verification FAILED: " + "; ".join(failures))
        return EXIT_VERIFY
    _say(f"verification passed ({len(rows)} rows)")
    return EXIT_OK


#: spike size relative to ``max(1, |x0|)``
SPIKE_SCALE = 0.1


def cmd_example1(args):
    if args.grid < 2:
        raise ParseError("grid needs at least two steps", field="--grid")
    run = integrate_reduced_example1(args.grid)
    os.makedirs(args.out, exist_ok=True)
    s, p1, p2, cmp_ = run.s, run.p1, run.p2, run.comparison
    with open(os.path.join(args.out, "example1.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write("s,p1,p2,comparison\n")
        for row in zip(s, p1, p2, cmp_):
            fh.write(",".join(_fmt(x) for x in row) + "\n")
    h = s[1] - s[0]
    band = (s > 1 + 4 * h) & (s < 2) & np.isfinite(p1)
    below = s[band][~(p1[band] > cmp_[band])]
    _say(f"terminal P1(2) = {_fmt(p1[-1])}, P2(2) = {_fmt(p2[-1])}")
    ok = True
    if len(below):
        ok = False
        _say(f"comparison FAILED: P1(s) <= 1/(s-1) at {len(below)} nodes, first s = {below.max():.6g}")
    if run.blowup_index is None:
        _say(f"no blow-up on [0, 2]; P1(0) = {_fmt(p1[0])}")
        return EXIT_VERIFY
    _say(f"blow-up detected at s = {run.blowup_time:.6g}")
    return EXIT_BLOWUP if ok else EXIT_VERIFY


def cmd_export_triangle(args):
    problem, theta, _ = _problem_from_run(args)
    N, n = problem.grid.N, problem.n
    rows = (N + 1) * (N + 2) // 2
    if rows > args.max_rows:
        _say(f"triangle has {rows} rows, above the cap of {args.max_rows}")
        return EXIT_CAP
    p2 = integrate_p2(problem, theta)
    tri = p1_triangle(problem, theta, p2)
    nodes = problem.grid.nodes
    header = ["t", "s"] + [f"p1_{a + 1}_{b + 1}" for a in range(n) for b in range(n)]
    with open(os.path.join(args.out, "triangle.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(N + 1):
            for j in range(i, N + 1):
                fh.write(",".join([_fmt(nodes[i]), _fmt(nodes[j])] + [_fmt(x) for x in tri[i, j].reshape(-1)]) + "\n")
    _say(f"wrote {rows} rows")
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "solve": cmd_solve,
    "verify": cmd_verify,
    "example1": cmd_example1,
    "export-triangle": cmd_export_triangle,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AssumptionError, NotPositiveDefiniteError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NoContractionError, NoConvergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACTION
    except BlowUpError as exc:
        where = f" (first bad time {exc.time:.6g})" if exc.time is not None else ""
        print(f"error: {exc}{where}", file=sys.stderr)
        return EXIT_BLOWUP
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
