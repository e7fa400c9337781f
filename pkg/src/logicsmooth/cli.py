"""Command line entry point: ``logicsmooth {transform,solve,bench,demo,check}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import baselines as bl
from . import bench
from . import dsl
from . import quadrotor as qd
from . import transform as tf
from .logic_ast import eval_formula
from .nlp import (NlpProblem, PipelineOptions, SolverOptions, assemble_smooth_ocp, check_regularity,
                  from_base, solve)

CONFIG_ENV = "LOGICSMOOTH_CONFIG"

EXIT_OK, EXIT_INFEASIBLE, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 3

# every option that may appear in a config file, with its default
DEFAULTS = {
    "method": "smoothed",
    "trials": 100,
    "seed": 0,
    "workers": 1,
    "big_m": bl.DEFAULT_BIG_M,
    "margin": bench.BENCH_MARGIN,
    "sharing": "per_clause",
    "resolve": True,
    "eq_mode": "split",
    "epsilon": tf.DEFAULT_EPSILON,
    "opt_rel_tol": 1e-2,
    "feas_tol": 1e-6,
    "stat_tol": 1e-6,
    "inner_max_iter": 500,
    "outer_max_iter": 50,
    "rho0": 10.0,
    "rho_growth": 10.0,
    "rho_max": 1e10,
    "stall_outer": 3,
}

_HELP = {
    "method": "logic encoding: smoothed, bigm or comp",
    "trials": "number of multistart trials",
    "seed": "master seed for initial guesses",
    "workers": "worker processes for bench/demo",
    "big_m": "gate constant M for bigm/comp",
    "margin": "tightening added to inequality literals",
    "sharing": "lambda sharing: per_clause or shared",
    "resolve": "add resolvents on complementary literals",
    "eq_mode": "equality elimination: split or square",
    "epsilon": "margin of the negation rewrite -p + eps <= 0",
    "opt_rel_tol": "relative cost gap counted as optimal",
    "feas_tol": "feasibility tolerance",
    "stat_tol": "stationarity tolerance",
    "inner_max_iter": "inner iteration cap",
    "outer_max_iter": "outer iteration cap",
    "rho0": "initial penalty",
    "rho_growth": "penalty growth factor",
    "rho_max": "penalty cap",
    "stall_outer": "outer iterations without progress before giving up",
}


class UsageError(Exception):
    pass


def _add_options(p: argparse.ArgumentParser, keys):
    for key in keys:
        default = DEFAULTS[key]
        kw = {"dest": key, "default": argparse.SUPPRESS,
              "help": f"{_HELP[key]} (default: {default})"}
        if key == "method":
            kw["choices"] = bench.METHODS
        elif key == "sharing":
            kw["choices"] = ("per_clause", "shared")
        elif key == "eq_mode":
            kw["choices"] = ("split", "square")
        elif isinstance(default, bool):
            kw["action"] = argparse.BooleanOptionalAction
        else:
            kw["type"] = type(default)
        flag = "--" + key.replace("_", "-")
        if key == "trials":
            p.add_argument(flag, "-n", **kw)
        else:
            p.add_argument(flag, **kw)


_PIPELINE = ("method", "big_m", "margin", "sharing", "resolve", "eq_mode", "epsilon")
_SOLVER = ("feas_tol", "stat_tol", "inner_max_iter", "outer_max_iter", "rho0", "rho_growth",
           "rho_max", "stall_outer", "seed")
_BENCH = ("trials", "workers", "opt_rel_tol")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="logicsmooth",
        description="Smooth reformulation of logic constraints in optimal control.",
        epilog=f"Options may also come from a JSON config file (--config or ${CONFIG_ENV}); "
               "command-line flags take precedence.",
    )
    parser.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV} if set)")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("transform", help="print the NNF, CNF and smoothed forms of a problem's logic")
    p.add_argument("problem", help="bundled name (p1, p2) or path to an .lc file")
    p.add_argument("--dump", choices=("nnf", "cnf", "smoothed", "all"), default="all",
                   help="which form to print (default: all)")
    _add_options(p, ("sharing", "resolve", "eq_mode", "epsilon", "margin"))

    p = sub.add_parser("solve", help="single solve from a hover (or random) initial guess")
    p.add_argument("problem", help="bundled name (p1, p2) or path to an .lc file")
    p.add_argument("--init", choices=("hover", "random"), default="hover",
                   help="initial guess (default: hover)")
    p.add_argument("--report", help="write the SolveReport JSON here (default: stdout)")
    p.add_argument("--trajectory", help="write the trajectory CSV here")
    _add_options(p, _PIPELINE + _SOLVER)

    p = sub.add_parser("bench", help="multistart benchmark on a bundled problem")
    p.add_argument("problem", choices=bench.PROBLEMS, help="bundled problem")
    p.add_argument("--json", help="also write the report as JSON here")
    p.add_argument("--trajectory", help="write the best trajectory CSV here")
    _add_options(p, _PIPELINE + _SOLVER + _BENCH)

    p = sub.add_parser("demo", help="bench a bundled problem and save its best trajectory")
    p.add_argument("problem", choices=bench.PROBLEMS, help="bundled problem")
    p.add_argument("--out-dir", default=".", help="directory for <problem>_best.csv (default: .)")
    _add_options(p, _PIPELINE + _SOLVER + _BENCH)

    p = sub.add_parser("check", help="evaluate the logic, max-min value and regularity at a point")
    p.add_argument("problem", help="bundled name (p1, p2) or path to an .lc file")
    p.add_argument("point", help="JSON list or whitespace/comma separated numbers (x then v)")
    _add_options(p, ("eq_mode", "epsilon"))
    return parser


def load_config(path: str | None) -> dict:
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    unknown = sorted(set(data) - set(DEFAULTS))
    if unknown:
        raise UsageError(f"unknown config key(s): {', '.join(unknown)}")
    for key, value in data.items():
        want = type(DEFAULTS[key])
        ok = isinstance(value, want) and not (want is not bool and isinstance(value, bool))
        if want is float and isinstance(value, int) and not isinstance(value, bool):
            ok = True
        if not ok:
            raise UsageError(f"config key {key!r} must be {want.__name__}, got {value!r}")
    return data


def resolve(args: argparse.Namespace) -> dict:
    """Defaults, then config file, then explicit flags."""
    merged = dict(DEFAULTS)
    merged.update(load_config(args.config))
    for key in DEFAULTS:
        if hasattr(args, key):
            merged[key] = getattr(args, key)
    if merged["method"] not in bench.METHODS:
        raise UsageError(f"method must be one of {', '.join(bench.METHODS)}")
    return merged


def _solver_options(cfg: dict) -> SolverOptions:
    return SolverOptions(**{f.name: cfg[f.name] for f in fields(SolverOptions)})


def _pipeline(cfg: dict) -> PipelineOptions:
    return PipelineOptions(eq_mode=cfg["eq_mode"], epsilon=cfg["epsilon"], sharing=cfg["sharing"],
                           margin=cfg["margin"], resolve=cfg["resolve"])


def _load(source: str):
    try:
        return dsl.load_problem(source)
    except FileNotFoundError:
        raise UsageError(f"no such problem file: {source}") from None
    except dsl.DslError as exc:
        raise UsageError(f"{source}: {exc}") from None


def _assemble(base, cfg) -> NlpProblem:
    opts = _pipeline(cfg)
    if cfg["method"] == "smoothed":
        return assemble_smooth_ocp(base, opts)
    return bl.assemble_baseline(base, cfg["method"], opts, cfg["big_m"])


def _start(base, nlp: NlpProblem, init: str, seed: int) -> np.ndarray:
    lay = base.layout
    lo, hi = nlp.vars.bounds_arrays()
    z = np.zeros(nlp.vars.count)
    if lay is not None and isinstance(lay.model, qd.QuadParams):
        prm = lay.model
        if init == "random":
            rng = np.random.default_rng(seed)
            us = rng.uniform(prm.u_min, prm.u_max, size=(prm.horizon, qd.INPUT_DIM))
        else:
            us = np.full((prm.horizon, qd.INPUT_DIM), prm.hover_thrust)
        z[: nlp.n_base] = qd.pack(prm, qd.rollout(prm, us), us)
    for block in nlp.simplex_blocks:
        z[block.start:block.stop] = 1.0 / len(block)
    gates = nlp.aux.get("gate")
    if gates is not None:
        z[gates.start:gates.stop] = 0.5
    return np.clip(z, lo, hi)


def _write_or_print(text: str, path: str | None):
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def cmd_transform(args, cfg) -> int:
    base = _load(args.problem)
    eps = tf.EpsilonPolicy(cfg["epsilon"])
    lay = base.layout
    nnf = tf.to_nnf(tf.eliminate_equalities(base.logic, cfg["eq_mode"]), eps)
    m = tf.to_cnf(nnf)
    if cfg["resolve"]:
        m = tf.add_resolvents(m, eps)
    out = []
    if args.dump in ("nnf", "all"):
        out += ["# NNF", dsl.format_formula(nnf, lay), ""]
    if args.dump in ("cnf", "all"):
        out.append(f"# CNF: {m.n_clauses} clause(s), arities {list(m.arities)}")
        for i, clause in enumerate(m.clauses):
            out.append(f"clause {i}: " + "  OR  ".join(f"{dsl.format_expr(p, lay)} <= 0" for p in clause))
        out.append("")
    if args.dump in ("smoothed", "all"):
        nlp = assemble_smooth_ocp(base, _pipeline(cfg))
        n = len(base.ineqs)
        out.append(f"# smoothed: {nlp.n_logic_ineqs} inequalities, {nlp.n_logic_eqs} simplex equalities, "
                   f"{len(nlp.positivity)} weights")
        for g in nlp.ineqs[n:]:
            out.append(f"{dsl.format_expr(g, None)} <= 0")
        for h in nlp.eqs[len(base.eqs):]:
            out.append(f"{dsl.format_expr(h, None)} = 0")
        out.append("")
    sys.stdout.write("\n".join(out))
    return EXIT_OK


def cmd_solve(args, cfg) -> int:
    base = _load(args.problem)
    nlp = _assemble(base, cfg)
    if nlp.method == "smoothed" and nlp.maxmin is None:
        nlp = from_base(base)
    z0 = _start(base, nlp, args.init, cfg["seed"])
    rep = solve(nlp, z0, _solver_options(cfg))
    _write_or_print(rep.to_json(), args.report)
    holds = bool(eval_formula(base.logic, rep.point[: nlp.n_base], cfg["feas_tol"]))
    logging.getLogger("logicsmooth").info("status %s, cost %.6g, logic holds: %s", rep.status, rep.cost, holds)
    if args.trajectory:
        if base.layout is None or base.layout.state_dim != qd.STATE_DIM:
            raise UsageError("trajectory CSV needs a quadrotor-shaped problem")
        xs, us = base.layout.split(rep.point)
        Path(args.trajectory).write_text(bench.format_trajectory(bench.TrajectoryTable(xs, us)),
                                         encoding="utf-8")
    return EXIT_OK if rep.feasible else EXIT_INFEASIBLE


def _trial_config(args, cfg) -> bench.TrialConfig:
    return bench.TrialConfig(n_trials=cfg["trials"], seed=cfg["seed"], method=cfg["method"],
                             problem=args.problem, feas_tol=cfg["feas_tol"],
                             opt_rel_tol=cfg["opt_rel_tol"], big_m=cfg["big_m"],
                             margin=cfg["margin"], sharing=cfg["sharing"], resolve=cfg["resolve"],
                             workers=cfg["workers"])


def cmd_bench(args, cfg) -> int:
    report = bench.run_trials(_trial_config(args, cfg), _solver_options(cfg))
    sys.stdout.write(bench.emit_table(report))
    if report.regularity:
        print(f"regularity: {len(report.regularity)} clause(s) with dependent active gradients at the best point")
    if args.json:
        Path(args.json).write_text(bench.emit_table(report, "json"), encoding="utf-8")
    if args.trajectory and report.best_trajectory is not None:
        bench.emit_trajectory(report, args.trajectory)
    return EXIT_OK if report.n_feasible else EXIT_INFEASIBLE


def cmd_demo(args, cfg) -> int:
    report = bench.run_trials(_trial_config(args, cfg), _solver_options(cfg))
    sys.stdout.write(bench.emit_table(report))
    if report.best_trajectory is None:
        print("no feasible trial")
        return EXIT_INFEASIBLE
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = bench.emit_trajectory(report, out / f"{args.problem}_best.csv")
    print(f"best cost {report.best_cost:.4f}; trajectory written to {path}")
    return EXIT_OK


def read_point(path: str) -> np.ndarray:
    text = Path(path).read_text(encoding="utf-8").strip()
    try:
        vals = json.loads(text) if text.startswith("[") else [float(t) for t in text.replace(",", " ").split()]
    except ValueError as exc:
        raise UsageError(f"cannot read point from {path}: {exc}") from None
    return np.asarray(vals, dtype=float).ravel()


def cmd_check(args, cfg) -> int:
    base = _load(args.problem)
    try:
        z = read_point(args.point)
    except OSError as exc:
        raise UsageError(str(exc)) from None
    if z.size < base.vars.count:
        raise UsageError(f"point has {z.size} values, the problem needs {base.vars.count}")
    z = z[: base.vars.count]
    holds = bool(eval_formula(base.logic, z, cfg["feas_tol"]))
    _, m = tf.reformulate(base.logic, cfg["eq_mode"], tf.EpsilonPolicy(cfg["epsilon"]))
    mm = tf.eval_maxmin(m, z)
    nlp = assemble_smooth_ocp(base, PipelineOptions(eq_mode=cfg["eq_mode"], epsilon=cfg["epsilon"]))
    issues = check_regularity(nlp, z)
    print(f"logic holds: {holds}")
    print(f"max-min value: {mm:.6g}")
    print(f"regularity: {'ok' if not issues else f'{len(issues)} rank-deficient clause(s)'}")
    for issue in issues:
        print(f"  clause {issue.clause}: active literals {list(issue.active)}, rank {issue.rank}")
    return EXIT_OK if holds else EXIT_INFEASIBLE


COMMANDS = {"transform": cmd_transform, "solve": cmd_solve, "bench": cmd_bench, "demo": cmd_demo,
            "check": cmd_check}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"logicsmooth: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, TypeError) as exc:
        print(f"logicsmooth: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # pragma: no cover - last resort
        logging.getLogger("logicsmooth").exception("internal error")
        print(f"logicsmooth: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
