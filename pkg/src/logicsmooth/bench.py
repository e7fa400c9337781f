"""Multistart experiments: randomized initial guesses, classification and
the table / trajectory outputs."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import baselines as bl
from . import quadrotor as qd
from .logic_ast import eval_formula
from .nlp import (NlpProblem, PipelineOptions, SolveReport, SolverOptions, assemble_smooth_ocp,
                  check_regularity, project_simplex, solve)

log = logging.getLogger(__name__)

METHODS = ("smoothed", bl.BIGM, bl.COMPLEMENTARITY)
PROBLEMS = ("p1", "p2")
# literal tightening used by the experiments, well above the 1e-6 feasibility tolerance
BENCH_MARGIN = 1e-5
ABSENT = "n/a"


@dataclass(frozen=True)
class TrialConfig:
    n_trials: int = 100
    seed: int = 0
    method: str = "smoothed"
    problem: str = "p1"
    feas_tol: float = 1e-6
    opt_rel_tol: float = 1e-2
    big_m: float = bl.DEFAULT_BIG_M
    margin: float = BENCH_MARGIN
    sharing: str = "per_clause"
    resolve: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError("n_trials must be at least 1")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


@dataclass
class TrialResult:
    index: int
    status: str
    cost: float
    wall_time: float
    feasible: bool
    oracle: bool
    point: np.ndarray = field(repr=False)


@dataclass
class BenchReport:
    config: TrialConfig
    optimal: int
    suboptimal: int
    infeasible: int
    avg_cost: float | None
    avg_time: float
    avg_time_feasible: float | None
    median_time_feasible: float | None
    max_time: float
    best_cost: float | None
    best_trajectory: np.ndarray | None
    best_inputs: np.ndarray | None
    trials: list[TrialResult] = field(default_factory=list, repr=False)
    regularity: list = field(default_factory=list, repr=False)

    @property
    def n_feasible(self) -> int:
        return self.optimal + self.suboptimal

    @property
    def feasible_rate(self) -> float:
        return self.n_feasible / self.config.n_trials

    def counts(self) -> dict:
        return {"optimal": self.optimal, "suboptimal": self.suboptimal,
                "infeasible": self.infeasible}


def build_nlp(cfg: TrialConfig) -> tuple[qd.LogicOcp, NlpProblem]:
    problem = qd.build(cfg.problem)
    opts = PipelineOptions(margin=cfg.margin, sharing=cfg.sharing, resolve=cfg.resolve)
    if cfg.method == "smoothed":
        return problem, assemble_smooth_ocp(problem.base, opts)
    return problem, bl.assemble_baseline(problem.base, cfg.method, opts, cfg.big_m)


def initial_guess(problem: qd.LogicOcp, nlp: NlpProblem, rng: np.random.Generator) -> np.ndarray:
    """Random inputs, states from their rollout, random lambda / gates."""
    prm = problem.params
    us = rng.uniform(prm.u_min, prm.u_max, size=(prm.horizon, qd.INPUT_DIM))
    xs = qd.rollout(prm, us)
    parts = [qd.pack(prm, xs, us)]
    for block in nlp.simplex_blocks:
        parts.append(project_simplex(rng.uniform(size=len(block))))
    gates = nlp.aux.get("gate")
    if gates is not None:
        parts.append(rng.uniform(size=len(gates)))
    return np.concatenate(parts)


def _trial_rngs(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _run_one(args) -> TrialResult:
    cfg, index, problem, nlp, z0, sopts = args
    try:
        rep = solve(nlp, z0, sopts)
    except Exception as exc:  # never let one trial kill the batch
        log.error("trial %d raised %s: %s", index, type(exc).__name__, exc)
        return TrialResult(index, "error", math.nan, 0.0, False, False, np.asarray(z0))
    feasible = rep.feasible and max(rep.max_ineq_violation, rep.max_eq_violation) <= cfg.feas_tol
    oracle = bool(eval_formula(problem.base.logic, rep.point[: nlp.n_base], cfg.feas_tol)) if feasible else False
    if rep.status == "error":
        log.warning("trial %d: %s", index, rep.message)
    return TrialResult(index, rep.status, rep.cost, rep.wall_time, feasible, oracle, rep.point)


_POOL_STATE: dict = {}


def _pool_init(cfg):
    problem, nlp = build_nlp(cfg)
    _POOL_STATE.update(problem=problem, nlp=nlp)


def _pool_run(args) -> TrialResult:
    cfg, index, z0, sopts = args
    return _run_one((cfg, index, _POOL_STATE["problem"], _POOL_STATE["nlp"], z0, sopts))


def run_trials(cfg: TrialConfig, solver: SolverOptions | None = None) -> BenchReport:
    """Solve ``cfg.n_trials`` randomized starts and classify the outcomes.

    Initial guesses come from per-trial generators spawned from ``cfg.seed``
    before any solve runs, so results do not depend on ``workers``.
    """
    sopts = solver or SolverOptions(feas_tol=cfg.feas_tol, seed=cfg.seed)
    problem, nlp = build_nlp(cfg)
    starts = [initial_guess(problem, nlp, rng) for rng in _trial_rngs(cfg.seed, cfg.n_trials)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers, initializer=_pool_init, initargs=(cfg,)) as pool:
            results = list(pool.map(_pool_run, [(cfg, i, z0, sopts) for i, z0 in enumerate(starts)]))
    else:
        results = [_run_one((cfg, i, problem, nlp, z0, sopts)) for i, z0 in enumerate(starts)]
    report = summarize(cfg, results, nlp)
    if report.best_trajectory is not None:
        best = min((r for r in results if r.feasible), key=lambda r: r.cost)
        report.regularity = check_regularity(nlp, best.point)
        log.info("regularity at best point: %d rank-deficient clause(s)", len(report.regularity))
    return report


def summarize(cfg: TrialConfig, results: list[TrialResult], nlp: NlpProblem | None = None) -> BenchReport:
    feas = [r for r in results if r.feasible]
    best = min(feas, key=lambda r: r.cost) if feas else None
    optimal = suboptimal = 0
    if best is not None:
        limit = best.cost * (1.0 + cfg.opt_rel_tol) if best.cost >= 0 else best.cost * (1.0 - cfg.opt_rel_tol)
        for r in feas:
            if r.cost <= limit:
                optimal += 1
            else:
                suboptimal += 1
    times = [r.wall_time for r in results]
    ftimes = [r.wall_time for r in feas]
    traj = inputs = None
    if best is not None:
        lay = qd.build(cfg.problem).params.layout() if nlp is None or nlp.base is None \
            else nlp.base.layout
        if lay is None:
            # not a trajectory problem: keep the base part of the point
            traj = np.asarray(best.point, dtype=float)[: nlp.n_base]
        else:
            traj, inputs = lay.split(best.point)
    return BenchReport(
        config=cfg,
        optimal=optimal,
        suboptimal=suboptimal,
        infeasible=len(results) - len(feas),
        avg_cost=statistics.fmean(r.cost for r in feas) if feas else None,
        avg_time=statistics.fmean(times) if times else 0.0,
        avg_time_feasible=statistics.fmean(ftimes) if ftimes else None,
        median_time_feasible=statistics.median(ftimes) if ftimes else None,
        max_time=max(times, default=0.0),
        best_cost=best.cost if best else None,
        best_trajectory=None if traj is None else np.array(traj),
        best_inputs=None if inputs is None else np.array(inputs),
        trials=results,
    )


# ---------------------------------------------------------------------------
# output

_COLUMNS = ("Method", "Opt. #", "Sub-Opt. #", "Inf. #", "Avg. Cost", "Avg. Time", "Avg. Time (Feas.)",
            "Max Time")


def _ms(t):
    return ABSENT if t is None else f"{1000.0 * t:.1f} ms"


def table_rows(reports: list[BenchReport]) -> list[list[str]]:
    rows = []
    for r in reports:
        rows.append([
            r.config.method,
            str(r.optimal),
            str(r.suboptimal),
            str(r.infeasible),
            ABSENT if r.avg_cost is None else f"{r.avg_cost:.2f}",
            _ms(r.avg_time),
            _ms(r.avg_time_feasible),
            _ms(r.max_time),
        ])
    return rows


def emit_table(reports, fmt: str = "text") -> str:
    """Aligned text table or JSON for one or more reports."""
    if isinstance(reports, BenchReport):
        reports = [reports]
    if fmt == "json":
        return json.dumps([report_dict(r) for r in reports], indent=2)
    if fmt != "text":
        raise ValueError(f"unknown table format {fmt!r}")
    rows = [list(_COLUMNS)] + table_rows(reports)
    widths = [max(len(row[c]) for row in rows) for c in range(len(_COLUMNS))]
    lines = []
    for n, row in enumerate(rows):
        cells = [row[0].ljust(widths[0])] + [row[c].rjust(widths[c]) for c in range(1, len(row))]
        lines.append("  ".join(cells).rstrip())
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def report_dict(r: BenchReport) -> dict:
    return {
        "config": asdict(r.config),
        "counts": r.counts(),
        "avg_cost": r.avg_cost,
        "avg_time": r.avg_time,
        "avg_time_feasible": r.avg_time_feasible,
        "median_time_feasible": r.median_time_feasible,
        "max_time": r.max_time,
        "best_cost": r.best_cost,
        "best_trajectory": None if r.best_trajectory is None else r.best_trajectory.tolist(),
        "best_inputs": None if r.best_inputs is None else r.best_inputs.tolist(),
    }


@dataclass
class TrajectoryTable:
    """Per-step states and inputs plus the geometry rows used for plotting."""

    states: np.ndarray                  # (N+1, 6)
    inputs: np.ndarray                  # (N, 2); last state row has no input
    geometry: list[tuple[str, float, float, float]] = field(default_factory=list)

    def __eq__(self, other):
        return (isinstance(other, TrajectoryTable)
                and np.array_equal(self.states, other.states)
                and np.array_equal(self.inputs, other.inputs)
                and self.geometry == other.geometry)


def geometry_rows(problem: qd.LogicOcp) -> list[tuple[str, float, float, float]]:
    rows = [(f"obstacle:{c.name}", c.cx, c.cy, c.r) for c in problem.obstacles]
    rows += [(f"trigger@{k}:{c.name}", c.cx, c.cy, c.r) for k, c in problem.triggers]
    rows += [(f"target:{name}", x, y, 0.0) for name, x, y in problem.targets]
    return rows


_HEADER = ["k", "x1", "x2", "x3", "x4", "x5", "x6", "v1", "v2"]


def format_trajectory(t: TrajectoryTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_HEADER)
    n = t.states.shape[0]
    for k in range(n):
        u = t.inputs[k] if k < t.inputs.shape[0] else (None, None)
        w.writerow([k] + [repr(float(v)) for v in t.states[k]]
                   + ["" if v is None else repr(float(v)) for v in u])
    for name, cx, cy, r in t.geometry:
        buf.write(f"# geometry,{name},{cx!r},{cy!r},{r!r}\n")
    return buf.getvalue()


def parse_trajectory(text: str) -> TrajectoryTable:
    geometry = []
    body = []
    for line in text.splitlines():
        if line.startswith("# geometry,"):
            _, name, cx, cy, r = line.split(",")
            geometry.append((name, float(cx), float(cy), float(r)))
        elif line.strip():
            body.append(line)
    rows = list(csv.reader(body))
    if not rows or rows[0] != _HEADER:
        raise ValueError(f"trajectory CSV must start with header {','.join(_HEADER)}")
    states, inputs = [], []
    for row in rows[1:]:
        states.append([float(v) for v in row[1:7]])
        if row[7] != "":
            inputs.append([float(row[7]), float(row[8])])
    return TrajectoryTable(np.array(states), np.array(inputs).reshape(-1, 2), geometry)


def trajectory_from_report(report: BenchReport) -> TrajectoryTable:
    if report.best_trajectory is None:
        raise ValueError("report has no feasible trajectory")
    problem = qd.build(report.config.problem)
    return TrajectoryTable(report.best_trajectory, report.best_inputs, geometry_rows(problem))


def emit_trajectory(report: BenchReport, path) -> Path:
    path = Path(path)
    try:
        path.write_text(format_trajectory(trajectory_from_report(report)), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write trajectory to {path}: {exc}") from exc
    return path
