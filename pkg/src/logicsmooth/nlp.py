"""Smooth NLP assembly and the bundled augmented-Lagrangian backend."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from functools import cached_property
from typing import Any, Callable, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import expr as ex
from . import transform as tf
from .expr import CompiledExprs, Expr, VarSpace
from .logic_ast import EQUALITY, TRUE, And, Formula, Prop, propositions

log = logging.getLogger(__name__)

FEASIBLE_OPTIMAL = "feasible_optimal_candidate"
FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
ERROR = "error"


@dataclass(frozen=True)
class TrajectoryLayout:
    """Time-major state blocks followed by input blocks."""

    horizon: int
    state_dim: int
    input_dim: int
    model: Any = None

    @property
    def n_states(self) -> int:
        return (self.horizon + 1) * self.state_dim

    @property
    def n_inputs(self) -> int:
        return self.horizon * self.input_dim

    def x_index(self, k: int, j: int) -> int:
        """Index of state component ``j`` (1-based) at step ``k``."""
        if not (0 <= k <= self.horizon and 1 <= j <= self.state_dim):
            raise IndexError(f"x[{k}][{j}] outside horizon {self.horizon}, dim {self.state_dim}")
        return k * self.state_dim + j - 1

    def u_index(self, k: int, j: int) -> int:
        if not (0 <= k < self.horizon and 1 <= j <= self.input_dim):
            raise IndexError(f"v[{k}][{j}] outside horizon {self.horizon}, dim {self.input_dim}")
        return self.n_states + k * self.input_dim + j - 1

    def split(self, z) -> tuple[np.ndarray, np.ndarray]:
        z = np.asarray(z, dtype=float)
        xs = z[: self.n_states].reshape(self.horizon + 1, self.state_dim)
        us = z[self.n_states: self.n_states + self.n_inputs].reshape(self.horizon, self.input_dim)
        return xs, us


@dataclass(frozen=True)
class BaseOcp:
    """Logic-constrained problem: min cost s.t. ineqs <= 0, eqs = 0, logic true."""

    vars: VarSpace
    cost: Expr
    ineqs: tuple[Expr, ...] = ()
    eqs: tuple[Expr, ...] = ()
    logic: Formula = TRUE
    layout: TrajectoryLayout | None = None

    def __post_init__(self):
        object.__setattr__(self, "ineqs", tuple(self.ineqs))
        object.__setattr__(self, "eqs", tuple(self.eqs))
        top = ex.max_var_index([self.cost, *self.ineqs, *self.eqs]
                               + [p.func for p in propositions(self.logic)])
        if top >= self.vars.count:
            raise ValueError(f"expression uses z{top} but the space has {self.vars.count} variables")


@dataclass(frozen=True)
class PipelineOptions:
    """Knobs for the logic reformulation.

    ``margin`` tightens every literal that stems from an inequality
    proposition to ``p + margin <= 0`` so that points within solver
    tolerance satisfy the logic exactly.  Literals produced by equality
    elimination are never tightened (the pair ``q <= 0, -q <= 0`` would
    become contradictory).
    """

    eq_mode: str = "split"
    epsilon: float = tf.DEFAULT_EPSILON
    sharing: Any = "per_clause"
    cnf_cap: int = tf.DEFAULT_CNF_CAP
    margin: float = 0.0
    resolve: bool = False


@dataclass(eq=False)
class NlpProblem:
    vars: VarSpace
    cost: Expr
    ineqs: tuple[Expr, ...]
    eqs: tuple[Expr, ...]
    simplex_blocks: tuple[range, ...] = ()
    positivity: tuple[int, ...] = ()
    n_base: int = 0
    maxmin: tf.MaxMinForm | None = None
    method: str = "smoothed"
    aux: dict = field(default_factory=dict)
    base: BaseOcp | None = None
    n_logic_ineqs: int = 0
    n_logic_eqs: int = 0

    @property
    def n_g_star(self) -> int:
        """Inequality count with lambda positivity counted as constraints."""
        return len(self.ineqs) + len(self.positivity)

    @property
    def n_h_star(self) -> int:
        return len(self.eqs)

    @cached_property
    def compiled(self) -> CompiledExprs:
        return ex.compile_exprs([self.cost, *self.ineqs, *self.eqs], self.vars.count)


def equality_literals(f: Formula, mode: str) -> list[Expr]:
    """Exprs that equality elimination introduces (kept alive by the list)."""
    out: list[Expr] = []
    for p in propositions(f):
        if p.kind == EQUALITY:
            out.extend([p.func, -p.func] if mode == "split" else [p.func ** 2])
    return out


def tighten(m: tf.MaxMinForm, margin: float, exempt: Sequence[Expr]) -> tf.MaxMinForm:
    if margin == 0.0:
        return m
    skip = {id(e) for e in exempt}
    return tf.MaxMinForm(tuple(
        tuple(p if id(p) in skip else p + margin for p in clause) for clause in m.clauses
    ))


def logic_maxmin(base: BaseOcp, opts: PipelineOptions) -> tf.MaxMinForm:
    _, m = tf.reformulate(base.logic, opts.eq_mode, tf.EpsilonPolicy(opts.epsilon), opts.cnf_cap,
                         opts.resolve)
    return m


def assemble_smooth_ocp(base: BaseOcp, opts: PipelineOptions = PipelineOptions()) -> NlpProblem:
    """Append smoothed logic constraints and simplex blocks to the base problem."""
    m = logic_maxmin(base, opts)
    solved = tighten(m, opts.margin, equality_literals(base.logic, opts.eq_mode))
    s = tf.smooth(solved, base.vars.count, opts.sharing)
    k = s.n_lambda
    names = []
    for b, block in enumerate(s.simplex_blocks):
        names += [f"lam[{b}][{j}]" for j in range(len(block))]
    space = base.vars.extend(k, names, [0.0] * k, [1.0] * k)
    unity = tuple(ex.esum(ex.var(j) for j in block) - 1.0 for block in s.simplex_blocks)
    return NlpProblem(
        vars=space,
        cost=base.cost,
        ineqs=base.ineqs + s.constraints,
        eqs=base.eqs + unity,
        simplex_blocks=s.simplex_blocks,
        positivity=tuple(range(base.vars.count, base.vars.count + k)),
        n_base=base.vars.count,
        maxmin=m,
        method="smoothed",
        aux={"lambda": range(base.vars.count, base.vars.count + k)},
        base=base,
        n_logic_ineqs=len(s.constraints),
        n_logic_eqs=len(unity),
    )


def expected_counts(n_g: int, n_h: int, arities: Sequence[int]) -> tuple[int, int]:
    """Constraint counts of the smoothed program from the clause structure."""
    n_and = len(arities) - 1
    n_or = [a - 1 for a in arities]
    return n_g + n_and + 1 + sum(o + 1 for o in n_or), n_h + n_and + 1


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto ``{x >= 0, sum x = 1}`` (sort-based)."""
    v = np.asarray(v, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("cannot project an empty vector")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    x = np.maximum(v - theta, 0.0)
    # absorb rounding into the largest entry so the sum is 1 to machine precision
    x[np.argmax(x)] += 1.0 - x.sum()
    return np.maximum(x, 0.0)


# ---------------------------------------------------------------------------
# solver


@dataclass(frozen=True)
class SolverOptions:
    feas_tol: float = 1e-6
    stat_tol: float = 1e-6
    inner_max_iter: int = 500
    outer_max_iter: int = 50
    rho0: float = 10.0
    rho_growth: float = 10.0
    rho_max: float = 1e10
    # stop after this many consecutive outer iterations that shrink the
    # violation by less than 10 percent (infeasible stationary point)
    stall_outer: int = 3
    seed: int = 0

    @classmethod
    def from_mapping(cls, data: dict) -> "SolverOptions":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown solver option(s): {', '.join(sorted(unknown))}")
        return cls(**data)


@dataclass
class SolveReport:
    status: str
    point: np.ndarray
    cost: float
    max_ineq_violation: float
    max_eq_violation: float
    iterations: int
    wall_time: float
    ineq_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    eq_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    outer_iterations: int = 0
    message: str = ""

    @property
    def feasible(self) -> bool:
        return self.status in (FEASIBLE_OPTIMAL, FEASIBLE)

    def to_json(self) -> str:
        d = asdict(self)
        for key in ("point", "ineq_multipliers", "eq_multipliers"):
            d[key] = np.asarray(d[key], dtype=float).tolist()
        return json.dumps(d, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SolveReport":
        d = json.loads(text)
        for key in ("point", "ineq_multipliers", "eq_multipliers"):
            d[key] = np.asarray(d[key], dtype=float)
        return cls(**d)


def violations(p: NlpProblem, vals: np.ndarray) -> tuple[float, float]:
    mi = len(p.ineqs)
    g = vals[1:1 + mi]
    h = vals[1 + mi:]
    gv = float(np.max(g, initial=0.0))
    hv = float(np.max(np.abs(h), initial=0.0))
    return max(gv, 0.0), hv


def _projected_step(z, grad, lo, hi):
    return np.clip(z - grad, lo, hi) - z


class _Merit:
    """Augmented Lagrangian for fixed multipliers and penalty."""

    def __init__(self, mi: int, mu: np.ndarray, y: np.ndarray, rho: float):
        self.mi, self.mu, self.y, self.rho = mi, mu, y, rho

    def weights(self, vals: np.ndarray) -> np.ndarray:
        g = vals[1:1 + self.mi]
        h = vals[1 + self.mi:]
        return np.concatenate(([1.0], np.maximum(self.mu + self.rho * g, 0.0), self.y + self.rho * h))

    def value(self, vals: np.ndarray) -> float:
        g = vals[1:1 + self.mi]
        h = vals[1 + self.mi:]
        sg = np.maximum(self.mu + self.rho * g, 0.0)
        return float(vals[0] + self.y @ h + 0.5 * self.rho * (h @ h)
                     + (sg @ sg - self.mu @ self.mu) / (2.0 * self.rho))


def _newton_direction(H, grad, free):
    d = np.zeros_like(grad)
    idx = np.flatnonzero(free)
    if idx.size == 0:
        return d
    HF = H[np.ix_(idx, idx)]
    shift = 0.0
    scale = max(1.0, float(np.max(np.abs(np.diag(HF)))))
    for _ in range(12):
        try:
            c = cho_factor(HF + shift * np.eye(idx.size), check_finite=False)
            d[idx] = cho_solve(c, -grad[idx], check_finite=False)
            if np.all(np.isfinite(d)):
                return d
        except np.linalg.LinAlgError:
            pass
        shift = 1e-10 * scale if shift == 0.0 else shift * 100.0
    d[idx] = -grad[idx]
    return d


def _bfgs_update(B, s, yv):
    """Powell-damped BFGS update (keeps B positive definite)."""
    Bs = B @ s
    sBs = float(s @ Bs)
    if sBs <= 1e-16 * max(1.0, float(s @ s)):
        return B
    sy = float(s @ yv)
    if sy < 0.2 * sBs:
        theta = 0.8 * sBs / (sBs - sy)
        yv = theta * yv + (1.0 - theta) * Bs
        sy = float(s @ yv)
    return B + np.outer(yv, yv) / sy - np.outer(Bs, Bs) / sBs


class _JacBuffer:
    """Scatters sparse Jacobian nonzeros into a reusable dense matrix."""

    def __init__(self, comp):
        self.comp = comp
        self.rows, self.cols = comp.jac_rows, comp.jac_cols

    def __call__(self, z):
        vals, nz = self.comp.sparse_jacobian(z)
        J = np.zeros((self.comp.n_out, self.comp.n_vars))
        J[self.rows, self.cols] = nz
        return vals, J


def _inner(comp, z, merit, lo, hi, B, omega, max_iter, jac=None):
    """Projected structured quasi-Newton on the augmented Lagrangian.

    Hessian model: ``B + rho * Jc^T Jc`` where ``Jc`` stacks the equality
    rows and the currently penalized inequality rows; ``B`` is a BFGS model
    of the remaining (Lagrangian) curvature.
    """
    jac = jac or _JacBuffer(comp)
    mi = merit.mi
    vals, J = jac(z)
    it = 0
    converged = False
    while it < max_iter:
        w = merit.weights(vals)
        grad = w @ J
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError("non-finite gradient")
        pg = _projected_step(z, grad, lo, hi)
        if float(np.max(np.abs(pg), initial=0.0)) <= omega:
            converged = True
            break
        it += 1
        bound_lo = (z <= lo) & (grad > 0)
        bound_hi = (z >= hi) & (grad < 0)
        free = ~(bound_lo | bound_hi)
        rows = np.concatenate((w[1:1 + mi] > 0, np.ones(J.shape[0] - 1 - mi, dtype=bool)))
        Jc = J[1:][rows]
        H = B + merit.rho * (Jc.T @ Jc)
        d = _newton_direction(H, grad, free)
        phi0 = merit.value(vals)
        accepted = False
        for direction in (d, np.where(free, -grad, 0.0)):
            alpha = 1.0
            while alpha > 1e-12:
                zt = np.clip(z + alpha * direction, lo, hi)
                vt = comp.values(zt)
                slope = float(grad @ (zt - z))
                if np.all(np.isfinite(vt)):
                    phit = merit.value(vt)
                    if phit <= phi0 + 1e-4 * slope:
                        accepted = True
                        break
                    alpha *= 0.5
                else:
                    alpha *= 0.5
            if accepted:
                break
        if not accepted:
            break
        vals_new, J_new = jac(zt)
        B = _bfgs_update(B, zt - z, (J_new - J).T @ w)
        z, vals, J = zt, vals_new, J_new
    return z, vals, J, B, it, converged


def solve(p: NlpProblem, z0, opts: SolverOptions = SolverOptions()) -> SolveReport:
    """Augmented-Lagrangian solve of ``p`` from ``z0``.

    Inequalities use the shifted-penalty (PHR) term
    ``(max(0, mu + rho g)^2 - mu^2) / (2 rho)``; equalities the classical
    ``y h + rho/2 h^2``.  Bounds stay with the inner solver.
    """
    t0 = time.perf_counter()
    n = p.vars.count
    lo, hi = p.vars.bounds_arrays()
    z = np.asarray(z0, dtype=float).ravel()
    if z.size != n:
        raise ValueError(f"initial point has length {z.size}, expected {n}")
    z = np.clip(z, lo, hi)
    comp = p.compiled
    jac = _JacBuffer(comp)
    mi = len(p.ineqs)
    mu = np.zeros(mi)
    y = np.zeros(len(p.eqs))
    rho = opts.rho0
    B = np.eye(n)
    total_iter = 0
    best = None
    prev_v = math.inf
    stalled = 0
    status, message = INFEASIBLE, "outer iteration cap"
    k = 0
    try:
        for k in range(1, opts.outer_max_iter + 1):
            omega = max(opts.stat_tol, 10.0 ** (-(k + 1)))
            merit = _Merit(mi, mu, y, rho)
            z, vals, J, B, nit, _ = _inner(comp, z, merit, lo, hi, B, omega,
                                           opts.inner_max_iter, jac)
            total_iter += nit
            g = vals[1:1 + mi]
            h = vals[1 + mi:]
            gv, hv = violations(p, vals)
            comp_v = float(np.max(np.abs(np.minimum(-g, mu / rho)), initial=0.0))
            mu = np.maximum(mu + rho * g, 0.0)
            y = y + rho * h
            lag_grad = np.concatenate(([1.0], mu, y)) @ J
            stat = float(np.max(np.abs(_projected_step(z, lag_grad, lo, hi)), initial=0.0))
            feas = max(gv, hv)
            prev_best = math.inf if best is None else best[0]
            if best is None or (feas, vals[0]) < (best[0], best[1]):
                best = (feas, vals[0], z.copy(), mu.copy(), y.copy())
            log.debug("outer %d: f=%.6g feas=%.2e stat=%.2e rho=%.1e nit=%d",
                      k, vals[0], feas, stat, rho, nit)
            if feas <= opts.feas_tol and stat <= opts.stat_tol * max(1.0, abs(vals[0])):
                status, message = FEASIBLE_OPTIMAL, "KKT tolerances met"
                break
            v = max(hv, comp_v, gv)
            no_progress = feas > opts.feas_tol and feas > 0.9 * prev_best
            stalled = stalled + 1 if no_progress else 0
            if stalled >= opts.stall_outer:
                message = "violation stalled (infeasible stationary point)"
                break
            if v > 0.25 * prev_v:
                if rho >= opts.rho_max:
                    message = "penalty cap reached"
                    break
                rho = min(rho * opts.rho_growth, opts.rho_max)
            prev_v = v
    except (ex.ExprDomainError, ZeroDivisionError, ValueError, OverflowError,
            FloatingPointError) as exc:
        return SolveReport(ERROR, z, math.nan, math.inf, math.inf, total_iter,
                           time.perf_counter() - t0, outer_iterations=k,
                           message=f"{type(exc).__name__}: {exc}")

    if status != FEASIBLE_OPTIMAL:
        feas, _, z, mu, y = best
        status = FEASIBLE if feas <= opts.feas_tol else INFEASIBLE
    vals = comp.values(z)
    gv, hv = violations(p, vals)
    return SolveReport(
        status=status,
        point=z,
        cost=float(vals[0]),
        max_ineq_violation=gv,
        max_eq_violation=hv,
        iterations=total_iter,
        wall_time=time.perf_counter() - t0,
        ineq_multipliers=mu,
        eq_multipliers=y,
        outer_iterations=k,
        message=message,
    )


@dataclass
class KktResiduals:
    stationarity: float
    complementarity: float
    ineq_feasibility: float
    eq_feasibility: float

    def within(self, feas_tol: float, stat_tol: float) -> bool:
        return (self.stationarity <= stat_tol and self.complementarity <= feas_tol
                and self.ineq_feasibility <= feas_tol and self.eq_feasibility <= feas_tol)


def check_kkt(p: NlpProblem, report: SolveReport) -> KktResiduals:
    """Projected-gradient stationarity, complementarity and feasibility."""
    z = np.asarray(report.point, dtype=float)
    lo, hi = p.vars.bounds_arrays()
    mi = len(p.ineqs)
    mu = np.asarray(report.ineq_multipliers, dtype=float)
    y = np.asarray(report.eq_multipliers, dtype=float)
    if mu.size == 0:
        mu = np.zeros(mi)
    if y.size == 0:
        y = np.zeros(len(p.eqs))
    vals, g = p.compiled.value_and_grad(z, lambda _v: np.concatenate(([1.0], mu, y)))
    vals = np.asarray(vals, dtype=float)
    gv, hv = violations(p, vals)
    gvals = vals[1:1 + mi]
    compl = float(np.max(np.abs(mu * gvals), initial=0.0))
    stat = float(np.max(np.abs(_projected_step(z, g, lo, hi)), initial=0.0))
    return KktResiduals(stat, compl, gv, hv)


@dataclass
class RegularityIssue:
    clause: int
    active: tuple[int, ...]
    rank: int


def check_regularity(p: NlpProblem, z, active_tol: float = 1e-6) -> list[RegularityIssue]:
    """Clauses whose active literal gradients are linearly dependent at ``z``.

    Gradients are taken with respect to the base (pre-smoothing) variables.
    Advisory only.
    """
    if p.maxmin is None:
        return []
    zb = np.asarray(z, dtype=float)[: p.n_base]
    issues = []
    for i, clause in enumerate(p.maxmin.clauses):
        active = tuple(j for j, lit in enumerate(clause) if abs(ex.evaluate(lit, zb)) <= active_tol)
        if not active:
            continue
        rows = np.array([ex.grad(clause[j], zb) for j in active])
        rank = int(np.linalg.matrix_rank(rows)) if rows.any() else 0
        if rank < len(active):
            issues.append(RegularityIssue(i, active, rank))
            log.warning("clause %d: %d active literal gradients have rank %d", i, len(active), rank)
    return issues


def append_unused_vars(p: NlpProblem, k: int) -> NlpProblem:
    """Same problem with ``k`` extra unreferenced variables (testing aid)."""
    return NlpProblem(
        vars=p.vars.extend(k, lower=[-1.0] * k, upper=[1.0] * k),
        cost=p.cost, ineqs=p.ineqs, eqs=p.eqs, simplex_blocks=p.simplex_blocks,
        positivity=p.positivity, n_base=p.n_base, maxmin=p.maxmin, method=p.method,
        aux=dict(p.aux), base=p.base,
    )


def from_base(base: BaseOcp) -> NlpProblem:
    """The base problem without its logic (used when the logic is TRUE)."""
    return NlpProblem(vars=base.vars, cost=base.cost, ineqs=base.ineqs, eqs=base.eqs,
                      n_base=base.vars.count, base=base, method="none")
