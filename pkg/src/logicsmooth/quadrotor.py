"""Planar quadrotor with semi-implicit midpoint discretization and the two
logic-constrained benchmark problems built on it.

States per step are ``[r, r_dot, s, s_dot, psi, psi_dot]`` (components 1..6),
inputs are the two motor thrusts.  Decision vector layout: all states
time-major, then all inputs time-major.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .expr import Expr, VarSpace
from .logic_ast import Formula, Not, Or, And, eq, if_then_else, implies, le
from .nlp import BaseOcp, TrajectoryLayout

STATE_DIM = 6
INPUT_DIM = 2


@dataclass(frozen=True)
class QuadParams:
    mass: float = 0.15
    inertia: float = 0.00125
    arm: float = 0.1
    gravity: float = 9.81
    ts: float = 0.25
    horizon: int = 10
    u_min: float = -2.0
    u_max: float = 2.0
    x0: tuple[float, ...] = (0.0,) * STATE_DIM

    def __post_init__(self):
        for name in ("mass", "inertia", "arm", "gravity", "ts"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if not self.u_min <= self.u_max:
            raise ValueError("u_min exceeds u_max")
        if len(self.x0) != STATE_DIM:
            raise ValueError(f"x0 must have {STATE_DIM} entries")
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))

    @property
    def hover_thrust(self) -> float:
        return self.mass * self.gravity / 2.0

    def layout(self) -> TrajectoryLayout:
        return TrajectoryLayout(self.horizon, STATE_DIM, INPUT_DIM, self)


@dataclass(frozen=True)
class Circle:
    name: str
    cx: float
    cy: float
    r: float


@dataclass(frozen=True)
class LogicOcp:
    base: BaseOcp
    params: QuadParams
    name: str = ""
    obstacles: tuple[Circle, ...] = ()
    triggers: tuple[tuple[int, Circle], ...] = ()
    targets: tuple[tuple[str, float, float], ...] = ()
    geometry: dict = field(default_factory=dict, compare=False)


class _Vars:
    def __init__(self, params: QuadParams):
        self.lay = params.layout()

    def x(self, k: int, j: int) -> Expr:
        return ex.var(self.lay.x_index(k, j))

    def v(self, k: int, j: int) -> Expr:
        return ex.var(self.lay.u_index(k, j))


def var_space(params: QuadParams) -> VarSpace:
    lay = params.layout()
    names = [f"x[{k}][{j}]" for k in range(params.horizon + 1) for j in range(1, STATE_DIM + 1)]
    names += [f"v[{k}][{j}]" for k in range(params.horizon) for j in range(1, INPUT_DIM + 1)]
    lower = [-math.inf] * lay.n_states + [params.u_min] * lay.n_inputs
    upper = [math.inf] * lay.n_states + [params.u_max] * lay.n_inputs
    return VarSpace(lay.n_states + lay.n_inputs, tuple(names), tuple(lower), tuple(upper))


def dynamics_residuals(params: QuadParams = QuadParams()) -> list[Expr]:
    """Initial-condition residuals followed by the 6 residuals of each step."""
    X = _Vars(params)
    ts, m, ell, inertia, b = params.ts, params.mass, params.arm, params.inertia, params.gravity
    res = [X.x(0, j) - params.x0[j - 1] for j in range(1, STATE_DIM + 1)]
    for k in range(params.horizon):
        thrust = X.v(k, 1) + X.v(k, 2)
        psi = X.x(k, 5)
        rates = [
            (X.x(k, 2) + X.x(k + 1, 2)) / 2,
            ex.sin(psi) * thrust / m,
            (X.x(k, 4) + X.x(k + 1, 4)) / 2,
            ex.cos(psi) * thrust / m - b,
            (X.x(k, 6) + X.x(k + 1, 6)) / 2,
            ell * (X.v(k, 1) - X.v(k, 2)) / inertia,
        ]
        for j in range(1, STATE_DIM + 1):
            res.append(X.x(k + 1, j) - (X.x(k, j) + ts * rates[j - 1]))
    return res


def rollout(params: QuadParams, inputs, x0=None) -> np.ndarray:
    """Forward simulation; the midpoint position update is solved in closed form."""
    u = np.asarray(inputs, dtype=float).reshape(params.horizon, INPUT_DIM)
    xs = np.zeros((params.horizon + 1, STATE_DIM))
    xs[0] = params.x0 if x0 is None else x0
    ts, m, ell, inertia, b = params.ts, params.mass, params.arm, params.inertia, params.gravity
    for k in range(params.horizon):
        x = xs[k]
        thrust = u[k, 0] + u[k, 1]
        nxt = np.empty(STATE_DIM)
        nxt[1] = x[1] + ts * (math.sin(x[4]) * thrust / m)
        nxt[3] = x[3] + ts * (math.cos(x[4]) * thrust / m - b)
        nxt[5] = x[5] + ts * (ell * (u[k, 0] - u[k, 1]) / inertia)
        nxt[0] = x[0] + ts * ((x[1] + nxt[1]) / 2)
        nxt[2] = x[2] + ts * ((x[3] + nxt[3]) / 2)
        nxt[4] = x[4] + ts * ((x[5] + nxt[5]) / 2)
        xs[k + 1] = nxt
    return xs


def pack(params: QuadParams, xs, us) -> np.ndarray:
    return np.concatenate([np.asarray(xs, float).ravel(), np.asarray(us, float).ravel()])


def input_energy(params: QuadParams) -> Expr:
    X = _Vars(params)
    return ex.esum(t for k in range(params.horizon) for t in (X.v(k, 1) ** 2, X.v(k, 2) ** 2))


def _shifted(e: Expr, c: float) -> Expr:
    # written the way the formulas read: x, x - c or x + |c|
    if c == 0:
        return e
    return e - c if c > 0 else e + (-c)


def circle_func(X: _Vars, k: int, c: Circle) -> Expr:
    """``(x1 - cx)^2 + (x3 - cy)^2 - r^2``, nonpositive inside the circle."""
    return _shifted(X.x(k, 1), c.cx) ** 2 + _shifted(X.x(k, 3), c.cy) ** 2 - c.r ** 2


OBSTACLE = Circle("obstacle", 0.0, 8.0, 5.0)
TRIGGER_P1 = Circle("trigger", 2.0, 1.0, 1.0)
TRIGGER_P2 = Circle("trigger", -3.0, 2.0, 1.0)
AVOID_STEPS = range(5, 10)


def _base(params, eqs, logic) -> BaseOcp:
    return BaseOcp(
        vars=var_space(params),
        cost=input_energy(params),
        ineqs=(),
        eqs=tuple(dynamics_residuals(params)) + tuple(eqs),
        logic=logic,
        layout=params.layout(),
    )


def _avoid_steps(params):
    steps = [i for i in AVOID_STEPS if i <= params.horizon]
    if not steps:
        raise ValueError("horizon too short for the obstacle window (steps 5..9)")
    return steps


def build_problem1(params: QuadParams = QuadParams()) -> LogicOcp:
    """Reach (0, 15); avoid the obstacle on steps 5..9 unless the trigger
    circle was visited at step 2 or 3."""
    X = _Vars(params)
    N = params.horizon
    triggers = [le(circle_func(X, k, TRIGGER_P1)) for k in (2, 3)]
    avoid = [Not(le(circle_func(X, i, OBSTACLE))) for i in _avoid_steps(params)]
    logic = implies(Not(Or(tuple(triggers))), And(tuple(avoid)))
    terminal = [X.x(N, 1), X.x(N, 3) - 15.0]
    return LogicOcp(
        base=_base(params, terminal, logic),
        params=params,
        name="p1",
        obstacles=(OBSTACLE,),
        triggers=((2, TRIGGER_P1), (3, TRIGGER_P1)),
        targets=(("black", 0.0, 15.0),),
    )


def build_problem2(params: QuadParams = QuadParams()) -> LogicOcp:
    """Reach (0, 15) avoiding the obstacle, unless inside the trigger circle
    at step 3, in which case reach (3, 5) instead."""
    X = _Vars(params)
    N = params.horizon
    trigger = le(circle_func(X, 3, TRIGGER_P2))
    green = And((eq(X.x(N, 1) - 3.0), eq(X.x(N, 3) - 5.0)))
    avoid = And(tuple(Not(le(circle_func(X, i, OBSTACLE))) for i in _avoid_steps(params)))
    black = And((eq(X.x(N, 1)), eq(X.x(N, 3) - 15.0)))
    logic = if_then_else(trigger, green, And((avoid, black)))
    return LogicOcp(
        base=_base(params, (), logic),
        params=params,
        name="p2",
        obstacles=(OBSTACLE,),
        triggers=((3, TRIGGER_P2),),
        targets=(("black", 0.0, 15.0), ("green", 3.0, 5.0)),
    )


def build(name: str, params: QuadParams = QuadParams()) -> LogicOcp:
    if name == "p1":
        return build_problem1(params)
    if name == "p2":
        return build_problem2(params)
    raise ValueError(f"unknown bundled problem {name!r}")


# independent predicates used to cross-check the formula encodings


def _inside(xs, k, c: Circle) -> bool:
    return (xs[k, 0] - c.cx) ** 2 + (xs[k, 2] - c.cy) ** 2 - c.r ** 2 <= 0


def problem1_holds(xs) -> bool:
    visited = _inside(xs, 2, TRIGGER_P1) or _inside(xs, 3, TRIGGER_P1)
    hits = any(_inside(xs, i, OBSTACLE) for i in AVOID_STEPS)
    return visited or not hits


def problem2_holds(xs) -> bool:
    N = xs.shape[0] - 1
    if _inside(xs, 3, TRIGGER_P2):
        return xs[N, 0] == 3.0 and xs[N, 2] == 5.0
    hits = any(_inside(xs, i, OBSTACLE) for i in AVOID_STEPS)
    return not hits and xs[N, 0] == 0.0 and xs[N, 2] == 15.0
