import numpy as np
import pytest

from logicsmooth import expr as ex
from logicsmooth import quadrotor as qd
from logicsmooth import transform as tf
from logicsmooth.logic_ast import eval_formula

P = qd.QuadParams()


def residual_norm(params, xs, us):
    z = qd.pack(params, xs, us)
    return max(abs(ex.evaluate(r, z)) for r in qd.dynamics_residuals(params))


def test_hover_fixed_point():
    us = np.full((P.horizon, 2), P.hover_thrust)
    xs = qd.rollout(P, us)
    assert np.abs(xs).max() <= 1e-12
    assert residual_norm(P, np.zeros_like(xs), us) <= 1e-12


def test_free_fall_single_step():
    xs = qd.rollout(P, np.zeros((P.horizon, 2)))
    # v1 = -g ts, y1 = ts (0 + v1) / 2
    assert abs(xs[1, 3] - (-2.4525)) <= 1e-12
    assert abs(xs[1, 2] - (-0.3065625)) <= 1e-12


def test_differential_thrust_spins():
    us = np.zeros((P.horizon, 2))
    us[0] = (2.0, 0.0)
    xs = qd.rollout(P, us)
    # omega1 = ts * arm * 2 / inertia
    assert abs(xs[1, 5] - 40.0) <= 1e-12
    assert abs(xs[1, 4] - 5.0) <= 1e-12


def test_rollout_satisfies_residuals():
    rng = np.random.default_rng(0)
    us = rng.uniform(-2, 2, (P.horizon, 2))
    xs = qd.rollout(P, us)
    assert residual_norm(P, xs, us) <= 1e-9


def test_residual_layout():
    res = qd.dynamics_residuals(P)
    assert len(res) == 6 * (P.horizon + 1)
    lay = P.layout()
    assert lay.x_index(0, 1) == 0 and lay.u_index(0, 1) == lay.n_states
    with pytest.raises(IndexError):
        lay.x_index(P.horizon + 1, 1)


def test_params_validated():
    with pytest.raises(ValueError):
        qd.QuadParams(mass=0.0)
    with pytest.raises(ValueError):
        qd.QuadParams(u_min=3.0)
    with pytest.raises(ValueError):
        qd.build("p3")


def test_problem_shapes():
    p1, p2 = qd.build_problem1(), qd.build_problem2()
    assert len(p1.base.eqs) == 6 * (P.horizon + 1) + 2
    assert len(p2.base.eqs) == 6 * (P.horizon + 1)
    _, m1 = tf.reformulate(p1.base.logic)
    _, m2 = tf.reformulate(p2.base.logic)
    assert m1.arities == (3,) * 5
    assert m2.arities == (2,) * 13


def test_problem1_oracle_matches_formula():
    rng = np.random.default_rng(5)
    logic = qd.build_problem1().base.logic
    n = P.layout().n_states + P.layout().n_inputs
    agree = 0
    for _ in range(1000):
        xs = np.zeros((P.horizon + 1, 6))
        xs[:, 0] = rng.uniform(-6, 6, P.horizon + 1)
        xs[:, 2] = rng.uniform(-2, 16, P.horizon + 1)
        z = qd.pack(P, xs, np.zeros((P.horizon, 2)))
        assert z.size == n
        agree += eval_formula(logic, z) == qd.problem1_holds(xs)
    assert agree == 1000


def test_problem2_targets():
    logic = qd.build_problem2().base.logic
    xs = np.zeros((P.horizon + 1, 6))
    xs[:, 0] = 10.0
    xs[-1, 0], xs[-1, 2] = 0.0, 15.0
    z = qd.pack(P, xs, np.zeros((P.horizon, 2)))
    assert qd.problem2_holds(xs) and eval_formula(logic, z)
    xs[3, 0], xs[3, 2] = -3.0, 2.0
    z = qd.pack(P, xs, np.zeros((P.horizon, 2)))
    assert not qd.problem2_holds(xs) and not eval_formula(logic, z)
    xs[-1, 0], xs[-1, 2] = 3.0, 5.0
    z = qd.pack(P, xs, np.zeros((P.horizon, 2)))
    assert qd.problem2_holds(xs) and eval_formula(logic, z)
