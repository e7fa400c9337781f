import itertools

import numpy as np
import pytest

from logicsmooth import baselines as bl
from logicsmooth import expr as ex
from logicsmooth import quadrotor as qd
from logicsmooth import transform as tf
from logicsmooth.nlp import PipelineOptions

x0, x1, x2 = ex.var(0), ex.var(1), ex.var(2)
M = 1000.0


def test_bigm_construction():
    m = tf.MaxMinForm(((x0, x1, x2),))
    enc = bl.encode_bigM(m, 3, M)
    assert enc.gates == (range(3, 6),)
    assert len(enc.ineqs) == 3 and len(enc.eqs) == 1
    point = [-1.0, 5.0, 5.0, 0.0, 1.0, 1.0]
    assert all(ex.evaluate(c, point) <= 0 for c in enc.ineqs)
    assert ex.evaluate(enc.eqs[0], point) == 0
    assert bl.gates_feasible(enc, point[:3])
    assert not bl.gates_feasible(enc, [1.0, 1.0, 1.0])


def test_complementarity_construction():
    one = bl.encode_complementarity(tf.MaxMinForm(((x0,),)), 1, M)
    assert bl.gates_feasible(one, [-0.5])
    assert not bl.gates_feasible(one, [0.5])
    two = bl.encode_complementarity(tf.MaxMinForm(((x0, x1),)), 2, M)
    point = [-1.0, 5.0, 0.0, 1.0]
    assert all(ex.evaluate(c, point) <= 0 for c in two.ineqs)
    assert all(ex.evaluate(c, point) == 0 for c in two.eqs)
    # all four binary gate vectors fail at p = (5, 5)
    for bits in itertools.product((0.0, 1.0), repeat=2):
        pt = [5.0, 5.0, *bits]
        ok = all(ex.evaluate(c, pt) <= 0 for c in two.ineqs) and \
            all(ex.evaluate(c, pt) == 0 for c in two.eqs)
        assert not ok
    assert not bl.gates_feasible(two, [5.0, 5.0])


def test_invalid_m_and_method():
    m = tf.MaxMinForm(((x0,),))
    with pytest.raises(ValueError):
        bl.encode_bigM(m, 1, 0.0)
    with pytest.raises(ValueError):
        bl.encode(m, 1, "sos1")


def test_insufficient_m_is_detected(caplog):
    # the satisfied literal x1 <= 0 is gated open, but x0 = 50 cannot be switched
    # off with M = 10, so the encoding wrongly rejects a true clause pair
    m = tf.MaxMinForm(((x0, x1), (x0 - 100.0,)))
    z = [50.0, -1.0]
    assert tf.eval_maxmin(m, z) <= 0
    assert not bl.gates_feasible(bl.encode_bigM(m, 2, 10.0), z)
    assert bl.gates_feasible(bl.encode_bigM(m, 2, M), z)
    with caplog.at_level("WARNING"):
        assert bl.check_big_m(m, z, 10.0) == 50.0
    assert "exceeds M" in caplog.text


def test_gate_equivalence_random():
    rng = np.random.default_rng(2)
    for _ in range(300):
        arities = rng.integers(1, 5, size=rng.integers(1, 4))
        nvar = 4
        clauses = tuple(tuple(ex.var(int(rng.integers(nvar))) - float(rng.uniform(-1, 1))
                              for _ in range(k)) for k in arities)
        m = tf.MaxMinForm(clauses)
        z = rng.uniform(-2, 2, nvar)
        truth = tf.eval_maxmin(m, z) <= 0
        for method in (bl.BIGM, bl.COMPLEMENTARITY):
            assert bl.gates_feasible(bl.encode(m, nvar, method, M), z) == truth


def test_assemble_baseline_problem1():
    base = qd.build_problem1().base
    p = bl.assemble_baseline(base, bl.BIGM, PipelineOptions())
    assert p.vars.count == base.vars.count + 15
    assert p.n_logic_ineqs == 15 and p.n_logic_eqs == 5
    c = bl.assemble_baseline(base, bl.COMPLEMENTARITY, PipelineOptions())
    assert c.n_logic_ineqs == 20 and c.n_logic_eqs == 15
    lo, hi = c.vars.bounds_arrays()
    assert (lo[base.vars.count:] == 0).all() and (hi[base.vars.count:] == 1).all()
