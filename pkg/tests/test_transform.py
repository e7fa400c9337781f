import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logicsmooth import expr as ex
from logicsmooth import quadrotor as qd
from logicsmooth import transform as tf
from logicsmooth.logic_ast import FALSE, TRUE, And, Not, Or, eq, eval_formula, le, propositions
from helpers import in_band, random_cnf_formula, random_formula, random_point

x0, x1, x2 = ex.var(0), ex.var(1), ex.var(2)
EPS = tf.EpsilonPolicy()


def lits(m):
    return [[ex.dump(p) for p in c] for c in m.clauses]


def test_eliminate_equalities_split_and_square():
    q = x0 - 1
    assert tf.eliminate_equalities(eq(q)) == And((le(q), le(-q)))
    sq = tf.eliminate_equalities(eq(q), "square")
    assert eval_formula(sq, [1.0])
    assert not eval_formula(sq, [3.0])
    with pytest.raises(ValueError):
        tf.eliminate_equalities(eq(q), "cube")


def test_nnf_examples():
    p1, p2 = le(x0), le(x1)
    nnf = tf.to_nnf(Not(And((p1, p2))))
    assert isinstance(nnf, Or)
    assert [ex.dump(c.func) for c in nnf.children] == [ex.dump(-x0 + 1e-6), ex.dump(-x1 + 1e-6)]
    assert all(c.strict for c in nnf.children)
    assert tf.to_nnf(Not(Not(p1))) == p1
    neg = tf.to_nnf(Not(p1), tf.EpsilonPolicy(1e-6))
    assert ex.evaluate(neg.func, [0.0]) == 1e-6


def test_epsilon_must_be_positive():
    with pytest.raises(ValueError):
        tf.EpsilonPolicy(0.0)


def test_cnf_distributes():
    a, b, c = le(x0), le(x1), le(x2)
    m = tf.to_cnf(Or((And((a, b)), c)))
    assert lits(m) == [[ex.dump(x0), ex.dump(x2)], [ex.dump(x1), ex.dump(x2)]]
    assert tf.to_cnf(a).clauses == ((x0,),)


def test_cnf_cap():
    big = And(tuple(Or((le(x0 - i), le(x1 - i))) for i in range(14)))
    with pytest.raises(tf.CnfSizeError):
        tf.to_cnf(tf.to_nnf(Not(big)), cap=4096)


def test_problem1_cnf_structure():
    p = qd.build_problem1()
    _, m = tf.reformulate(p.base.logic)
    assert m.n_clauses == 5 and m.arities == (3,) * 5
    X = qd._Vars(p.params)
    c2 = qd.circle_func(X, 2, qd.TRIGGER_P1)
    c3 = qd.circle_func(X, 3, qd.TRIGGER_P1)
    for i, clause in zip(qd.AVOID_STEPS, m.clauses):
        obs = qd.circle_func(X, i, qd.OBSTACLE)
        assert clause[:2] == (c2, c3)
        assert clause[2] is -obs + 1e-6


def test_flatten_direct():
    p1, p2, p3 = le(x0), le(x1), le(x2)
    assert tf.flatten_direct(And((p1, p2))) is ex.emax([x0, x1])
    assert tf.flatten_direct(Or((p1, p2))) is ex.emin([x0, x1])
    f = tf.flatten_direct(And((Or((p1, p2)), p3)))
    assert ex.evaluate(f, [1.0, -2.0, -1.0]) == -1.0
    assert ex.evaluate(tf.flatten_direct(TRUE), []) <= 0
    assert ex.evaluate(tf.flatten_direct(FALSE), []) > 0


def test_eval_maxmin_examples():
    assert tf.eval_maxmin(tf.MaxMinForm(((ex.const(-1.0), ex.const(3.0)),)), []) == -1.0
    assert tf.eval_maxmin(tf.MaxMinForm(((ex.const(-1.0),), (ex.const(2.0),))), []) == 2.0


def test_smooth_single_clause():
    m = tf.MaxMinForm(((x0, x1),))
    s = tf.smooth(m, 2)
    assert s.simplex_blocks == (range(2, 4),)
    assert ex.evaluate(s.constraints[0], [-1.0, 3.0, 1.0, 0.0]) == -1.0
    np.testing.assert_array_equal(tf.argmin_lambda(m, s, [-1.0, 3.0]), [1.0, 0.0])


def test_smooth_problem1_shared():
    p = qd.build_problem1()
    _, m = tf.reformulate(p.base.logic)
    s = tf.smooth(m, p.base.vars.count, "shared")
    assert len(s.constraints) == 5 and s.n_lambda == 3 and len(s.simplex_blocks) == 1
    per = tf.smooth(m, p.base.vars.count)
    assert per.n_lambda == 15 and len(per.simplex_blocks) == 5


def test_smooth_rejects_min_max_and_bad_groups():
    with pytest.raises(ex.NonDifferentiableError):
        tf.smooth(tf.MaxMinForm(((ex.emin(x0, x1),),)), 2)
    m = tf.MaxMinForm(((x0, x1), (x1,)))
    with pytest.raises(ValueError):
        tf.smooth(m, 2, [[0, 1]])
    with pytest.raises(ValueError):
        tf.smooth(m, 2, [[0], [0]])


def test_resolvents_problem2():
    p = qd.build_problem2()
    _, m = tf.reformulate(p.base.logic)
    _, r = tf.reformulate(p.base.logic, resolve=True)
    assert m.n_clauses == 13 and r.n_clauses == 49
    assert r.clauses[:13] == m.clauses
    _, p1 = tf.reformulate(qd.build_problem1().base.logic, resolve=True)
    assert p1.n_clauses == 5


def _smoothing_case(rng):
    f, n, m = random_cnf_formula(rng)
    return f, n, m, tf.smooth(m, n)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_smoothing_soundness(seed):
    rng = np.random.default_rng(seed)
    _, n, m, s = _smoothing_case(rng)
    z = random_point(rng, n)
    lam = np.concatenate([rng.dirichlet(np.ones(len(b))) for b in s.simplex_blocks])
    if max(tf.smoothed_values(s, z, lam)) <= 0:
        assert tf.eval_maxmin(m, z) <= 0


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_smoothing_completeness(seed):
    rng = np.random.default_rng(seed)
    _, n, m, s = _smoothing_case(rng)
    z = random_point(rng, n)
    if tf.eval_maxmin(m, z) <= 0:
        assert max(tf.smoothed_values(s, z, tf.argmin_lambda(m, s, z))) <= 0


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_shared_lambda_is_conservative(seed):
    rng = np.random.default_rng(seed)
    f, n, m = random_cnf_formula(rng)
    by_arity = {}
    for i, k in enumerate(m.arities):
        by_arity.setdefault(k, []).append(i)
    groups = list(by_arity.values())
    shared = tf.smooth(m, n, groups)
    per = tf.smooth(m, n)
    z = random_point(rng, n)
    lam = np.concatenate([rng.dirichlet(np.ones(len(b))) for b in shared.simplex_blocks])
    if max(tf.smoothed_values(shared, z, lam)) <= 0:
        copied = np.concatenate([
            lam[shared.simplex_blocks[shared.clause_block[i]].start - n:
                shared.simplex_blocks[shared.clause_block[i]].stop - n]
            for i in range(m.n_clauses)])
        assert max(tf.smoothed_values(per, z, copied)) <= 0


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_cnf_truth_table(seed):
    # propositions replaced by independent sign variables: every assignment agrees
    rng = np.random.default_rng(seed)
    f, _ = random_formula(rng, equalities=False)
    props = list(dict.fromkeys(propositions(f)))
    if len(props) > 6:
        return
    sub = {p: le(ex.var(i)) for i, p in enumerate(props)}

    def rebuild(g):
        if isinstance(g, Not):
            return Not(rebuild(g.child))
        if isinstance(g, (And, Or)):
            return type(g)(tuple(rebuild(c) for c in g.children))
        return sub[g]

    g = rebuild(f)
    try:
        _, m = tf.reformulate(g)
    except ValueError:
        return
    for signs in itertools.product((-1.0, 1.0), repeat=len(props)):
        assert eval_formula(g, signs) == (tf.eval_maxmin(m, signs) <= 0)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_resolvents_preserve_truth(seed):
    rng = np.random.default_rng(seed)
    f, n, m = random_cnf_formula(rng)
    try:
        r = tf.add_resolvents(m, EPS)
    except tf.CnfSizeError:
        return
    props = list(propositions(f))
    for _ in range(5):
        z = random_point(rng, n)
        if in_band(props, z, EPS.epsilon):
            continue
        assert (tf.eval_maxmin(m, z) <= 0) == (tf.eval_maxmin(r, z) <= 0)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_rewrites_preserve_truth(seed):
    rng = np.random.default_rng(seed)
    f, n = random_formula(rng)
    props = list(propositions(f))
    noeq = tf.eliminate_equalities(f)
    nnf = tf.to_nnf(noeq)
    for _ in range(5):
        z = random_point(rng, n)
        truth = eval_formula(f, z)
        assert eval_formula(noeq, z) == truth
        if not in_band(props, z, EPS.epsilon):
            assert eval_formula(nnf, z) == truth
