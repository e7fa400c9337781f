import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from logicsmooth import expr as ex
from logicsmooth.logic_ast import (FALSE, TRUE, And, Not, Or, depth, eq, eval_formula,
                                   if_then_else, implies, le, propositions)
from helpers import random_formula, random_point

x0 = ex.var(0)


def test_eval_examples():
    assert eval_formula(le(x0), [-1.0])
    assert eval_formula(Not(le(x0)) & le(x0 - 2), [1.0])
    assert not eval_formula(eq(x0) | le(x0 - 5), [7.0])


def test_constants():
    assert eval_formula(TRUE, [])
    assert not eval_formula(FALSE, [])


def test_implies_shape():
    a, b = le(x0), le(x0 - 1)
    assert implies(a, b) == Or((Not(a), b))


def test_if_then_else_case_split():
    c, a, b = le(x0), le(x0 + 1), le(x0 - 3)
    f = if_then_else(c, a, b)
    for z in np.linspace(-3, 5, 33):
        expected = eval_formula(a, [z]) if eval_formula(c, [z]) else eval_formula(b, [z])
        assert eval_formula(f, [z]) == expected


def test_equality_tolerance():
    assert not eval_formula(eq(x0), [1e-9])
    assert eval_formula(eq(x0), [1e-9], eq_tol=1e-8)
    assert eval_formula(eq(x0), [0.0])


def test_propositions_and_depth():
    p, q = le(x0), eq(x0 - 1)
    f = Not(And((p, Or((q, p)))))
    assert list(propositions(f)) == [p, q, p]
    assert depth(f) == 3


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_de_morgan_and_double_negation(seed):
    rng = np.random.default_rng(seed)
    a, n = random_formula(rng, depth=2)
    b, _ = random_formula(rng, depth=2, n_vars=n)
    z = random_point(rng, n)
    assert eval_formula(Not(And((a, b))), z) == eval_formula(Or((Not(a), Not(b))), z)
    assert eval_formula(Not(Or((a, b))), z) == eval_formula(And((Not(a), Not(b))), z)
    assert eval_formula(Not(Not(a)), z) == eval_formula(a, z)
