"""Random generators shared by the property and acceptance tests."""

from __future__ import annotations

import numpy as np

from logicsmooth import expr as ex
from logicsmooth import transform as tf
from logicsmooth.logic_ast import EQUALITY, And, Not, Or, eq, le

GRID = (-1.0, 0.0, 1.0)


def random_smooth_expr(rng: np.random.Generator, n_vars: int, depth: int) -> ex.Expr:
    """Min/max-free graph over ``n_vars`` variables; domains are safe everywhere."""
    if depth <= 0 or rng.random() < 0.2:
        if rng.random() < 0.7:
            return ex.var(int(rng.integers(n_vars)))
        return ex.const(float(np.round(rng.uniform(-3, 3), 3)))
    kind = rng.choice(["+", "-", "*", "/", "^", "sin", "cos", "sqrt", "neg"])
    a = random_smooth_expr(rng, n_vars, depth - 1)
    if kind in ("+", "-", "*"):
        b = random_smooth_expr(rng, n_vars, depth - 1)
        return {"+": a + b, "-": a - b, "*": a * b}[kind]
    if kind == "/":
        b = random_smooth_expr(rng, n_vars, depth - 1)
        return a / (1.5 + b * b)
    if kind == "^":
        return a ** int(rng.integers(0, 4))
    if kind == "sin":
        return ex.sin(a)
    if kind == "cos":
        return ex.cos(a)
    if kind == "sqrt":
        return ex.sqrt(1.0 + a * a)
    return -a


def random_prop_func(rng: np.random.Generator, n_vars: int) -> ex.Expr:
    """Polynomial / trigonometric proposition function.

    A third of them are ``x_i - c`` with ``c`` on :data:`GRID`, so points
    snapped to the grid hit ``p = 0`` exactly.
    """
    i = int(rng.integers(n_vars))
    r = rng.random()
    if r < 1 / 3:
        return ex.var(i) - float(rng.choice(GRID))
    j = int(rng.integers(n_vars))
    a, b, c = np.round(rng.uniform(-2, 2, size=3), 2)
    if r < 2 / 3:
        return float(a) * ex.var(i) * ex.var(j) + float(b) * ex.var(j) ** 2 + float(c)
    return ex.sin(float(a) * ex.var(i)) + float(b) * ex.cos(ex.var(j)) + float(c) * ex.var(i)


def random_formula(rng: np.random.Generator, n_props: int | None = None, depth: int | None = None,
                   n_vars: int | None = None, equalities: bool = True):
    """Formula over at most 8 propositions, depth at most 5, at most 6 variables.

    Returns ``(formula, n_vars)``.
    """
    n_vars = n_vars or int(rng.integers(1, 7))
    n_props = n_props or int(rng.integers(1, 9))
    depth = depth if depth is not None else int(rng.integers(0, 6))
    pool = []
    for _ in range(n_props):
        f = random_prop_func(rng, n_vars)
        pool.append(eq(f) if equalities and rng.random() < 0.15 else le(f))

    def build(d):
        if d == 0 or rng.random() < 0.25:
            return pool[int(rng.integers(len(pool)))]
        r = rng.random()
        if r < 0.25:
            return Not(build(d - 1))
        kids = tuple(build(d - 1) for _ in range(int(rng.integers(2, 4))))
        return And(kids) if r < 0.6 else Or(kids)

    return build(depth), n_vars


def random_point(rng: np.random.Generator, n_vars: int) -> list[float]:
    z = rng.uniform(-2, 2, size=n_vars)
    snap = rng.random(n_vars) < 0.3
    z[snap] = rng.choice(GRID, size=int(snap.sum()))
    return [float(v) for v in z]


def in_band(props, z, eps: float) -> bool:
    """Some proposition value lies strictly between 0 and ``eps``.

    Equalities are split into ``q <= 0`` and ``-q <= 0``, so both signs count.
    """
    for p, v in zip(props, ex.evaluate_many([p.func for p in props], z)):
        if p.kind == EQUALITY:
            v = abs(v)
        if 0.0 < v < eps:
            return True
    return False


def random_cnf_formula(rng, max_tries: int = 50, **kw):
    """A random formula whose CNF stays under the clause cap (resampled otherwise)."""
    for _ in range(max_tries):
        f, n = random_formula(rng, **kw)
        try:
            _, m = tf.reformulate(f)
        except tf.CnfSizeError:
            continue
        except ValueError:
            # empty clause: formula built from an empty Or
            continue
        return f, n, m
    raise RuntimeError("could not draw a formula with a small CNF")
