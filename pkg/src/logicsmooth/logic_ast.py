"""Boolean formulas over equality/inequality propositions.

A proposition wraps a scalar :class:`~logicsmooth.expr.Expr`.  An equality
proposition holds iff its function is exactly zero; an inequality
proposition holds iff its function is ``<= 0``.  Formulas combine
propositions with NOT, AND and OR only; IF/THEN/ELSE is desugared on
construction.

The truth evaluator here is exact (no tolerances) and serves as the ground
truth for every reformulation downstream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence, Union

from .expr import Expr, evaluate

EQUALITY = "eq"
INEQUALITY = "le"


@dataclass(frozen=True)
class Prop:
    """Atomic proposition ``func = 0`` or ``func <= 0``.

    ``strict`` marks an inequality produced by rewriting a negation with the
    epsilon margin; its truth semantics is still ``func <= 0``.
    """

    kind: str
    func: Expr
    strict: bool = False

    def __post_init__(self):
        if self.kind not in (EQUALITY, INEQUALITY):
            raise ValueError(f"unknown proposition kind {self.kind!r}")
        if not isinstance(self.func, Expr):
            raise TypeError("proposition function must be an Expr")
        if self.strict and self.kind != INEQUALITY:
            raise ValueError("only inequality propositions can be strict")

    def __invert__(self):
        return Not(self)

    def __and__(self, other):
        return And((self, other))

    def __or__(self, other):
        return Or((self, other))


@dataclass(frozen=True)
class Not:
    child: "Formula"

    def __invert__(self):
        return Not(self)

    def __and__(self, other):
        return And((self, other))

    def __or__(self, other):
        return Or((self, other))


@dataclass(frozen=True)
class And:
    """Conjunction.  ``And(())`` is the constant TRUE (empty conjunction)."""

    children: tuple["Formula", ...]

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))

    def __invert__(self):
        return Not(self)

    def __and__(self, other):
        return And((self, other))

    def __or__(self, other):
        return Or((self, other))


@dataclass(frozen=True)
class Or:
    """Disjunction.  ``Or(())`` is the constant FALSE."""

    children: tuple["Formula", ...]

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))

    def __invert__(self):
        return Not(self)

    def __and__(self, other):
        return And((self, other))

    def __or__(self, other):
        return Or((self, other))


Formula = Union[Prop, Not, And, Or]

TRUE = And(())
FALSE = Or(())


def le(func: Expr) -> Prop:
    """Inequality proposition ``func <= 0``."""
    return Prop(INEQUALITY, func)


def eq(func: Expr) -> Prop:
    """Equality proposition ``func = 0``."""
    return Prop(EQUALITY, func)


def conj(items: Sequence[Formula]) -> Formula:
    items = tuple(items)
    return items[0] if len(items) == 1 else And(items)


def disj(items: Sequence[Formula]) -> Formula:
    items = tuple(items)
    return items[0] if len(items) == 1 else Or(items)


def implies(a: Formula, b: Formula) -> Formula:
    return Or((Not(a), b))


def if_then_else(c: Formula, a: Formula, b: Formula) -> Formula:
    return And((Or((Not(c), a)), Or((c, b))))


def prop_holds(p: Prop, z, eq_tol: float = 0.0) -> bool:
    v = evaluate(p.func, z)
    if p.kind == EQUALITY:
        return abs(v) <= eq_tol
    return v <= 0.0


def eval_formula(f: Formula, z, eq_tol: float = 0.0) -> bool:
    """Truth value of ``f`` at the point ``z``.

    Inequalities are judged exactly.  An equality counts as true when
    ``|q(z)| <= eq_tol``; the default 0 is the exact reading, a positive
    value accepts numerically solved equalities.
    """
    if isinstance(f, Prop):
        return prop_holds(f, z, eq_tol)
    if isinstance(f, Not):
        return not eval_formula(f.child, z, eq_tol)
    if isinstance(f, And):
        return all(eval_formula(c, z, eq_tol) for c in f.children)
    if isinstance(f, Or):
        return any(eval_formula(c, z, eq_tol) for c in f.children)
    raise TypeError(f"not a formula: {f!r}")


def propositions(f: Formula) -> Iterator[Prop]:
    """Every proposition occurrence, left to right."""
    if isinstance(f, Prop):
        yield f
    elif isinstance(f, Not):
        yield from propositions(f.child)
    else:
        for c in f.children:
            yield from propositions(c)


def depth(f: Formula) -> int:
    if isinstance(f, Prop):
        return 0
    if isinstance(f, Not):
        return 1 + depth(f.child)
    return 1 + max((depth(c) for c in f.children), default=0)
