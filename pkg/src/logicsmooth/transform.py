"""Reformulation of logic constraints into smooth inequality systems.

Pipeline::

    eliminate_equalities -> to_nnf -> to_cnf -> smooth

``to_cnf`` yields a :class:`MaxMinForm`: the formula holds iff
``max_i min_j p_ij(z) <= 0``.  ``smooth`` replaces every inner min by a
convex combination ``sum_j lam_ij * p_ij(z) <= 0`` with the weights living on
a probability simplex that becomes part of the decision vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, Union

import numpy as np

from . import expr as ex
from .expr import Expr
from .logic_ast import EQUALITY, INEQUALITY, And, Formula, Not, Or, Prop

DEFAULT_EPSILON = 1e-6
DEFAULT_CNF_CAP = 4096


class CnfSizeError(ValueError):
    """Distributing OR over AND would exceed the configured clause cap."""


@dataclass(frozen=True)
class EpsilonPolicy:
    """Margin turning ``p > 0`` into ``-p + epsilon <= 0``."""

    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class MaxMinForm:
    """AND of ORs of ``p <= 0`` literals, stored as the max-of-mins array."""

    clauses: tuple[tuple[Expr, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "clauses", tuple(tuple(c) for c in self.clauses))

    @property
    def n_clauses(self) -> int:
        return len(self.clauses)

    @property
    def arities(self) -> tuple[int, ...]:
        return tuple(len(c) for c in self.clauses)

    @cached_property
    def literals(self) -> tuple[Expr, ...]:
        """Distinct literal graphs (clauses share them)."""
        return tuple({id(p): p for c in self.clauses for p in c}.values())

    @cached_property
    def order(self) -> tuple[Expr, ...]:
        return tuple(ex.toposort(self.literals))


def eliminate_equalities(f: Formula, mode: str = "split") -> Formula:
    """Replace every ``q = 0`` by inequality propositions.

    ``split`` gives ``(q <= 0) AND (-q <= 0)``; ``square`` gives ``q^2 <= 0``.
    """
    if mode not in ("split", "square"):
        raise ValueError(f"unknown equality mode {mode!r}")
    if isinstance(f, Prop):
        if f.kind != EQUALITY:
            return f
        if mode == "split":
            return And((Prop(INEQUALITY, f.func), Prop(INEQUALITY, -f.func)))
        return Prop(INEQUALITY, f.func ** 2)
    if isinstance(f, Not):
        return Not(eliminate_equalities(f.child, mode))
    if isinstance(f, And):
        return And(tuple(eliminate_equalities(c, mode) for c in f.children))
    if isinstance(f, Or):
        return Or(tuple(eliminate_equalities(c, mode) for c in f.children))
    raise TypeError(f"not a formula: {f!r}")


def negate_prop(p: Prop, eps: EpsilonPolicy) -> Prop:
    if p.kind != INEQUALITY:
        raise ValueError("equality propositions must be eliminated before negation")
    return Prop(INEQUALITY, -p.func + eps.epsilon, strict=True)


def to_nnf(f: Formula, eps: EpsilonPolicy = EpsilonPolicy()) -> Formula:
    """Push negations to the propositions and absorb them with the margin."""
    return _nnf(f, False, eps)


def _nnf(f: Formula, negated: bool, eps: EpsilonPolicy) -> Formula:
    if isinstance(f, Prop):
        if f.kind != INEQUALITY:
            raise ValueError("to_nnf requires an equality-free formula")
        return negate_prop(f, eps) if negated else f
    if isinstance(f, Not):
        return _nnf(f.child, not negated, eps)
    if isinstance(f, (And, Or)):
        kids = tuple(_nnf(c, negated, eps) for c in f.children)
        # De Morgan: negation swaps the connective
        if isinstance(f, And) != negated:
            return And(kids)
        return Or(kids)
    raise TypeError(f"not a formula: {f!r}")


def _clauses(f: Formula, cap: int) -> list[tuple[Expr, ...]]:
    if isinstance(f, Prop):
        if f.kind != INEQUALITY:
            raise ValueError("to_cnf requires an equality-free formula")
        return [(f.func,)]
    if isinstance(f, Not):
        raise ValueError("to_cnf requires a negation-free formula (run to_nnf first)")
    if isinstance(f, And):
        out: list[tuple[Expr, ...]] = []
        for c in f.children:
            out.extend(_clauses(c, cap))
            if len(out) > cap:
                raise CnfSizeError(f"CNF exceeds {cap} clauses (AND of {len(f.children)})")
        return out
    if isinstance(f, Or):
        acc: list[tuple[Expr, ...]] = [()]
        for c in f.children:
            sub = _clauses(c, cap)
            size = len(acc) * len(sub)
            if size > cap:
                raise CnfSizeError(
                    f"CNF distribution needs {size} clauses, cap is {cap}"
                )
            acc = [_merge(a, b) for a in acc for b in sub]
        return acc
    raise TypeError(f"not a formula: {f!r}")


def _merge(a, b):
    out = list(a)
    for lit in b:
        if not any(lit is x for x in out):
            out.append(lit)
    return tuple(out)


def to_cnf(f: Formula, cap: int = DEFAULT_CNF_CAP) -> MaxMinForm:
    """Naive distribution of OR over AND; literals are the original Exprs."""
    clauses = _clauses(f, cap)
    if any(len(c) == 0 for c in clauses):
        raise ValueError("formula is unsatisfiable (empty clause)")
    return MaxMinForm(tuple(clauses))


def add_resolvents(m: MaxMinForm, eps: EpsilonPolicy = EpsilonPolicy(),
                   cap: int = DEFAULT_CNF_CAP) -> MaxMinForm:
    """Append one round of resolvents on complementary literal pairs.

    A literal ``p`` and its negation ``-p + epsilon`` in two different
    clauses give the resolvent made of the remaining literals of both.  In
    exact logic the resolvent is implied by its parents, so the truth set is
    unchanged.  After smoothing it is not redundant: the weights can split
    between ``p`` and ``-p + epsilon`` when ``0 < p < epsilon``, and only the
    resolvent then still asks for one of the other literals.  Tautological
    resolvents and ones subsumed by an existing clause are dropped.
    """
    clauses = list(m.clauses)
    neg = {}
    for clause in clauses:
        for p in clause:
            neg.setdefault(id(p), -p + eps.epsilon)
    known = [frozenset(map(id, c)) for c in clauses]
    out = list(clauses)
    for i, a in enumerate(clauses):
        for j, b in enumerate(clauses):
            if i == j:
                continue
            ids_b = {id(q): q for q in b}
            for p in a:
                np_ = neg[id(p)]
                if id(np_) not in ids_b:
                    continue
                r = _merge(tuple(q for q in a if q is not p),
                           tuple(q for q in b if q is not np_))
                if not r or _tautology(r, neg):
                    continue
                key = frozenset(map(id, r))
                if any(k <= key for k in known):
                    continue
                known.append(key)
                out.append(r)
                if len(out) > cap:
                    raise CnfSizeError(f"resolution exceeds {cap} clauses")
    return MaxMinForm(tuple(out))


def _tautology(clause, neg) -> bool:
    ids = {id(p) for p in clause}
    return any(id(neg[id(p)]) in ids for p in clause if id(p) in neg)


def flatten_direct(f: Formula) -> Expr:
    """AND -> max, OR -> min without passing through CNF.  Evaluation only."""
    if isinstance(f, Prop):
        if f.kind != INEQUALITY:
            raise ValueError("flatten_direct requires an equality-free formula")
        return f.func
    if isinstance(f, Not):
        raise ValueError("flatten_direct requires a negation-free formula")
    if isinstance(f, And):
        if not f.children:
            return ex.const(-1.0)
        return ex.emax([flatten_direct(c) for c in f.children])
    if isinstance(f, Or):
        if not f.children:
            return ex.const(1.0)
        return ex.emin([flatten_direct(c) for c in f.children])
    raise TypeError(f"not a formula: {f!r}")


def eval_maxmin(m: MaxMinForm, z) -> float:
    if not m.clauses:
        return -math.inf
    return max(min(row) for row in clause_values(m, z))


def clause_values(m: MaxMinForm, z) -> list[list[float]]:
    lits = m.literals
    vals = dict(zip(map(id, lits), ex.evaluate_many(lits, z, m.order)))
    return [[vals[id(p)] for p in clause] for clause in m.clauses]


Sharing = Union[str, Sequence[Sequence[int]]]


@dataclass(frozen=True)
class SmoothedSet:
    """Weighted-sum constraints and the simplex blocks of their weights.

    ``constraints[i]`` is ``sum_j lam[block(i)][j] * p_ij``; the weight
    variables occupy indices ``base_count ..`` of the decision vector.
    """

    constraints: tuple[Expr, ...]
    simplex_blocks: tuple[range, ...]
    clause_block: tuple[int, ...]
    base_count: int
    sharing: str
    groups: tuple[tuple[int, ...], ...] = field(default=())

    @property
    def n_lambda(self) -> int:
        return sum(len(b) for b in self.simplex_blocks)

    @cached_property
    def order(self) -> tuple[Expr, ...]:
        return tuple(ex.toposort(self.constraints))

    def uniform_lambda(self) -> np.ndarray:
        lam = np.empty(self.n_lambda)
        for b in self.simplex_blocks:
            lam[b.start - self.base_count:b.stop - self.base_count] = 1.0 / len(b)
        return lam


def _resolve_groups(m: MaxMinForm, sharing: Sharing) -> tuple[str, list[list[int]]]:
    n = m.n_clauses
    if isinstance(sharing, str):
        if sharing == "per_clause":
            return "per_clause", [[i] for i in range(n)]
        if sharing == "shared":
            return "shared_groups", [list(range(n))] if n else []
        raise ValueError(f"unknown sharing mode {sharing!r}")
    groups = [list(g) for g in sharing]
    seen: set[int] = set()
    for g in groups:
        for i in g:
            if not 0 <= i < n:
                raise ValueError(f"clause index {i} out of range")
            if i in seen:
                raise ValueError(f"clause {i} appears in two groups")
            seen.add(i)
    groups += [[i] for i in range(n) if i not in seen]
    groups.sort(key=min)
    return "shared_groups", groups


def smooth(m: MaxMinForm, base_count: int, sharing: Sharing = "per_clause") -> SmoothedSet:
    """Replace each clause min by a simplex-weighted sum of its literals."""
    for p in m.literals:
        if not ex.is_smooth(p):
            raise ex.NonDifferentiableError("clause literal contains min/max", ex.find_nonsmooth(p))
    mode, groups = _resolve_groups(m, sharing)
    clause_block = [0] * m.n_clauses
    blocks: list[range] = []
    nxt = base_count
    for b, g in enumerate(groups):
        arity = {len(m.clauses[i]) for i in g}
        if len(arity) != 1:
            raise ValueError(f"shared group {g} mixes clause arities {sorted(arity)}")
        k = arity.pop()
        blocks.append(range(nxt, nxt + k))
        nxt += k
        for i in g:
            clause_block[i] = b
    constraints = []
    for i, clause in enumerate(m.clauses):
        block = blocks[clause_block[i]]
        constraints.append(ex.esum(ex.var(j) * p for j, p in zip(block, clause)))
    return SmoothedSet(
        constraints=tuple(constraints),
        simplex_blocks=tuple(blocks),
        clause_block=tuple(clause_block),
        base_count=base_count,
        sharing=mode,
        groups=tuple(tuple(g) for g in groups),
    )


def argmin_lambda(m: MaxMinForm, s: SmoothedSet, z) -> np.ndarray:
    """Vertex weights selecting each clause's smallest literal (lowest index on ties).

    Only meaningful when every block serves a single clause.
    """
    lam = np.zeros(s.n_lambda)
    for i, vals in enumerate(clause_values(m, z)):
        block = s.simplex_blocks[s.clause_block[i]]
        j = int(np.argmin(vals))
        lam[block.start - s.base_count + j] = 1.0
    return lam


def smoothed_values(s: SmoothedSet, z, lam) -> list[float]:
    point = list(np.asarray(z, dtype=float)) + list(np.asarray(lam, dtype=float))
    return ex.evaluate_many(s.constraints, point, s.order)


def reformulate(
    f: Formula,
    eq_mode: str = "split",
    eps: EpsilonPolicy = EpsilonPolicy(),
    cap: int = DEFAULT_CNF_CAP,
    resolve: bool = False,
) -> tuple[Formula, MaxMinForm]:
    """eliminate_equalities -> to_nnf -> to_cnf; returns (nnf, max-min form).

    ``resolve`` appends resolvents on complementary literals (see
    :func:`add_resolvents`).
    """
    nnf = to_nnf(eliminate_equalities(f, eq_mode), eps)
    m = to_cnf(nnf, cap)
    return nnf, add_resolvents(m, eps, cap) if resolve else m
