"""Mixed-integer style comparison encodings of a max-min form.

Both encodings gate every literal with a variable ``mu_j in [0, 1]``::

    p_j <= mu_j * M

Big-M closes at least one gate per clause through ``prod_j mu_j = 0``.
The complementarity variant makes every gate binary with
``mu_j (1 - mu_j) = 0`` and asks for a closed gate through
``sum_j mu_j <= k - 1`` for a clause of ``k`` literals.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from . import expr as ex
from . import transform as tf
from .expr import Expr
from .nlp import (BaseOcp, NlpProblem, PipelineOptions, equality_literals, logic_maxmin,
                  tighten)

log = logging.getLogger(__name__)

DEFAULT_BIG_M = 1000.0
BIGM = "bigm"
COMPLEMENTARITY = "comp"


@dataclass(frozen=True)
class GateEncoding:
    """Constraints over ``[base vars, gates]``; gates start at ``base_count``."""

    method: str
    ineqs: tuple[Expr, ...]
    eqs: tuple[Expr, ...]
    gates: tuple[range, ...]
    base_count: int
    M: float

    @property
    def n_gates(self) -> int:
        return sum(len(g) for g in self.gates)


def _gate_blocks(m: tf.MaxMinForm, base_count: int) -> list[range]:
    blocks, nxt = [], base_count
    for clause in m.clauses:
        blocks.append(range(nxt, nxt + len(clause)))
        nxt += len(clause)
    return blocks


def _check_M(M: float):
    if not (M > 0 and math.isfinite(M)):
        raise ValueError(f"M must be a positive finite number, got {M}")


def _gated(m, blocks, M):
    out = []
    for clause, block in zip(m.clauses, blocks):
        for p, j in zip(clause, block):
            out.append(p - ex.var(j) * M)
    return out


def encode_bigM(m: tf.MaxMinForm, base_count: int, M: float = DEFAULT_BIG_M) -> GateEncoding:
    """``p_j <= mu_j M`` for each literal and ``prod_j mu_j = 0`` per clause."""
    _check_M(M)
    blocks = _gate_blocks(m, base_count)
    eqs = []
    for block in blocks:
        prod = ex.var(block.start)
        for j in block[1:]:
            prod = prod * ex.var(j)
        eqs.append(prod)
    return GateEncoding(BIGM, tuple(_gated(m, blocks, M)), tuple(eqs), tuple(blocks),
                        base_count, M)


def encode_complementarity(m: tf.MaxMinForm, base_count: int,
                           M: float = DEFAULT_BIG_M) -> GateEncoding:
    """Binary gates via ``mu (1 - mu) = 0`` and at least one closed gate."""
    _check_M(M)
    blocks = _gate_blocks(m, base_count)
    ineqs = _gated(m, blocks, M)
    eqs = []
    for block in blocks:
        ineqs.append(ex.esum(ex.var(j) for j in block) - (len(block) - 1))
        eqs.extend(ex.var(j) * (1.0 - ex.var(j)) for j in block)
    return GateEncoding(COMPLEMENTARITY, tuple(ineqs), tuple(eqs), tuple(blocks),
                        base_count, M)


def encode(m: tf.MaxMinForm, base_count: int, method: str, M: float = DEFAULT_BIG_M) -> GateEncoding:
    if method == BIGM:
        return encode_bigM(m, base_count, M)
    if method == COMPLEMENTARITY:
        return encode_complementarity(m, base_count, M)
    raise ValueError(f"unknown baseline method {method!r}")


def gates_feasible(enc: GateEncoding, z, tol: float = 0.0) -> bool:
    """Brute force: does some binary gate assignment satisfy the encoding at ``z``?

    Clauses are independent, so each block is enumerated on its own.  The
    check evaluates the encoded constraint expressions themselves.
    """
    z = [float(v) for v in np.asarray(z, dtype=float)[: enc.base_count]]
    n_lit = sum(len(b) for b in enc.gates)
    per_clause_ineq = _split_by_clause(enc)
    for block, (gated, extra_ineq, eqs) in zip(enc.gates, per_clause_ineq):
        ok = False
        for bits in itertools.product((0.0, 1.0), repeat=len(block)):
            point = z + [0.0] * n_lit
            for j, b in zip(block, bits):
                point[j] = b
            if all(ex.evaluate(c, point) <= tol for c in gated + extra_ineq) and \
                    all(abs(ex.evaluate(c, point)) <= tol for c in eqs):
                ok = True
                break
        if not ok:
            return False
    return True


def _split_by_clause(enc: GateEncoding):
    """Group the encoding's constraints per clause: (gated, other ineqs, eqs)."""
    out = []
    pos = 0
    n_clauses = len(enc.gates)
    for b, block in enumerate(enc.gates):
        gated = list(enc.ineqs[pos:pos + len(block)])
        pos += len(block)
        out.append([gated, [], []])
    if enc.method == BIGM:
        for b in range(n_clauses):
            out[b][2].append(enc.eqs[b])
    else:
        for b in range(n_clauses):
            out[b][1].append(enc.ineqs[pos + b])
        k = 0
        for b, block in enumerate(enc.gates):
            out[b][2].extend(enc.eqs[k:k + len(block)])
            k += len(block)
    return out


def check_big_m(m: tf.MaxMinForm, z, M: float) -> float:
    """Largest literal value at ``z``; warns when it exceeds ``M``.

    A literal above ``M`` cannot be switched off by its gate, so the
    encoding would wrongly exclude the point.
    """
    top = max((ex.evaluate(p, z) for c in m.clauses for p in c), default=-math.inf)
    if top > M:
        log.warning("literal value %.4g exceeds M = %.4g; Big-M gating is not exact here", top, M)
    return top


def assemble_baseline(base: BaseOcp, method: str, opts: PipelineOptions = PipelineOptions(),
                      M: float = DEFAULT_BIG_M) -> NlpProblem:
    """Base problem plus a gate encoding of its logic."""
    m = logic_maxmin(base, opts)
    lits = tighten(m, opts.margin, equality_literals(base.logic, opts.eq_mode))
    enc = encode(lits, base.vars.count, method, M)
    k = enc.n_gates
    names = [f"mu[{b}][{j}]" for b, block in enumerate(enc.gates) for j in range(len(block))]
    space = base.vars.extend(k, names, [0.0] * k, [1.0] * k)
    gate_range = range(base.vars.count, base.vars.count + k)
    return NlpProblem(
        vars=space,
        cost=base.cost,
        ineqs=base.ineqs + enc.ineqs,
        eqs=base.eqs + enc.eqs,
        n_base=base.vars.count,
        maxmin=m,
        method=method,
        aux={"gate": gate_range, "M": M, "blocks": enc.gates},
        base=base,
        n_logic_ineqs=len(enc.ineqs),
        n_logic_eqs=len(enc.eqs),
    )
