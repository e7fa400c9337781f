"""Scalar expression graphs over a flat decision vector.

Nodes are hash-consed: building the same operation on the same children
twice returns the same object, so repeated subexpressions are stored once
and structural equality reduces to identity.  Constant subtrees are folded
at construction; nothing else is simplified.

Two evaluation routes exist.  :func:`evaluate` and :func:`grad` walk the
graph directly and are meant for oracles and one-off queries.
:func:`compile_exprs` generates straight-line Python for a batch of outputs
and is what the solver uses in its inner loop.
"""

from __future__ import annotations

import math
import threading
import weakref
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Expr",
    "VarSpace",
    "ExprDomainError",
    "NonDifferentiableError",
    "const",
    "var",
    "sin",
    "cos",
    "sqrt",
    "emin",
    "emax",
    "esum",
    "evaluate",
    "grad",
    "toposort",
    "is_smooth",
    "find_nonsmooth",
    "dump",
    "load_dump",
    "compile_exprs",
    "CompiledExprs",
]

CONST = "const"
VAR = "var"
ADD = "+"
SUB = "-"
NEG = "neg"
MUL = "*"
DIV = "/"
POW = "^"
SIN = "sin"
COS = "cos"
SQRT = "sqrt"
MIN = "min"
MAX = "max"

_NONSMOOTH = frozenset((MIN, MAX))


class ExprDomainError(ArithmeticError):
    """Evaluation left the domain of an operation (division by zero, sqrt < 0)."""

    def __init__(self, message: str, node: "Expr | None" = None):
        super().__init__(message)
        self.node = node


class NonDifferentiableError(ValueError):
    """A min/max node sits on a path that must be differentiated."""

    def __init__(self, message: str, path: tuple[int, ...] = ()):
        super().__init__(message)
        self.path = path


@dataclass(frozen=True)
class VarSpace:
    """Layout of the flat decision vector: size, optional labels and bounds."""

    count: int
    names: tuple[str | None, ...] = ()
    lower: tuple[float, ...] = ()
    upper: tuple[float, ...] = ()

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("count must be nonnegative")
        names = self.names or (None,) * self.count
        lower = self.lower or (-math.inf,) * self.count
        upper = self.upper or (math.inf,) * self.count
        if not (len(names) == len(lower) == len(upper) == self.count):
            raise ValueError("names/lower/upper must have length count")
        for i, (lo, hi) in enumerate(zip(lower, upper)):
            if not lo <= hi:
                raise ValueError(f"lower[{i}]={lo} exceeds upper[{i}]={hi}")
        object.__setattr__(self, "names", tuple(names))
        object.__setattr__(self, "lower", tuple(float(v) for v in lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in upper))

    def extend(self, k: int, names=None, lower=None, upper=None) -> "VarSpace":
        names = tuple(names) if names is not None else (None,) * k
        lower = tuple(lower) if lower is not None else (-math.inf,) * k
        upper = tuple(upper) if upper is not None else (math.inf,) * k
        return VarSpace(
            self.count + k,
            self.names + names,
            self.lower + lower,
            self.upper + upper,
        )

    def bounds_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array(self.lower, dtype=float), np.array(self.upper, dtype=float)

    def var(self, i: int) -> "Expr":
        if not 0 <= i < self.count:
            raise IndexError(f"variable index {i} outside [0, {self.count})")
        return var(i)


class Expr:
    """Immutable node in a scalar expression graph.

    ``op`` is the node kind, ``args`` the children and ``value`` the payload:
    the float for a constant, the index for a variable, the integer exponent
    for a power node, ``None`` otherwise.
    """

    __slots__ = ("op", "args", "value", "__weakref__")

    op: str
    args: tuple["Expr", ...]
    value: float | int | None

    def __init__(self, *_):
        raise TypeError("use the module-level constructors (const, var, sin, ...)")

    # arithmetic sugar -------------------------------------------------
    def __add__(self, other):
        return _binary(ADD, self, _lift(other))

    def __radd__(self, other):
        return _binary(ADD, _lift(other), self)

    def __sub__(self, other):
        return _binary(SUB, self, _lift(other))

    def __rsub__(self, other):
        return _binary(SUB, _lift(other), self)

    def __mul__(self, other):
        return _binary(MUL, self, _lift(other))

    def __rmul__(self, other):
        return _binary(MUL, _lift(other), self)

    def __truediv__(self, other):
        return _binary(DIV, self, _lift(other))

    def __rtruediv__(self, other):
        return _binary(DIV, _lift(other), self)

    def __neg__(self):
        return _make(NEG, (self,), None)

    def __pos__(self):
        return self

    def __pow__(self, k):
        if isinstance(k, bool) or not isinstance(k, (int, np.integer)):
            raise TypeError("only integer exponents are supported")
        return _make(POW, (self,), int(k))

    def __repr__(self):
        return f"Expr({dump(self)})"

    def __reduce__(self):
        return (load_dump, (dump(self),))

    @property
    def is_const(self) -> bool:
        return self.op == CONST

    @property
    def is_var(self) -> bool:
        return self.op == VAR


_table: "weakref.WeakValueDictionary[tuple, Expr]" = weakref.WeakValueDictionary()
_lock = threading.Lock()


def _key(op, args, value):
    if op == CONST:
        # keep 0.0 and -0.0 apart
        return (op, value, math.copysign(1.0, value))
    return (op, value, tuple(id(a) for a in args))


def _intern(op, args, value) -> Expr:
    key = _key(op, args, value)
    with _lock:
        node = _table.get(key)
        if node is None:
            node = object.__new__(Expr)
            node.op = op
            node.args = args
            node.value = value
            _table[key] = node
        return node


def _fold(op, args, value):
    vals = [a.value for a in args]
    try:
        out = _apply_float(op, vals, value)
    except (ZeroDivisionError, ValueError, OverflowError):
        return None
    if not math.isfinite(out):
        return None
    return out


def _make(op, args, value) -> Expr:
    if args and all(a.op == CONST for a in args):
        folded = _fold(op, args, value)
        if folded is not None:
            return const(folded)
    return _intern(op, tuple(args), value)


def _binary(op, a, b):
    return _make(op, (a, b), None)


def _lift(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float, np.integer, np.floating)) and not isinstance(x, bool):
        return const(float(x))
    raise TypeError(f"cannot use {type(x).__name__} in an expression")


def const(c: float) -> Expr:
    c = float(c)
    if not math.isfinite(c):
        raise ValueError(f"non-finite constant {c}")
    return _intern(CONST, (), c)


def var(i: int) -> Expr:
    i = int(i)
    if i < 0:
        raise IndexError("variable index must be nonnegative")
    return _intern(VAR, (), i)


def sin(a) -> Expr:
    return _make(SIN, (_lift(a),), None)


def cos(a) -> Expr:
    return _make(COS, (_lift(a),), None)


def sqrt(a) -> Expr:
    return _make(SQRT, (_lift(a),), None)


def emin(*items) -> Expr:
    items = _flatten_items(items)
    if not items:
        raise ValueError("min of an empty list")
    if len(items) == 1:
        return items[0]
    return _make(MIN, tuple(items), None)


def emax(*items) -> Expr:
    items = _flatten_items(items)
    if not items:
        raise ValueError("max of an empty list")
    if len(items) == 1:
        return items[0]
    return _make(MAX, tuple(items), None)


def _flatten_items(items):
    if len(items) == 1 and not isinstance(items[0], (Expr, int, float)):
        items = tuple(items[0])
    return [_lift(a) for a in items]


def esum(terms: Iterable) -> Expr:
    """Left-folded sum that starts from the first term (no leading zero)."""
    it = iter(terms)
    try:
        total = _lift(next(it))
    except StopIteration:
        return const(0.0)
    for t in it:
        total = total + t
    return total


# ---------------------------------------------------------------------------
# graph walks


def toposort(roots: Iterable[Expr]) -> list[Expr]:
    """Children-before-parents order of every node reachable from ``roots``."""
    order: list[Expr] = []
    seen: set[int] = set()
    for root in roots:
        if id(root) in seen:
            continue
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for child in reversed(node.args):
                if id(child) not in seen:
                    stack.append((child, False))
    return order


_order_cache: "weakref.WeakKeyDictionary[Expr, tuple[Expr, ...]]" = weakref.WeakKeyDictionary()


def node_order(e: Expr) -> tuple[Expr, ...]:
    """Cached ``toposort([e])``; graphs are immutable so the order never changes."""
    try:
        return _order_cache[e]
    except KeyError:
        order = tuple(toposort([e]))
        with _lock:
            _order_cache[e] = order
        return order


def find_nonsmooth(e: Expr) -> tuple[int, ...] | None:
    """Child-index path from ``e`` to the first min/max node, or None."""
    stack = [(e, ())]
    seen = set()
    while stack:
        node, path = stack.pop()
        if node.op in _NONSMOOTH:
            return path
        if id(node) in seen:
            continue
        seen.add(id(node))
        for i in range(len(node.args) - 1, -1, -1):
            stack.append((node.args[i], path + (i,)))
    return None


def is_smooth(e: Expr) -> bool:
    return not any(node.op in _NONSMOOTH for node in node_order(e))


def max_var_index(exprs: Iterable[Expr]) -> int:
    top = -1
    for node in toposort(exprs):
        if node.op == VAR and node.value > top:
            top = node.value
    return top


def _apply_float(op, vals, payload, lib=math):
    if op == ADD:
        return vals[0] + vals[1]
    if op == SUB:
        return vals[0] - vals[1]
    if op == NEG:
        return -vals[0]
    if op == MUL:
        return vals[0] * vals[1]
    if op == DIV:
        if vals[1] == 0:
            raise ZeroDivisionError("division by zero")
        return vals[0] / vals[1]
    if op == POW:
        if payload < 0 and vals[0] == 0:
            raise ZeroDivisionError("zero to a negative power")
        return vals[0] ** payload
    if op == SIN:
        return lib.sin(vals[0])
    if op == COS:
        return lib.cos(vals[0])
    if op == SQRT:
        if vals[0] < 0:
            raise ValueError("sqrt of a negative number")
        return lib.sqrt(vals[0])
    if op == MIN:
        return min(vals)
    if op == MAX:
        return max(vals)
    raise ValueError(f"unknown op {op!r}")


def _point(z, n_required: int | None = None):
    z = list(z)
    if n_required is not None and len(z) != n_required:
        raise ValueError(f"point has length {len(z)}, expected {n_required}")
    return z


def evaluate(e: Expr, z: Sequence[float], space: VarSpace | None = None, lib=math):
    """Exact value of ``e`` at ``z``.

    ``lib`` supplies sin/cos/sqrt; passing :mod:`mpmath` (with an mpf point)
    evaluates the same graph in extended precision.
    """
    z = _point(z, space.count if space is not None else None)
    if lib is math:
        z = [float(v) for v in z]
    values: dict[int, object] = {}
    for node in node_order(e):
        if node.op == CONST:
            v = node.value if lib is math else lib.mpf(node.value)
        elif node.op == VAR:
            if node.value >= len(z):
                raise ValueError(
                    f"variable z{node.value} outside a point of length {len(z)}"
                )
            v = z[node.value]
        else:
            vals = [values[id(a)] for a in node.args]
            try:
                v = _apply_float(node.op, vals, node.value, lib)
            except (ZeroDivisionError, ValueError) as exc:
                raise ExprDomainError(f"{exc} at {dump(node)}", node) from None
        values[id(node)] = v
    return values[id(e)]


def evaluate_many(exprs: Sequence[Expr], z: Sequence[float],
                  order: Sequence[Expr] | None = None) -> list[float]:
    """Float values of several graphs, evaluating shared nodes once.

    ``order`` may pass a precomputed ``toposort(exprs)``.
    """
    z = [float(v) for v in z]
    values: dict[int, float] = {}
    for node in (order if order is not None else toposort(exprs)):
        op = node.op
        if op == CONST:
            v = node.value
        elif op == VAR:
            if node.value >= len(z):
                raise ValueError(f"variable z{node.value} outside a point of length {len(z)}")
            v = z[node.value]
        else:
            try:
                v = _apply_float(op, [values[id(a)] for a in node.args], node.value)
            except (ZeroDivisionError, ValueError) as exc:
                raise ExprDomainError(f"{exc} at {dump(node)}", node) from None
        values[id(node)] = v
    return [values[id(e)] for e in exprs]


def grad(e: Expr, z: Sequence[float], space: VarSpace | None = None) -> np.ndarray:
    """Reverse-mode gradient of ``e`` at ``z`` (graph-walking interpreter)."""
    path = find_nonsmooth(e)
    if path is not None:
        raise NonDifferentiableError(
            f"min/max node at path {'/'.join(map(str, path)) or '<root>'}", path
        )
    z = [float(v) for v in _point(z, space.count if space is not None else None)]
    n = space.count if space is not None else len(z)
    order = node_order(e)
    val: dict[int, float] = {}
    for node in order:
        if node.op == CONST:
            val[id(node)] = node.value
        elif node.op == VAR:
            val[id(node)] = z[node.value]
        else:
            try:
                val[id(node)] = _apply_float(
                    node.op, [val[id(a)] for a in node.args], node.value
                )
            except (ZeroDivisionError, ValueError) as exc:
                raise ExprDomainError(f"{exc} at {dump(node)}", node) from None
    adj: dict[int, float] = {id(e): 1.0}
    g = np.zeros(n)
    for node in reversed(order):
        a = adj.get(id(node), 0.0)
        if a == 0.0 or node.op == CONST:
            continue
        if node.op == VAR:
            g[node.value] += a
            continue
        args = node.args
        for child, partial in zip(args, _partials(node, [val[id(c)] for c in args], val[id(node)])):
            adj[id(child)] = adj.get(id(child), 0.0) + a * partial
    return g


def _partials(node, vals, out):
    op = node.op
    if op == ADD:
        return (1.0, 1.0)
    if op == SUB:
        return (1.0, -1.0)
    if op == NEG:
        return (-1.0,)
    if op == MUL:
        return (vals[1], vals[0])
    if op == DIV:
        return (1.0 / vals[1], -out / vals[1])
    if op == POW:
        k = node.value
        if k == 0:
            return (0.0,)
        return (k * vals[0] ** (k - 1),)
    if op == SIN:
        return (math.cos(vals[0]),)
    if op == COS:
        return (-math.sin(vals[0]),)
    if op == SQRT:
        if out == 0.0:
            raise ExprDomainError(f"sqrt not differentiable at 0 in {dump(node)}", node)
        return (0.5 / out,)
    raise NonDifferentiableError(f"no derivative rule for {op}")


# ---------------------------------------------------------------------------
# prefix dump


def dump(e: Expr) -> str:
    """Prefix (s-expression) rendering, e.g. ``(+ (^ z0 2) 3.0)``."""
    memo: dict[int, str] = {}
    for node in toposort([e]):
        if node.op == CONST:
            s = repr(float(node.value))
        elif node.op == VAR:
            s = f"z{node.value}"
        else:
            parts = [memo[id(a)] for a in node.args]
            if node.op == NEG:
                s = f"(- {parts[0]})"
            elif node.op == POW:
                s = f"(^ {parts[0]} {node.value})"
            else:
                s = f"({node.op} {' '.join(parts)})"
        memo[id(node)] = s
    return memo[id(e)]


def load_dump(text: str) -> Expr:
    """Inverse of :func:`dump`."""
    tokens = text.replace("(", " ( ").replace(")", " ) ").split()
    pos = 0

    def parse():
        nonlocal pos
        tok = tokens[pos]
        pos += 1
        if tok != "(":
            if tok.startswith("z"):
                return var(int(tok[1:]))
            return const(float(tok))
        op = tokens[pos]
        pos += 1
        if op == POW:
            base = parse()
            k = int(tokens[pos])
            pos += 1
            node = base ** k
        else:
            args = []
            while tokens[pos] != ")":
                args.append(parse())
            if op == SUB and len(args) == 1:
                node = -args[0]
            elif op in (ADD, SUB, MUL, DIV):
                node = _binary(op, *args)
            elif op in (SIN, COS, SQRT):
                node = _make(op, (args[0],), None)
            elif op in (MIN, MAX):
                node = _make(op, tuple(args), None)
            else:
                raise ValueError(f"unknown operator {op!r} in dump")
        if tokens[pos] != ")":
            raise ValueError("malformed dump: expected ')'")
        pos += 1
        return node

    out = parse()
    if pos != len(tokens):
        raise ValueError("trailing tokens in dump")
    return out


# ---------------------------------------------------------------------------
# code generation

_FWD = {
    ADD: "{0} + {1}",
    SUB: "{0} - {1}",
    NEG: "-{0}",
    MUL: "{0} * {1}",
    DIV: "{0} / {1}",
    SIN: "_sin({0})",
    COS: "_cos({0})",
    SQRT: "_sqrt({0})",
}


@dataclass
class CompiledExprs:
    """Straight-line Python for a batch of expressions sharing one tape.

    ``values(z)`` returns all outputs.  ``value_and_grad(z, weights)``
    evaluates the outputs, calls ``weights(values)`` to obtain one seed per
    output and returns ``(values, sum_i seed_i * grad_i)`` from a single
    reverse sweep.  ``values_and_jacobian(z)`` runs one reverse sweep per
    output restricted to that output's own subgraph.
    """

    n_vars: int
    n_out: int
    smooth: bool
    source: str = field(repr=False)
    _values: Callable = field(repr=False)
    _vjp: Callable | None = field(repr=False)
    _jac: Callable | None = field(repr=False)
    jac_rows: np.ndarray = field(repr=False, default=None)
    jac_cols: np.ndarray = field(repr=False, default=None)

    def sparse_jacobian(self, z) -> tuple[np.ndarray, np.ndarray]:
        """Output values and the Jacobian nonzeros in (jac_rows, jac_cols) order."""
        if self._jac is None:
            raise NonDifferentiableError("batch contains min/max nodes")
        vals, nz = self._jac(_as_list(z, self.n_vars))
        return np.array(vals), np.array(nz)

    def values(self, z) -> np.ndarray:
        return np.array(self._values(_as_list(z, self.n_vars)))

    def value_and_grad(self, z, weights) -> tuple[np.ndarray, np.ndarray]:
        if self._vjp is None:
            raise NonDifferentiableError("batch contains min/max nodes")
        vals, g = self._vjp(_as_list(z, self.n_vars), weights)
        return np.array(vals), np.array(g)

    def values_and_jacobian(self, z) -> tuple[np.ndarray, np.ndarray]:
        if self._jac is None:
            raise NonDifferentiableError("batch contains min/max nodes")
        vals, nz = self.sparse_jacobian(z)
        jac = np.zeros((self.n_out, self.n_vars))
        np.add.at(jac, (self.jac_rows, self.jac_cols), nz)
        return vals, jac

    def jacobian(self, z) -> np.ndarray:
        return self.values_and_jacobian(z)[1]


def _as_list(z, n):
    zl = np.asarray(z, dtype=float).tolist()
    if len(zl) != n:
        raise ValueError(f"point has length {len(zl)}, expected {n}")
    return zl


def compile_exprs(outputs: Sequence[Expr], n_vars: int) -> CompiledExprs:
    """Generate and compile evaluation (and, if smooth, derivative) code."""
    outputs = list(outputs)
    order = toposort(outputs)
    smooth = all(node.op not in _NONSMOOTH for node in order)
    names: dict[int, str] = {}
    fwd_lines: list[str] = []
    for node in order:
        nid = id(node)
        if node.op == CONST:
            names[nid] = f"({node.value!r})"
            continue
        if node.op == VAR:
            if node.value >= n_vars:
                raise ValueError(f"variable z{node.value} outside space of size {n_vars}")
            names[nid] = f"z[{node.value}]"
            continue
        name = f"t{len(names)}"
        args = [names[id(a)] for a in node.args]
        if node.op == POW:
            rhs = f"{args[0]} ** {node.value}"
        elif node.op == MIN:
            rhs = f"_min({', '.join(args)})"
        elif node.op == MAX:
            rhs = f"_max({', '.join(args)})"
        else:
            rhs = _FWD[node.op].format(*args)
        fwd_lines.append(f"    {name} = {rhs}")
        names[nid] = name
    ret = "(" + "".join(f"{names[id(o)]}, " for o in outputs) + ")"

    src = ["def _values(z):"] + fwd_lines + [f"    return {ret}"]
    if smooth:
        src += ["", "def _vjp(z, weights):"] + fwd_lines
        src.append(f"    _out = {ret}")
        src.append("    _w = weights(_out)")
        src.append(f"    g = [0.0] * {n_vars}")
        src += _reverse_lines(order, [(o, f"_w[{i}]") for i, o in enumerate(outputs)],
                              names, lambda col: f"g[{col}]")
        src.append("    return _out, g")
        # fixed sparsity pattern: one slot per (row, variable) pair
        rows: list[int] = []
        cols: list[int] = []
        jac_lines: list[str] = []
        for i, out in enumerate(outputs):
            sub = toposort([out])
            slot = {}
            for node in sub:
                if node.op == VAR:
                    slot[node.value] = len(rows)
                    rows.append(i)
                    cols.append(node.value)
            jac_lines += _reverse_lines(sub, [(out, "1.0")], names,
                                        lambda col, sl=slot: f"J[{sl[col]}]")
        src += ["", "def _jac(z):"] + fwd_lines
        src.append(f"    J = [0.0] * {len(rows)}")
        src += jac_lines
        src.append(f"    return {ret}, J")
    else:
        rows, cols = [], []
    source = "\n".join(src) + "\n"
    ns = {"_sin": math.sin, "_cos": math.cos, "_sqrt": math.sqrt, "_min": min, "_max": max}
    exec(compile(source, "<logicsmooth.compiled>", "exec"), ns)
    return CompiledExprs(
        n_vars=n_vars,
        n_out=len(outputs),
        smooth=smooth,
        source=source,
        _values=ns["_values"],
        _vjp=ns.get("_vjp"),
        _jac=ns.get("_jac"),
        jac_rows=np.array(rows, dtype=np.intp),
        jac_cols=np.array(cols, dtype=np.intp),
    )


def _reverse_lines(order, seeds, names, var_target):
    lines: list[str] = []
    adj: dict[int, str] = {}

    def target(node):
        if node.op == VAR:
            return var_target(node.value)
        return "a" + names[id(node)][1:]

    def contribute(node, expr, sign=1):
        if node.op == CONST:
            return
        t = target(node)
        if node.op != VAR and id(node) not in adj:
            adj[id(node)] = t
            lines.append(f"    {t} = {expr}" if sign > 0 else f"    {t} = -({expr})")
        else:
            lines.append(f"    {t} {'+' if sign > 0 else '-'}= {expr}")

    for out, seed in seeds:
        contribute(out, seed)
    for node in reversed(order):
        if node.op in (CONST, VAR):
            continue
        if id(node) not in adj:
            continue
        a = adj[id(node)]
        args = node.args
        v = [names[id(c)] for c in args]
        op = node.op
        if op == ADD:
            contribute(args[0], a)
            contribute(args[1], a)
        elif op == SUB:
            contribute(args[0], a)
            contribute(args[1], a, -1)
        elif op == NEG:
            contribute(args[0], a, -1)
        elif op == MUL:
            contribute(args[0], f"{a} * {v[1]}")
            contribute(args[1], f"{a} * {v[0]}")
        elif op == DIV:
            contribute(args[0], f"{a} / {v[1]}")
            contribute(args[1], f"{a} * {names[id(node)]} / {v[1]}", -1)
        elif op == POW:
            k = node.value
            if k == 0:
                pass
            elif k == 1:
                contribute(args[0], a)
            elif k == 2:
                contribute(args[0], f"{a} * 2.0 * {v[0]}")
            else:
                contribute(args[0], f"{a} * {float(k)!r} * {v[0]} ** {k - 1}")
        elif op == SIN:
            contribute(args[0], f"{a} * _cos({v[0]})")
        elif op == COS:
            contribute(args[0], f"{a} * _sin({v[0]})", -1)
        elif op == SQRT:
            contribute(args[0], f"{a} * 0.5 / {names[id(node)]}")
        else:  # pragma: no cover - guarded by the smooth flag
            raise NonDifferentiableError(op)
    return lines
