"""Text front end: logic formulas and ``.lc`` problem files.

Formula grammar (keywords are case-insensitive)::

    formula := "IF" formula "THEN" formula ["ELSE" formula] | or
    or      := and {"OR" and}
    and     := not {"AND" not}
    not     := "NOT" not | atom
    atom    := "TRUE" | "FALSE" | "(" formula ")" | expr ("<=" | "=") "0"
    expr    := term {("+" | "-") term}
    term    := unary {("*" | "/") unary}
    unary   := ("-" | "+") unary | power
    power   := primary ["^" ["-"] INT]
    primary := NUMBER | "(" expr ")" | FUNC "(" expr {"," expr} ")"
             | "x[" idx "][" INT "]" | "v[" idx "][" INT "]" | "z[" INT "]" | NAME

``FUNC`` is one of sin, cos, sqrt, min, max.  Indices may use ``N`` (the
horizon) and, inside ``residual`` lines, the step variable ``k``.

A leading ``(`` is ambiguous between a grouped formula and a grouped
expression; the parser tries the formula reading first and backtracks.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from . import expr as ex
from .expr import Expr, VarSpace
from .logic_ast import FALSE, TRUE, And, Formula, Not, Or, Prop, eq, if_then_else, implies, le
from .nlp import BaseOcp, TrajectoryLayout

KEYWORDS = frozenset(("NOT", "AND", "OR", "IF", "THEN", "ELSE", "TRUE", "FALSE"))
FUNCTIONS = {"sin": ex.sin, "cos": ex.cos, "sqrt": ex.sqrt}
VARIADIC = {"min": ex.emin, "max": ex.emax}
BUNDLED = ("problem1", "problem2")


@dataclass(frozen=True)
class SourceSpan:
    """Character offsets ``[start, end)`` plus the 1-based line/column of ``start``."""

    start: int
    end: int
    line: int
    col: int

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError("span start exceeds end")

    @classmethod
    def of(cls, text: str, start: int, end: int) -> "SourceSpan":
        line = text.count("\n", 0, start) + 1
        col = start - (text.rfind("\n", 0, start) + 1) + 1
        return cls(start, end, line, col)


class DslError(ValueError):
    """Parse or validation error located in the source text."""

    def __init__(self, message: str, span: SourceSpan | None = None, text: str | None = None):
        self.message = message
        self.span = span
        self.text = text
        super().__init__(self._render())

    def _render(self) -> str:
        if self.span is None:
            return self.message
        out = f"line {self.span.line}, col {self.span.col}: {self.message}"
        if self.text is not None:
            lines = self.text.splitlines() or [""]
            src = lines[min(self.span.line, len(lines)) - 1]
            width = max(1, min(self.span.end - self.span.start, len(src) - self.span.col + 1))
            out += f"\n  {src}\n  {' ' * (self.span.col - 1)}{'^' * width}"
        return out


# ---------------------------------------------------------------------------
# tokens

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r\n]+|\#[^\n]*)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op><=|>=|==|!=|[-+*/^()\[\],=<>])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str  # num, ident, kw, op, eof
    text: str
    start: int
    end: int


def tokenize(text: str, start: int = 0, end: int | None = None) -> list[Token]:
    end = len(text) if end is None else end
    pos = start
    out = []
    while pos < end:
        m = _TOKEN.match(text, pos, end)
        if m is None:
            raise DslError(f"unexpected character {text[pos]!r}", SourceSpan.of(text, pos, pos + 1), text)
        kind = m.lastgroup
        if kind != "ws":
            word = m.group()
            if kind == "ident" and word.upper() in KEYWORDS:
                out.append(Token("kw", word.upper(), m.start(), m.end()))
            else:
                out.append(Token(kind, word, m.start(), m.end()))
        pos = m.end()
    out.append(Token("eof", "", end, end))
    return out


# ---------------------------------------------------------------------------
# parser


@dataclass
class Scope:
    """Name resolution for a parse: trajectory layout, named subexpressions
    and integer index variables (``k`` in residual lines)."""

    layout: TrajectoryLayout | None = None
    names: dict[str, Expr] = field(default_factory=dict)
    indices: dict[str, int] = field(default_factory=dict)


class _Backtrack(Exception):
    pass


_ARITH = frozenset("+-*/^")
_CMP = frozenset(("<=", "=", "==", ">=", "<", ">", "!="))


class _Parser:
    def __init__(self, text: str, scope: Scope, start: int = 0, end: int | None = None):
        self.text = text
        self.scope = scope
        self.toks = tokenize(text, start, end)
        self.i = 0
        self.memo: dict[int, tuple] = {}

    # helpers ----------------------------------------------------------
    def peek(self, ahead: int = 0) -> Token:
        return self.toks[min(self.i + ahead, len(self.toks) - 1)]

    def advance(self) -> Token:
        tok = self.peek()
        self.i = min(self.i + 1, len(self.toks) - 1)
        return tok

    def error(self, message: str, tok: Token | None = None) -> DslError:
        tok = tok or self.peek()
        err = DslError(message, SourceSpan.of(self.text, tok.start, max(tok.end, tok.start)), self.text)
        err.index = self.toks.index(tok) if tok in self.toks else self.i
        return err

    def is_op(self, text: str) -> bool:
        tok = self.peek()
        return tok.kind == "op" and tok.text == text

    def is_kw(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind == "kw" and tok.text == word

    def expect_op(self, text: str) -> Token:
        if not self.is_op(text):
            raise self.error(f"expected {text!r}, found {self._describe(self.peek())}")
        return self.advance()

    def expect_kw(self, word: str) -> Token:
        if not self.is_kw(word):
            raise self.error(f"expected {word}, found {self._describe(self.peek())}")
        return self.advance()

    @staticmethod
    def _describe(tok: Token) -> str:
        return "end of input" if tok.kind == "eof" else repr(tok.text)

    def finish(self):
        if self.peek().kind != "eof":
            raise self.error(f"unexpected {self._describe(self.peek())}")

    # formulas ---------------------------------------------------------
    def formula(self) -> Formula:
        if self.is_kw("IF"):
            self.advance()
            cond = self.formula()
            self.expect_kw("THEN")
            then = self.formula()
            if self.is_kw("ELSE"):
                self.advance()
                return if_then_else(cond, then, self.formula())
            return implies(cond, then)
        return self.disjunction()

    def disjunction(self) -> Formula:
        items = [self.conjunction()]
        while self.is_kw("OR"):
            self.advance()
            items.append(self.conjunction())
        return items[0] if len(items) == 1 else Or(tuple(items))

    def conjunction(self) -> Formula:
        items = [self.negation()]
        while self.is_kw("AND"):
            self.advance()
            items.append(self.negation())
        return items[0] if len(items) == 1 else And(tuple(items))

    def negation(self) -> Formula:
        if self.is_kw("NOT"):
            self.advance()
            return Not(self.negation())
        return self.atom()

    def atom(self) -> Formula:
        if self.is_kw("TRUE"):
            self.advance()
            return TRUE
        if self.is_kw("FALSE"):
            self.advance()
            return FALSE
        if self.is_op("("):
            start = self.i
            try:
                f, stop = self._grouped_formula(start)
                self.i = stop
                return f
            except (DslError, _Backtrack) as first:
                self.i = start
                try:
                    return self.comparison()
                except DslError as second:
                    # report whichever reading got further into the input
                    if isinstance(first, DslError) and getattr(first, "index", -1) > getattr(second, "index", -1):
                        raise first from None
                    raise
        return self.comparison()

    def _grouped_formula(self, start: int):
        if start in self.memo:
            kind, payload = self.memo[start]
            if kind == "ok":
                return payload
            raise payload
        self.i = start
        try:
            self.expect_op("(")
            f = self.formula()
            self.expect_op(")")
            nxt = self.peek()
            if nxt.kind == "op" and (nxt.text in _ARITH or nxt.text in _CMP):
                raise _Backtrack()
        except (DslError, _Backtrack) as exc:
            self.memo[start] = ("err", exc)
            raise
        result = (f, self.i)
        self.memo[start] = ("ok", result)
        return result

    def comparison(self) -> Prop:
        lhs = self.expr()
        tok = self.peek()
        if tok.kind != "op" or tok.text not in _CMP:
            raise self.error(f"expected a comparison '<= 0' or '= 0', found {self._describe(tok)}")
        if tok.text not in ("<=", "="):
            raise self.error(f"unsupported comparison {tok.text!r}: only '<= 0' and '= 0' are allowed", tok)
        self.advance()
        rhs_tok = self.peek()
        rhs = self.expr()
        if not (rhs.op == ex.CONST and rhs.value == 0.0):
            raise self.error(
                "the right-hand side must be the literal 0; "
                f"write `lhs - (rhs) {tok.text} 0` instead", rhs_tok)
        nxt = self.peek()
        if nxt.kind == "op" and nxt.text in _CMP:
            raise self.error("chained comparison; combine propositions with AND", nxt)
        return le(lhs) if tok.text == "<=" else eq(lhs)

    # expressions ------------------------------------------------------
    def expr(self) -> Expr:
        e = self.term()
        while self.is_op("+") or self.is_op("-"):
            op = self.advance().text
            rhs = self.term()
            e = e + rhs if op == "+" else e - rhs
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.is_op("*") or self.is_op("/"):
            op = self.advance().text
            rhs = self.unary()
            e = e * rhs if op == "*" else e / rhs
        return e

    def unary(self) -> Expr:
        if self.is_op("-"):
            self.advance()
            return -self.unary()
        if self.is_op("+"):
            self.advance()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        if self.is_op("^"):
            self.advance()
            sign = 1
            if self.is_op("-"):
                self.advance()
                sign = -1
            tok = self.peek()
            if tok.kind != "num" or not tok.text.isdigit():
                raise self.error("exponent must be an integer literal", tok)
            self.advance()
            base = base ** (sign * int(tok.text))
            if self.is_op("^"):
                raise self.error("chained '^' is ambiguous; add parentheses")
        return base

    def primary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "num":
            value = float(tok.text)
            if not math.isfinite(value):
                raise self.error(f"number {tok.text} overflows", tok)
            self.advance()
            return ex.const(value)
        if self.is_op("("):
            self.advance()
            e = self.expr()
            self.expect_op(")")
            return e
        if tok.kind == "ident":
            self.advance()
            name = tok.text
            if name in FUNCTIONS or name in VARIADIC:
                self.expect_op("(")
                args = [self.expr()]
                while self.is_op(","):
                    self.advance()
                    args.append(self.expr())
                self.expect_op(")")
                if name in FUNCTIONS:
                    if len(args) != 1:
                        raise self.error(f"{name} takes one argument", tok)
                    return FUNCTIONS[name](args[0])
                return VARIADIC[name](*args) if len(args) > 1 else args[0]
            if name in ("x", "v") and self.is_op("["):
                return self._trajectory_var(name, tok)
            if name == "z" and self.is_op("["):
                self.advance()
                i = self._index()
                self.expect_op("]")
                if i < 0:
                    raise self.error("variable index must be nonnegative", tok)
                return ex.var(i)
            if name in self.scope.names:
                return self.scope.names[name]
            raise self.error(f"unknown identifier {name!r}", tok)
        raise self.error(f"expected an expression, found {self._describe(tok)}")

    def _trajectory_var(self, name: str, tok: Token) -> Expr:
        lay = self.scope.layout
        if lay is None:
            raise self.error(f"{name}[..] needs a trajectory layout (declare a horizon and dynamics)", tok)
        self.expect_op("[")
        k = self._index()
        self.expect_op("]")
        self.expect_op("[")
        j = self._index()
        end = self.expect_op("]")
        try:
            idx = lay.x_index(k, j) if name == "x" else lay.u_index(k, j)
        except IndexError as exc:
            span_tok = Token("ident", name, tok.start, end.end)
            raise self.error(str(exc), span_tok) from None
        return ex.var(idx)

    def _index(self) -> int:
        total = self._index_term()
        while self.is_op("+") or self.is_op("-"):
            op = self.advance().text
            t = self._index_term()
            total = total + t if op == "+" else total - t
        return total

    def _index_term(self) -> int:
        tok = self.advance()
        if tok.kind == "num" and tok.text.isdigit():
            return int(tok.text)
        if tok.kind == "ident":
            if tok.text in self.scope.indices:
                return self.scope.indices[tok.text]
            if tok.text == "N" and self.scope.layout is not None:
                return self.scope.layout.horizon
        raise self.error(f"invalid index {self._describe(tok)}", tok)


def parse_formula(text: str, scope: Scope | None = None) -> Formula:
    p = _Parser(text, scope or Scope())
    f = p.formula()
    p.finish()
    return f


def parse_expr(text: str, scope: Scope | None = None) -> Expr:
    p = _Parser(text, scope or Scope())
    e = p.expr()
    p.finish()
    return e


# ---------------------------------------------------------------------------
# pretty printing


def _var_name(i: int, layout: TrajectoryLayout | None) -> str:
    if layout is not None:
        if i < layout.n_states:
            k, j = divmod(i, layout.state_dim)
            return f"x[{k}][{j + 1}]"
        if i < layout.n_states + layout.n_inputs:
            k, j = divmod(i - layout.n_states, layout.input_dim)
            return f"v[{k}][{j + 1}]"
    return f"z[{i}]"


def format_expr(e: Expr, layout: TrajectoryLayout | None = None) -> str:
    """Parenthesized text that parses back to the identical node."""
    memo: dict[int, str] = {}
    for node in ex.toposort([e]):
        a = [memo[id(c)] for c in node.args]
        op = node.op
        if op == ex.CONST:
            s = repr(node.value)
            s = f"({s})" if s.startswith("-") else s
        elif op == ex.VAR:
            s = _var_name(node.value, layout)
        elif op == ex.NEG:
            s = f"(-{a[0]})"
        elif op in (ex.ADD, ex.SUB, ex.MUL, ex.DIV):
            s = f"({a[0]} {op} {a[1]})"
        elif op == ex.POW:
            s = f"({a[0]} ^ {node.value})"
        else:
            s = f"{op}({', '.join(a)})"
        memo[id(node)] = s
    return memo[id(e)]


def format_formula(f: Formula, layout: TrajectoryLayout | None = None) -> str:
    """Text form of ``f``; ``parse_formula`` of it rebuilds the same formula
    (single-child AND/OR nodes collapse to their child)."""
    if isinstance(f, Prop):
        cmp = "<=" if f.kind == "le" else "="
        return f"{format_expr(f.func, layout)} {cmp} 0"
    if isinstance(f, Not):
        return f"NOT ({format_formula(f.child, layout)})"
    if isinstance(f, (And, Or)):
        if not f.children:
            return "TRUE" if isinstance(f, And) else "FALSE"
        word = " AND " if isinstance(f, And) else " OR "
        return word.join(f"({format_formula(c, layout)})" for c in f.children)
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# problem files

_SINGLE = ("horizon", "dynamics", "initial", "inputs", "cost", "logic")
_REPEAT = ("let", "constraint", "residual")
_QUAD_KEYS = ("mass", "inertia", "arm", "gravity", "ts", "u_min", "u_max")


@dataclass
class _Stmt:
    word: str
    start: int  # offset of the keyword
    body: int   # offset just after the keyword
    end: int


def _statements(text: str) -> list[_Stmt]:
    stmts: list[_Stmt] = []
    pos = 0
    for line in text.splitlines(keepends=True):
        stripped = line.strip()
        if stripped and not stripped.startswith("#"):
            if line[0] in " \t":
                if not stmts:
                    raise DslError("indented continuation line without a statement",
                                   SourceSpan.of(text, pos, pos + len(line.rstrip())), text)
                stmts[-1].end = pos + len(line)
            else:
                m = re.match(r"[A-Za-z_]+", line)
                if m is None:
                    raise DslError("expected a section keyword",
                                   SourceSpan.of(text, pos, pos + 1), text)
                stmts.append(_Stmt(m.group().lower(), pos, pos + m.end(), pos + len(line)))
        pos += len(line)
    return stmts


def _number_list(p: _Parser) -> list[float]:
    vals = []
    while p.peek().kind != "eof":
        sign = 1.0
        if p.is_op("-") or p.is_op("+"):
            sign = -1.0 if p.advance().text == "-" else 1.0
        tok = p.peek()
        if tok.kind != "num":
            raise p.error(f"expected a number, found {p._describe(tok)}")
        p.advance()
        vals.append(sign * float(tok.text))
        if p.is_op(","):
            p.advance()
    return vals


def _trajectory_space(lay: TrajectoryLayout, u_min: float, u_max: float) -> VarSpace:
    names = [f"x[{k}][{j}]" for k in range(lay.horizon + 1) for j in range(1, lay.state_dim + 1)]
    names += [f"v[{k}][{j}]" for k in range(lay.horizon) for j in range(1, lay.input_dim + 1)]
    lower = [-math.inf] * lay.n_states + [u_min] * lay.n_inputs
    upper = [math.inf] * lay.n_states + [u_max] * lay.n_inputs
    return VarSpace(lay.n_states + lay.n_inputs, tuple(names), tuple(lower), tuple(upper))


def parse_problem(text: str) -> BaseOcp:
    """Build a :class:`BaseOcp` from ``.lc`` text.

    Sections: ``horizon``, ``dynamics quadrotor(...)`` or ``dynamics
    custom(states=.., inputs=..)`` with ``residual`` lines, ``initial``,
    ``inputs`` (custom bounds), ``let``, ``cost``, ``constraint`` and
    ``logic``.  Indented lines continue the previous statement.
    """
    from . import quadrotor as qd

    stmts = _statements(text)
    seen: dict[str, _Stmt] = {}
    for st in stmts:
        if st.word not in _SINGLE and st.word not in _REPEAT:
            raise DslError(f"unknown section {st.word!r}", SourceSpan.of(text, st.start, st.body), text)
        if st.word in _SINGLE:
            if st.word in seen:
                raise DslError(f"duplicate section {st.word!r}", SourceSpan.of(text, st.start, st.body), text)
            seen[st.word] = st
    for word in ("horizon", "dynamics", "cost"):
        if word not in seen:
            raise DslError(f"missing section {word!r}")

    def parser(st: _Stmt, scope: Scope) -> _Parser:
        return _Parser(text, scope, st.body, st.end)

    # horizon
    p = parser(seen["horizon"], Scope())
    tok = p.peek()
    sign = ""
    if p.is_op("-"):
        p.advance()
        sign = "-"
        tok = p.peek()
    if tok.kind != "num" or not tok.text.isdigit() or sign or int(tok.text) < 1:
        raise p.error(f"horizon must be a positive integer, got {sign}{tok.text or 'nothing'}", tok)
    p.advance()
    p.finish()
    horizon = int(tok.text)

    # dynamics
    p = parser(seen["dynamics"], Scope())
    kind_tok = p.peek()
    if kind_tok.kind != "ident" or kind_tok.text not in ("quadrotor", "custom"):
        raise p.error("dynamics must be quadrotor(...) or custom(states=.., inputs=..)", kind_tok)
    p.advance()
    options: dict[str, float] = {}
    if p.is_op("("):
        p.advance()
        while not p.is_op(")"):
            key = p.peek()
            if key.kind != "ident":
                raise p.error("expected option name", key)
            p.advance()
            p.expect_op("=")
            val = p.expr()
            if val.op != ex.CONST:
                raise p.error(f"option {key.text!r} needs a numeric value", key)
            if key.text in options:
                raise p.error(f"duplicate option {key.text!r}", key)
            options[key.text] = float(val.value)
            if p.is_op(","):
                p.advance()
            elif not p.is_op(")"):
                raise p.error(f"expected ',' or ')', found {p._describe(p.peek())}")
        p.advance()
    p.finish()

    x0 = None
    if "initial" in seen:
        p = parser(seen["initial"], Scope())
        x0 = _number_list(p)

    residual_stmts = [st for st in stmts if st.word == "residual"]
    if kind_tok.kind and kind_tok.text == "quadrotor":
        bad = sorted(set(options) - set(_QUAD_KEYS))
        if bad:
            raise DslError(f"unknown quadrotor option(s): {', '.join(bad)}",
                           SourceSpan.of(text, seen["dynamics"].start, seen["dynamics"].end), text)
        if residual_stmts:
            raise DslError("residual lines require custom dynamics",
                           SourceSpan.of(text, residual_stmts[0].start, residual_stmts[0].body), text)
        if "inputs" in seen:
            raise DslError("quadrotor input bounds are set with u_min/u_max options",
                           SourceSpan.of(text, seen["inputs"].start, seen["inputs"].body), text)
        if x0 is not None and len(x0) != qd.STATE_DIM:
            raise DslError(f"dimension mismatch: initial has {len(x0)} values, the state has {qd.STATE_DIM}",
                           SourceSpan.of(text, seen["initial"].start, seen["initial"].end), text)
        kw = dict(options)
        try:
            params = qd.QuadParams(horizon=horizon, x0=tuple(x0) if x0 else (0.0,) * qd.STATE_DIM, **kw)
        except ValueError as exc:
            raise DslError(f"invalid quadrotor parameters: {exc}",
                           SourceSpan.of(text, seen["dynamics"].start, seen["dynamics"].end), text) from None
        lay = params.layout()
        space = qd.var_space(params)
        dyn = list(qd.dynamics_residuals(params))
    else:
        for need in ("states", "inputs"):
            if need not in options:
                raise DslError(f"custom dynamics needs {need}=..",
                               SourceSpan.of(text, seen["dynamics"].start, seen["dynamics"].end), text)
        bad = sorted(set(options) - {"states", "inputs"})
        if bad:
            raise DslError(f"unknown custom dynamics option(s): {', '.join(bad)}",
                           SourceSpan.of(text, seen["dynamics"].start, seen["dynamics"].end), text)
        nx, nu = options["states"], options["inputs"]
        if nx != int(nx) or nx < 1 or nu != int(nu) or nu < 0:
            raise DslError("states must be >= 1 and inputs >= 0 (integers)",
                           SourceSpan.of(text, seen["dynamics"].start, seen["dynamics"].end), text)
        lay = TrajectoryLayout(horizon, int(nx), int(nu))
        u_min, u_max = -math.inf, math.inf
        if "inputs" in seen:
            p = parser(seen["inputs"], Scope())
            bounds = _number_list(p)
            if len(bounds) != 2 or bounds[0] > bounds[1]:
                raise DslError("inputs expects two numbers lo <= hi",
                               SourceSpan.of(text, seen["inputs"].start, seen["inputs"].end), text)
            u_min, u_max = bounds
        space = _trajectory_space(lay, u_min, u_max)
        dyn = []
        if x0 is not None:
            if len(x0) != lay.state_dim:
                raise DslError(f"dimension mismatch: initial has {len(x0)} values, the state has {lay.state_dim}",
                               SourceSpan.of(text, seen["initial"].start, seen["initial"].end), text)
            dyn = [ex.var(lay.x_index(0, j)) - x0[j - 1] for j in range(1, lay.state_dim + 1)]

    scope = Scope(layout=lay)
    cost = None
    ineqs: list[Expr] = []
    eqs: list[Expr] = []
    logic: Formula = TRUE
    residuals: list[list[Expr]] = []
    for st in stmts:
        if st.word == "let":
            p = parser(st, scope)
            name_tok = p.peek()
            if name_tok.kind != "ident":
                raise p.error("expected a name after let", name_tok)
            if name_tok.text in scope.names or name_tok.text in ("x", "v", "z", "N", "k") \
                    or name_tok.text in FUNCTIONS or name_tok.text in VARIADIC:
                raise p.error(f"cannot (re)define {name_tok.text!r}", name_tok)
            p.advance()
            p.expect_op("=")
            value = p.expr()
            p.finish()
            scope.names[name_tok.text] = value
        elif st.word == "cost":
            p = parser(st, scope)
            cost = p.expr()
            p.finish()
        elif st.word == "constraint":
            p = parser(st, scope)
            prop = p.comparison()
            p.finish()
            (ineqs if prop.kind == "le" else eqs).append(prop.func)
        elif st.word == "logic":
            p = parser(st, scope)
            if p.peek().kind == "eof":
                logic = TRUE
            else:
                logic = p.formula()
                p.finish()
        elif st.word == "residual":
            rows = []
            for k in range(lay.horizon):
                p = parser(st, Scope(layout=lay, names=scope.names, indices={"k": k}))
                rows.append(p.expr())
                p.finish()
            residuals.append(rows)
    # residuals are stacked per step, in declaration order within a step
    for k in range(lay.horizon):
        dyn.extend(r[k] for r in residuals)
    if residuals and len(residuals) != lay.state_dim:
        raise DslError(f"dimension mismatch: {len(residuals)} residual lines for {lay.state_dim} states")
    return BaseOcp(vars=space, cost=cost, ineqs=tuple(ineqs), eqs=tuple(dyn) + tuple(eqs),
                   logic=logic, layout=lay)


def bundled_path(name: str):
    """Path-like handle of a bundled problem file (``problem1`` or ``problem2``)."""
    stem = name[:-3] if name.endswith(".lc") else name
    if stem not in BUNDLED:
        raise ValueError(f"unknown bundled problem {name!r} (have {', '.join(BUNDLED)})")
    return resources.files("logicsmooth").joinpath("problems", f"{stem}.lc")


def load_problem(source: str) -> BaseOcp:
    """Parse a bundled problem name or a path to an ``.lc`` file."""
    if source in BUNDLED or source in ("p1", "p2"):
        stem = {"p1": "problem1", "p2": "problem2"}.get(source, source)
        text = bundled_path(stem).read_text(encoding="utf-8")
    else:
        text = Path(source).read_text(encoding="utf-8")
    return parse_problem(text)


def format_problem(base: BaseOcp) -> str:
    """Export a trajectory problem to ``.lc`` text.

    Quadrotor problems keep their model line; any other layout is written
    with ``custom`` dynamics and every equality as an explicit constraint.
    """
    from . import quadrotor as qd

    lay = base.layout
    if lay is None:
        raise ValueError("only trajectory problems (with a layout) can be exported")
    lines = [f"horizon {lay.horizon}"]
    eqs = list(base.eqs)
    if isinstance(lay.model, qd.QuadParams):
        prm = lay.model
        opts = ", ".join(f"{k}={getattr(prm, k)!r}" for k in _QUAD_KEYS)
        lines.append(f"dynamics quadrotor({opts})")
        lines.append("initial " + " ".join(repr(v) for v in prm.x0))
        n_dyn = len(qd.dynamics_residuals(prm))
        if tuple(eqs[:n_dyn]) != tuple(qd.dynamics_residuals(prm)):
            raise ValueError("equalities do not start with the quadrotor dynamics")
        eqs = eqs[n_dyn:]
    else:
        lines.append(f"dynamics custom(states={lay.state_dim}, inputs={lay.input_dim})")
        lo, hi = base.vars.bounds_arrays()
        if lay.n_inputs:
            u_lo = set(lo[lay.n_states:lay.n_states + lay.n_inputs].tolist())
            u_hi = set(hi[lay.n_states:lay.n_states + lay.n_inputs].tolist())
            if len(u_lo) != 1 or len(u_hi) != 1:
                raise ValueError("custom export needs uniform input bounds")
            a, b = u_lo.pop(), u_hi.pop()
            if math.isfinite(a) or math.isfinite(b):
                lines.append(f"inputs {a!r} {b!r}")
    lines.append(f"cost {format_expr(base.cost, lay)}")
    for g in base.ineqs:
        lines.append(f"constraint {format_expr(g, lay)} <= 0")
    for h in eqs:
        lines.append(f"constraint {format_expr(h, lay)} = 0")
    lines.append(f"logic {format_formula(base.logic, lay)}" if base.logic != TRUE else "logic")
    return "\n".join(lines) + "\n"
