"""A small arithmetic expression language for configuration files.

Grammar (``^`` and ``**`` are both power, right-associative)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := ('-' | '+') unary | power
    power   := primary (('^' | '**') unary)?
    primary := NUMBER | NAME | NAME '(' args ')' | '(' expr ')'

Variables are ``x1 ... xm``; ``pi`` and ``e`` are constants.  Functions:
``abs sin cos exp ln sqrt`` (one argument), ``pow`` (two), ``min max``
(two or more).  Evaluation is vectorized over an (N, m) array of points and
raises :class:`EvalError` on the first domain fault instead of returning
non-finite values.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ._util import as_points


class ExprError(ValueError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message, position, expected=None, source=None):
        self.position = position
        self.expected = expected
        self.source = source
        text = f"{message} at position {position}"
        if expected:
            text += f" (expected {expected})"
        if source is not None:
            text += f"\n  {source}\n  {' ' * position}^"
        super().__init__(text)


class UnknownIdentifier(ExprSyntaxError):
    pass


class DimensionError(ExprSyntaxError):
    pass


class ArityError(ExprSyntaxError):
    pass


class EvalError(ExprError, ArithmeticError):
    """Domain fault during evaluation; ``kind`` is one of DivZero, LogDomain,
    SqrtDomain, PowDomain, Overflow and ``at`` is the offending point."""

    def __init__(self, kind, at, expr=None):
        self.kind = kind
        self.at = tuple(float(v) for v in at)
        self.expr = expr
        where = f" in {expr}" if expr is not None else ""
        super().__init__(f"{kind} at {self.at}{where}")


# -- AST ---------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str  # one of + - * / ^
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    name: str
    args: Tuple["Expr", ...]


Expr = (Num, Var, Neg, Binary, Call)

UNARY_FUNCS = ("abs", "sin", "cos", "exp", "ln", "sqrt")
VARIADIC_FUNCS = ("min", "max")
CONSTANTS = {"pi": math.pi, "e": math.e}

# -- tokenizer ---------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^(),]))"
)


def _tokenize(src):
    tokens = []
    pos = 0
    while True:
        while pos < len(src) and src[pos].isspace():
            pos += 1
        if pos >= len(src):
            break
        mt = _TOKEN.match(src, pos)
        if mt is None or mt.end() == pos:
            raise ExprSyntaxError(f"unexpected character {src[pos]!r}", pos, source=src)
        kind = mt.lastgroup
        start = mt.start(kind)
        text = mt.group(kind)
        if text == "**":
            text = "^"
        tokens.append((kind, text, start))
        pos = mt.end()
    tokens.append(("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, src, dim):
        self.src = src
        self.dim = dim
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, message, expected=None, cls=ExprSyntaxError, pos=None):
        if pos is None:
            pos = self.peek()[2]
        raise cls(message, pos, expected, self.src)

    def expect(self, text):
        kind, val, pos = self.peek()
        if val != text or kind == "end":
            found = "end of input" if kind == "end" else repr(val)
            self.fail(f"unexpected {found}", repr(text))
        self.next()

    def parse(self):
        node = self.expr()
        kind, val, _ = self.peek()
        if kind != "end":
            self.fail(f"unexpected {val!r}", "operator or end of input")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.next()[1]
            node = Binary(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.next()[1]
            node = Binary(op, node, self.unary())
        return node

    def unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.next()
            return Neg(self.unary())
        if kind == "op" and val == "+":
            self.next()
            return self.unary()
        return self.power()

    def power(self):
        base = self.primary()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.next()
            return Binary("^", base, self.unary())
        return base

    def primary(self):
        kind, val, pos = self.next()
        if kind == "num":
            value = float(val)
            if not math.isfinite(value):
                raise ExprSyntaxError(f"number {val} out of range", pos, None, self.src)
            return Num(value)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "name":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                return self.call(val, pos)
            return self.identifier(val, pos)
        found = "end of input" if kind == "end" else repr(val)
        raise ExprSyntaxError(f"unexpected {found}", pos, "number, variable, function or '('", self.src)

    def identifier(self, name, pos):
        mt = re.fullmatch(r"x([1-9]\d*)", name)
        if mt:
            index = int(mt.group(1))
            if self.dim is not None and index > self.dim:
                raise DimensionError(
                    f"variable {name} exceeds dimension {self.dim}", pos, f"x1..x{self.dim}", self.src
                )
            return Var(index)
        if name in CONSTANTS:
            return Num(CONSTANTS[name])
        if name in UNARY_FUNCS or name in VARIADIC_FUNCS or name == "pow":
            raise ExprSyntaxError(f"function {name} needs arguments", pos, "'('", self.src)
        raise UnknownIdentifier(f"unknown identifier {name!r}", pos, None, self.src)

    def call(self, name, pos):
        if name not in UNARY_FUNCS and name not in VARIADIC_FUNCS and name != "pow":
            raise UnknownIdentifier(f"unknown function {name!r}", pos, None, self.src)
        self.expect("(")
        args = [self.expr()]
        while self.peek()[1] == "," and self.peek()[0] == "op":
            self.next()
            args.append(self.expr())
        self.expect(")")
        if name in UNARY_FUNCS and len(args) != 1:
            raise ArityError(f"{name} takes 1 argument, got {len(args)}", pos, None, self.src)
        if name == "pow":
            if len(args) != 2:
                raise ArityError(f"pow takes 2 arguments, got {len(args)}", pos, None, self.src)
            return Binary("^", args[0], args[1])
        if name in VARIADIC_FUNCS and len(args) < 2:
            raise ArityError(f"{name} takes at least 2 arguments, got {len(args)}", pos, None, self.src)
        return Call(name, tuple(args))


def parse(src: str, dim: int | None = None):
    """Parse ``src`` into an AST; variables must satisfy ``index <= dim``."""
    return _Parser(src, dim).parse()


def max_var(node):
    """Largest variable index used in ``node`` (0 if none)."""
    if isinstance(node, Var):
        return node.index
    if isinstance(node, Neg):
        return max_var(node.operand)
    if isinstance(node, Binary):
        return max(max_var(node.left), max_var(node.right))
    if isinstance(node, Call):
        return max(max_var(a) for a in node.args)
    return 0


# -- printer -----------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_NEG_PREC = 3
_ATOM = 5


def _prec(node):
    if isinstance(node, Binary):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return _NEG_PREC
    return _ATOM


def _wrap(node, parens):
    text = to_source(node)
    return f"({text})" if parens else text


def to_source(node) -> str:
    """Canonical text with the minimal parentheses needed to re-parse to the same tree."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Neg):
        return "-" + _wrap(node.operand, _prec(node.operand) < _NEG_PREC)
    if isinstance(node, Call):
        return f"{node.name}({', '.join(to_source(a) for a in node.args)})"
    p = _PREC[node.op]
    if node.op == "^":
        left = _wrap(node.left, _prec(node.left) < _ATOM)
        right = _wrap(node.right, _prec(node.right) < _NEG_PREC)
        return f"{left}^{right}"
    left = _wrap(node.left, _prec(node.left) < p)
    right = _wrap(node.right, _prec(node.right) <= p)
    return f"{left} {node.op} {right}"


# -- evaluation --------------------------------------------------------------

def _fault(kind, mask, pts, src):
    row = int(np.flatnonzero(mask)[0])
    raise EvalError(kind, pts[row], src)


def _eval(node, pts, src):
    n = len(pts)
    if isinstance(node, Num):
        return np.full(n, node.value)
    if isinstance(node, Var):
        return pts[:, node.index - 1].copy()
    if isinstance(node, Neg):
        return -_eval(node.operand, pts, src)
    if isinstance(node, Call):
        args = [_eval(a, pts, src) for a in node.args]
        a = args[0]
        name = node.name
        if name == "abs":
            out = np.abs(a)
        elif name == "sin":
            out = np.sin(a)
        elif name == "cos":
            out = np.cos(a)
        elif name == "exp":
            out = np.exp(a)
        elif name == "ln":
            bad = ~(a > 0)
            if bad.any():
                _fault("LogDomain", bad, pts, src)
            out = np.log(a)
        elif name == "sqrt":
            bad = ~(a >= 0)
            if bad.any():
                _fault("SqrtDomain", bad, pts, src)
            out = np.sqrt(a)
        elif name == "min":
            out = np.minimum.reduce(args)
        else:
            out = np.maximum.reduce(args)
    else:
        a = _eval(node.left, pts, src)
        b = _eval(node.right, pts, src)
        op = node.op
        if op == "+":
            out = a + b
        elif op == "-":
            out = a - b
        elif op == "*":
            out = a * b
        elif op == "/":
            bad = b == 0
            if bad.any():
                _fault("DivZero", bad, pts, src)
            out = a / b
        else:
            bad = ((a < 0) & (b != np.round(b))) | ((a == 0) & (b < 0))
            if bad.any():
                _fault("PowDomain", bad, pts, src)
            out = np.power(a, b)
    nonfinite = ~np.isfinite(out)
    if nonfinite.any():
        _fault("Overflow", nonfinite, pts, src)
    return out


def evaluate(node, points, dim=None):
    """Evaluate ``node`` at one point (returns float) or at an (N, m) array (returns (N,))."""
    arr = np.asarray(points, dtype=float)
    single = arr.ndim <= 1
    pts = as_points(np.atleast_1d(arr), dim)
    need = max_var(node)
    if need > pts.shape[1]:
        raise DimensionError(f"expression uses x{need} but points have dimension {pts.shape[1]}", 0)
    with np.errstate(all="ignore"):
        out = _eval(node, pts, to_source(node))
    return float(out[0]) if single else out


@dataclass(frozen=True)
class CompiledExpr:
    """Vectorized scalar function handle built from source text."""

    source: str
    dim: int
    tree: object

    def __call__(self, points):
        return evaluate(self.tree, as_points(points, self.dim), self.dim)


@dataclass(frozen=True)
class VectorExpr:
    """Map R^m -> R^n given by ``n`` component expressions."""

    components: Tuple[CompiledExpr, ...]
    dim: int

    @property
    def sources(self):
        return [c.source for c in self.components]

    def __call__(self, points):
        pts = as_points(points, self.dim)
        return np.stack([c(pts) for c in self.components], axis=1)

    def component(self, i):
        return self.components[i]


def compile_expr(src: str, dim: int) -> CompiledExpr:
    return CompiledExpr(src, dim, parse(src, dim))


def compile_map(sources, dim: int) -> VectorExpr:
    return VectorExpr(tuple(compile_expr(s, dim) for s in sources), dim)
