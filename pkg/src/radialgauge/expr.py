"""Parsing and evaluation of scalar coefficient expressions.

Connection coefficients are supplied as plain-text formulas in the chart
coordinates ``x1 ... xn``, e.g. ``"x1*x2 + sin(x1)"``.  ``parse`` turns a
formula into an immutable syntax tree, ``evaluate`` computes its value at a
point.  Trees are frozen dataclasses: hashable, picklable, and safe to
evaluate concurrently.

Syntax: ``+ - * / ^`` with the usual precedence (``^`` binds tightest and is
right-associative, so ``-x1^2`` means ``-(x1^2)``), parentheses, decimal or
scientific number literals, and the functions sin, cos, tan, exp, log, sqrt,
abs, atan.  Anything that leaves the real domain (``log(0)``, ``1/0``,
``sqrt(-1)``) raises instead of producing NaN.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass


class ExprError(ValueError):
    """Base class for expression errors."""


class ParseError(ExprError):
    """Malformed source text; ``position`` is the 0-based offset."""

    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class EvalDomainError(ExprError):
    """Evaluation left the real domain (division by zero, log of a
    non-positive number, sqrt of a negative, overflow, ...)."""


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based, matching the coordinate names x1..xn


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple["Node", ...]


Node = Num | Var | Neg | BinOp | Call

FUNCTIONS = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
    "abs": math.fabs,
    "atan": math.atan,
}

_ARITY = dict.fromkeys(FUNCTIONS, 1)

_NUM_RE = re.compile(r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")
_VAR_RE = re.compile(r"x(\d+)\Z")


def _tokenize(source):
    tokens = []
    i, n = 0, len(source)
    while i < n:
        c = source[i]
        if c.isspace():
            i += 1
            continue
        if c in "+-*/^(),":
            tokens.append((c, c, i))
            i += 1
            continue
        m = _NUM_RE.match(source, i)
        if m:
            tokens.append(("num", float(m.group()), i))
            i = m.end()
            continue
        m = _IDENT_RE.match(source, i)
        if m:
            tokens.append(("ident", m.group(), i))
            i = m.end()
            continue
        raise ParseError(f"unexpected character {c!r}", i)
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, tokens, n):
        self.tokens = tokens
        self.pos = 0
        self.n = n

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind, what):
        tok = self.advance()
        if tok[0] != kind:
            found = repr(tok[1]) if tok[0] != "end" else "end of input"
            raise ParseError(f"expected {what}, found {found}", tok[2])
        return tok

    # expr := term (('+'|'-') term)*
    def expr(self):
        node = self.term()
        while self.peek()[0] in ("+", "-"):
            op = self.advance()[0]
            node = BinOp(op, node, self.term())
        return node

    # term := factor (('*'|'/') factor)*
    def term(self):
        node = self.factor()
        while self.peek()[0] in ("*", "/"):
            op = self.advance()[0]
            node = BinOp(op, node, self.factor())
        return node

    # factor := '-' factor | base ('^' factor)?
    # Power binds tighter than unary minus: -x1^2 parses as -(x1^2).
    def factor(self):
        if self.peek()[0] == "-":
            self.advance()
            return Neg(self.factor())
        node = self.base()
        if self.peek()[0] == "^":
            self.advance()
            return BinOp("^", node, self.factor())
        return node

    # base := number | variable | function '(' args ')' | '(' expr ')'
    def base(self):
        kind, value, pos = self.advance()
        if kind == "num":
            return Num(value)
        if kind == "(":
            node = self.expr()
            self.expect(")", "')'")
            return node
        if kind == "ident":
            if self.peek()[0] == "(":
                return self.call(value, pos)
            return self.variable(value, pos)
        found = repr(value) if kind != "end" else "end of input"
        raise ParseError(f"expected a value, found {found}", pos)

    def call(self, name, pos):
        self.advance()  # '('
        args = [self.expr()]
        while self.peek()[0] == ",":
            self.advance()
            args.append(self.expr())
        self.expect(")", "')'")
        if name not in FUNCTIONS:
            raise ParseError(f"unknown function {name!r}", pos)
        if len(args) != _ARITY[name]:
            raise ParseError(
                f"{name} takes {_ARITY[name]} argument, got {len(args)}", pos
            )
        return Call(name, tuple(args))

    def variable(self, name, pos):
        m = _VAR_RE.match(name)
        if m is None:
            if name in FUNCTIONS:
                raise ParseError(f"function {name!r} must be called", pos)
            raise ParseError(f"unknown identifier {name!r}", pos)
        index = int(m.group(1))
        if index < 1:
            raise ParseError("variable index must be at least 1", pos)
        if index > self.n:
            raise ParseError(
                f"variable x{index} exceeds declared dimension n={self.n}", pos
            )
        return Var(index)


def parse(source, n):
    """Parse ``source`` into a syntax tree over the variables x1..xn.

    Raises ParseError (with a 0-based position) on malformed input,
    unknown identifiers, or variable indices above ``n``.
    """
    if n < 1:
        raise ValueError(f"dimension n must be at least 1, got {n}")
    parser = _Parser(_tokenize(source), n)
    node = parser.expr()
    kind, value, pos = parser.peek()
    if kind != "end":
        raise ParseError(f"unexpected trailing input {value!r}", pos)
    return node


def evaluate(node, point):
    """Evaluate a tree at ``point`` (a sequence of at least n reals).

    Pure: identical inputs give bit-identical results.  Raises
    EvalDomainError instead of returning NaN or infinity.
    """
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return float(point[node.index - 1])
    if isinstance(node, Neg):
        return -evaluate(node.operand, point)
    if isinstance(node, BinOp):
        a = evaluate(node.left, point)
        b = evaluate(node.right, point)
        op = node.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            if b == 0.0:
                raise EvalDomainError("division by zero")
            return a / b
        try:
            # math.pow rejects negative-base fractional powers and 0^negative
            # (float.__pow__ would return a complex number for the former)
            return math.pow(a, b)
        except (ValueError, ZeroDivisionError, OverflowError) as exc:
            raise EvalDomainError(f"invalid power {a!r}^{b!r}: {exc}") from None
    arg = evaluate(node.args[0], point)
    name = node.func
    if name == "log" and arg <= 0.0:
        raise EvalDomainError(f"log of non-positive value {arg!r}")
    if name == "sqrt" and arg < 0.0:
        raise EvalDomainError(f"sqrt of negative value {arg!r}")
    try:
        return FUNCTIONS[name](arg)
    except (ValueError, OverflowError) as exc:
        raise EvalDomainError(f"{name}({arg!r}): {exc}") from None


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_NEG_PREC = 3
_ATOM_PREC = 5


def _prec(node):
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return _NEG_PREC
    return _ATOM_PREC


def to_source(node):
    """Render a tree back to source text that reparses to the same tree."""
    if isinstance(node, Num):
        text = repr(node.value)
        return text if node.value >= 0 else f"({text})"
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Neg):
        inner = to_source(node.operand)
        if _prec(node.operand) < _NEG_PREC:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, Call):
        return f"{node.func}({', '.join(to_source(a) for a in node.args)})"
    p = _PREC[node.op]
    left, right = to_source(node.left), to_source(node.right)
    if node.op == "^":
        # left slot is a base (atoms only); right slot is a factor
        if _prec(node.left) < _ATOM_PREC:
            left = f"({left})"
        if _prec(node.right) < _NEG_PREC:
            right = f"({right})"
    else:
        if _prec(node.left) < p:
            left = f"({left})"
        # left-associative: an equal-precedence right child needs parens
        if _prec(node.right) <= p:
            right = f"({right})"
    return f"{left} {node.op} {right}"


_OP_NAME = {"+": "Add", "-": "Sub", "*": "Mul", "/": "Div", "^": "Pow"}


def format_ast(node):
    """Compact functional dump of a tree, for the CLI ``parse`` command."""
    if isinstance(node, Num):
        return f"Num({node.value!r})"
    if isinstance(node, Var):
        return f"Var(x{node.index})"
    if isinstance(node, Neg):
        return f"Neg({format_ast(node.operand)})"
    if isinstance(node, Call):
        args = ", ".join(format_ast(a) for a in node.args)
        return f"Call({node.func}, {args})"
    return f"{_OP_NAME[node.op]}({format_ast(node.left)}, {format_ast(node.right)})"
