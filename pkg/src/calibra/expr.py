"""Arithmetic expression language used for scenario geometry.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := ['-'] power
    power  := atom ['^' factor]
    atom   := number | ident | ident '(' expr ')' | '(' expr ')'

Expressions evaluate on floats, numpy arrays or :class:`~calibra.jets.Jet`
objects, so the same tree yields values, gradients and Hessians.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from calibra import jets

MAX_SOURCE_BYTES = 64 * 1024

CONSTANTS = {"pi": math.pi, "e": math.e}
DEFAULT_ALIASES = {"x": 0, "y": 1, "z": 2, "r": 0, "theta": 1}


class ExpressionError(ValueError):
    """Base class for parse failures; carries a 1-based line/column."""

    def __init__(self, message: str, line: int = 1, column: int = 1):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class ExpressionSyntaxError(ExpressionError):
    pass


class UnknownIdentifierError(ExpressionError):
    pass


# --- AST -----------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int
    name: str


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Num, Var, Const, Neg, BinOp, Call]


# --- tokenizer -----------------------------------------------------------

_TOKEN_RE = re.compile(
    r"(?P<ws>[ \t\r\n]+)"
    r"|(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
)


@dataclass
class _Token:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExpressionSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "ws":
            chunk = m.group()
            for i, ch in enumerate(chunk):
                if ch == "\n":
                    line += 1
                    line_start = pos + i + 1
        else:
            tokens.append(_Token(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    tokens.append(_Token("end", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str, names: dict[str, int]):
        self.tokens = _tokenize(text)
        self.i = 0
        self.names = names

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def take(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Token:
        tok = self.peek()
        if tok.text != text:
            found = "end of input" if tok.kind == "end" else repr(tok.text)
            raise ExpressionSyntaxError(f"expected {text!r}, found {found}", tok.line, tok.col)
        return self.take()

    def parse(self) -> Node:
        node = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ExpressionSyntaxError(f"unexpected {tok.text!r}", tok.line, tok.col)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek().text in ("+", "-"):
            op = self.take().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.peek().text in ("*", "/"):
            op = self.take().text
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Node:
        if self.peek().text == "-":
            self.take()
            return Neg(self.power())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.peek().text == "^":
            self.take()
            return BinOp("^", base, self.factor())
        return base

    def atom(self) -> Node:
        tok = self.take()
        if tok.kind == "num":
            return Num(float(tok.text))
        if tok.kind == "ident":
            if self.peek().text == "(":
                if tok.text not in jets.FUNCTIONS:
                    raise UnknownIdentifierError(f"unknown function {tok.text!r}", tok.line, tok.col)
                self.take()
                arg = self.expr()
                self.expect(")")
                return Call(tok.text, arg)
            if tok.text in self.names:
                return Var(self.names[tok.text], tok.text)
            if tok.text in CONSTANTS:
                return Const(tok.text)
            raise UnknownIdentifierError(f"unknown identifier {tok.text!r}", tok.line, tok.col)
        if tok.text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if tok.kind == "end" else repr(tok.text)
        raise ExpressionSyntaxError(f"unexpected {found}", tok.line, tok.col)


def variable_names(variables: Sequence[str] | None = None, nvars: int = 7) -> dict[str, int]:
    """Map identifier -> variable index.

    ``x1..xN`` are always available.  With ``variables`` given, those names
    replace the default aliases ``x, y, z, r, theta``.
    """
    names = {f"x{i + 1}": i for i in range(max(nvars, len(variables or ())))}
    if variables is None:
        names.update(DEFAULT_ALIASES)
    else:
        for i, name in enumerate(variables):
            names[name] = i
    return names


def parse_expression(text: str, variables: Sequence[str] | None = None) -> "Expression":
    if len(text.encode("utf-8")) > MAX_SOURCE_BYTES:
        raise ExpressionSyntaxError("expression exceeds 64 KiB", 1, 1)
    names = variable_names(variables)
    return Expression(_Parser(text, names).parse())


# --- evaluation ----------------------------------------------------------


def _eval(node: Node, args):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return args[node.index]
    if isinstance(node, Const):
        return CONSTANTS[node.name]
    if isinstance(node, Neg):
        return -_eval(node.operand, args)
    if isinstance(node, Call):
        return jets.FUNCTIONS[node.func](_eval(node.arg, args))
    a = _eval(node.left, args)
    b = _eval(node.right, args)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if node.op == "/":
        return a / b
    if isinstance(b, (int, float)) and not isinstance(a, jets.Jet):
        return np.power(a, b)
    return a ** b


# --- printing ------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _fmt_num(x: float) -> str:
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _print(node: Node) -> tuple[str, int]:
    """Return (text, precedence). Atoms have precedence 5, negation 3."""
    if isinstance(node, Num):
        return _fmt_num(node.value), 5
    if isinstance(node, Var):
        return node.name, 5
    if isinstance(node, Const):
        return node.name, 5
    if isinstance(node, Call):
        return f"{node.func}({_print(node.arg)[0]})", 5
    if isinstance(node, Neg):
        text, p = _print(node.operand)
        # operand of unary minus is a power
        return "-" + (text if p >= 4 else f"({text})"), 3
    prec = _PREC[node.op]
    lt, lp = _print(node.left)
    rt, rp = _print(node.right)
    if node.op == "^":
        # base is an atom, exponent a factor
        lt = lt if lp >= 5 else f"({lt})"
        rt = rt if rp >= 3 else f"({rt})"
        return f"{lt}^{rt}", 4
    lt = lt if lp >= prec else f"({lt})"
    rt = rt if rp > prec else f"({rt})"
    return f"{lt} {node.op} {rt}", prec


# --- symbolic differentiation -------------------------------------------


def _is_num(node: Node, value: float | None = None) -> bool:
    return isinstance(node, Num) and (value is None or node.value == value)


def _add(a: Node, b: Node) -> Node:
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    if _is_num(a) and _is_num(b):
        return Num(a.value + b.value)
    return BinOp("+", a, b)


def _sub(a: Node, b: Node) -> Node:
    if _is_num(b, 0.0):
        return a
    if _is_num(a, 0.0):
        return _neg(b)
    if _is_num(a) and _is_num(b):
        return Num(a.value - b.value)
    return BinOp("-", a, b)


def _mul(a: Node, b: Node) -> Node:
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return Num(0.0)
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    if _is_num(a) and _is_num(b):
        return Num(a.value * b.value)
    return BinOp("*", a, b)


def _div(a: Node, b: Node) -> Node:
    if _is_num(a, 0.0):
        return Num(0.0)
    if _is_num(b, 1.0):
        return a
    return BinOp("/", a, b)


def _neg(a: Node) -> Node:
    if _is_num(a):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.operand
    return Neg(a)


def _pow(a: Node, b: Node) -> Node:
    if _is_num(b, 1.0):
        return a
    if _is_num(b, 0.0):
        return Num(1.0)
    return BinOp("^", a, b)


def _depends(node: Node, index: int) -> bool:
    if isinstance(node, Var):
        return node.index == index
    if isinstance(node, (Num, Const)):
        return False
    if isinstance(node, Neg):
        return _depends(node.operand, index)
    if isinstance(node, Call):
        return _depends(node.arg, index)
    return _depends(node.left, index) or _depends(node.right, index)


def _diff(node: Node, i: int) -> Node:
    if not _depends(node, i):
        return Num(0.0)
    if isinstance(node, Var):
        return Num(1.0)
    if isinstance(node, Neg):
        return _neg(_diff(node.operand, i))
    if isinstance(node, Call):
        u = node.arg
        du = _diff(u, i)
        f = node.func
        if f == "sin":
            outer = Call("cos", u)
        elif f == "cos":
            outer = _neg(Call("sin", u))
        elif f == "tan":
            outer = _add(Num(1.0), _pow(Call("tan", u), Num(2.0)))
        elif f == "exp":
            outer = node
        elif f == "log":
            return _div(du, u)
        elif f == "sqrt":
            return _div(du, _mul(Num(2.0), node))
        elif f == "sinh":
            outer = Call("cosh", u)
        elif f == "cosh":
            outer = Call("sinh", u)
        else:  # pragma: no cover - parser rejects other names
            raise ValueError(f)
        return _mul(outer, du)
    a, b = node.left, node.right
    if node.op == "+":
        return _add(_diff(a, i), _diff(b, i))
    if node.op == "-":
        return _sub(_diff(a, i), _diff(b, i))
    if node.op == "*":
        return _add(_mul(_diff(a, i), b), _mul(a, _diff(b, i)))
    if node.op == "/":
        return _div(_sub(_mul(_diff(a, i), b), _mul(a, _diff(b, i))), _pow(b, Num(2.0)))
    # power
    if not _depends(b, i):
        return _mul(_mul(b, _pow(a, _sub(b, Num(1.0)))), _diff(a, i))
    # a^b = exp(b log a)
    return _mul(node, _add(_mul(_diff(b, i), Call("log", a)), _div(_mul(b, _diff(a, i)), a)))


class Expression:
    """A parsed expression; callable on floats, arrays or jets."""

    def __init__(self, root: Node):
        self.root = root

    def __call__(self, *args):
        return _eval(self.root, args)

    def __eq__(self, other) -> bool:
        return isinstance(other, Expression) and self.root == other.root

    def __hash__(self) -> int:
        return hash(self.root)

    def __repr__(self) -> str:
        return f"Expression({self.pretty()!r})"

    def pretty(self) -> str:
        return _print(self.root)[0]

    def diff(self, index: int) -> "Expression":
        return Expression(_diff(self.root, index))

    @property
    def nvars(self) -> int:
        """One more than the largest variable index referenced."""
        def walk(node):
            if isinstance(node, Var):
                return node.index + 1
            if isinstance(node, (Num, Const)):
                return 0
            if isinstance(node, (Neg,)):
                return walk(node.operand)
            if isinstance(node, Call):
                return walk(node.arg)
            return max(walk(node.left), walk(node.right))
        return walk(self.root)
