"""Arithmetic expressions in one variable ``x``.

Grammar (highest binding last)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := ("-" | "+") unary | power
    power  := atom (("^" | "**") unary)?
    atom   := NUMBER | "x" | CONST | FUNC "(" expr ")" | "(" expr ")"

so ``-x^2`` is ``-(x^2)``, ``2*-x`` is ``2*(-x)`` and ``2^3^2`` is ``2^(3^2)``.
Evaluation is vectorized over numpy arrays.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Expression",
    "ExpressionSyntaxError",
    "ExpressionDomainError",
    "parse_expression",
    "FUNCTIONS",
]


class ExpressionSyntaxError(ValueError):
    def __init__(self, message: str, position: int, source: str):
        super().__init__(f"{message} at position {position}: {source!r}")
        self.position = position
        self.source = source


class ExpressionDomainError(ArithmeticError):
    pass


def _sech(t):
    a = np.exp(-np.abs(t))
    return 2.0 * a / (1.0 + a * a)


FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "tanh": np.tanh,
    "cosh": np.cosh,
    "sech": _sech,
    "abs": np.abs,
    "sqrt": np.sqrt,
}

CONSTANTS = {"pi": math.pi, "e": math.e}

_BINARY = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "/": np.divide,
    "^": np.power,
}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    pass


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class Bin:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    name: str
    arg: object


def _eval(node, x):
    if isinstance(node, Num):
        return np.full_like(x, node.value)
    if isinstance(node, Var):
        return x
    if isinstance(node, Neg):
        return -_eval(node.arg, x)
    if isinstance(node, Bin):
        return _BINARY[node.op](_eval(node.left, x), _eval(node.right, x))
    return FUNCTIONS[node.name](_eval(node.arg, x))


def _show(node) -> str:
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return "x"
    if isinstance(node, Neg):
        return f"(-{_show(node.arg)})"
    if isinstance(node, Bin):
        return f"({_show(node.left)} {node.op} {_show(node.right)})"
    return f"{node.name}({_show(node.arg)})"


def _uses_x(node) -> bool:
    if isinstance(node, Var):
        return True
    if isinstance(node, Num):
        return False
    if isinstance(node, Bin):
        return _uses_x(node.left) or _uses_x(node.right)
    return _uses_x(node.arg)


class Expression:
    """A parsed expression; call it with a scalar or an array of ``x`` values."""

    def __init__(self, tree, source: str | None = None):
        self.tree = tree
        self.source = source

    def __call__(self, x):
        arr = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            out = _eval(self.tree, np.atleast_1d(arr).astype(float))
        if not np.all(np.isfinite(out)):
            bad = np.atleast_1d(arr)[~np.isfinite(out)][0] if arr.ndim else float(arr)
            raise ExpressionDomainError(f"{self} is not finite at x={bad!r}")
        return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)

    @property
    def is_constant(self) -> bool:
        return not _uses_x(self.tree)

    def __str__(self):
        return _show(self.tree)

    def __repr__(self):
        return f"Expression({str(self)!r})"

    def __eq__(self, other):
        return isinstance(other, Expression) and self.tree == other.tree

    def __hash__(self):
        return hash(self.tree)


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^()]))"
)


def _tokenize(src: str):
    pos = 0
    tokens = []
    while pos < len(src):
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            raise ExpressionSyntaxError("unexpected character", pos, src)
        kind = m.lastgroup
        text = m.group(kind)
        start = m.start(kind)
        if text == "**":
            text = "^"
        tokens.append((kind, text, start))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        return ExpressionSyntaxError(message, tok[2], self.src)

    def expect(self, text):
        tok = self.take()
        if tok[1] != text:
            raise self.error(f"expected {text!r}", tok)

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            raise self.error("unexpected token")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Bin(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Bin(op, node, self.unary())
        return node

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "-":
            self.take()
            return Neg(self.unary())
        if tok[0] == "op" and tok[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return Bin("^", base, self.unary())
        return base

    def atom(self):
        tok = self.take()
        kind, text, _ = tok
        if kind == "num":
            value = float(text)
            if not math.isfinite(value):
                raise ExpressionSyntaxError("numeric literal overflows", tok[2], self.src)
            return Num(value)
        if kind == "name":
            if text == "x":
                return Var()
            if text in CONSTANTS:
                return Num(CONSTANTS[text])
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(text, arg)
            raise ExpressionSyntaxError(f"unknown identifier {text!r}", tok[2], self.src)
        if text == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "end":
            raise self.error("unexpected end of input", tok)
        raise self.error(f"unexpected token {text!r}", tok)


def parse_expression(src: str) -> Expression:
    if not isinstance(src, str) or not src.strip():
        raise ExpressionSyntaxError("empty expression", 0, str(src))
    return Expression(_Parser(src).parse(), src)
