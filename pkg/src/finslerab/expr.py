"""A small arithmetic expression language for scalar fields of (x1, x2).

Grammar (EBNF; whitespace is ignored)::

    expr    = term { ("+" | "-") term } ;
    term    = unary { ("*" | "/") unary } ;
    unary   = ("-" | "+") unary | power ;
    power   = atom [ "^" unary ] ;          (* right associative *)
    atom    = number | "x1" | "x2" | "pi" | "e"
            | func "(" expr ")" | "(" expr ")" ;
    func    = "sin" | "cos" | "exp" | "log" | "sqrt" | "atan" ;
    number  = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ]
            | "." digits [ exponent ] ;

Parsed expressions evaluate in jet arithmetic, so every derivative of a field
comes out exact.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import jet as J
from .errors import DomainError, ExpressionSyntaxError, UnknownIdentifier
from .jet import Jet, JetSpace, seed_point

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "atan")
VARIABLES = ("x1", "x2")
CONSTANTS = {"pi": math.pi, "e": math.e}


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # "neg" or a name from FUNCTIONS
    arg: "Expression"


@dataclass(frozen=True)
class Binary:
    op: str  # one of + - * / ^
    left: "Expression"
    right: "Expression"


Expression = Union[Const, Var, Unary, Binary]

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ExpressionSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, pos = self.take()
        if text != value or kind != "op":
            found = "end of input" if kind == "end" else repr(text)
            raise ExpressionSyntaxError(f"expected {value!r}, found {found}", pos)

    def parse(self) -> Expression:
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ExpressionSyntaxError(f"expected operator or end of input, found {text!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Binary(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Binary(op, node, self.unary())
        return node

    def unary(self):
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return Unary("neg", self.unary())
        if kind == "op" and text == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return Binary("^", base, self.unary())
        return base

    def atom(self):
        kind, text, pos = self.take()
        if kind == "num":
            value = float(text)
            if not math.isfinite(value):
                raise ExpressionSyntaxError(f"numeric literal {text!r} overflows", pos)
            return Const(value)
        if kind == "name":
            if text in VARIABLES:
                return Var(text)
            if text in CONSTANTS:
                return Const(CONSTANTS[text])
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Unary(text, arg)
            raise UnknownIdentifier(text, pos)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(text)
        raise ExpressionSyntaxError(f"expected number, identifier or '(', found {found}", pos)


def parse(text) -> Expression:
    """Parse ``text`` into an AST; raises ExpressionSyntaxError or UnknownIdentifier."""
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ExpressionSyntaxError("input is not valid UTF-8", exc.start) from None
    if not isinstance(text, str):
        raise ExpressionSyntaxError(f"expected text, got {type(text).__name__}")
    if not text.strip():
        raise ExpressionSyntaxError("empty expression", 0)
    try:
        return _Parser(text).parse()
    except RecursionError:
        raise ExpressionSyntaxError("expression nested too deeply") from None


def to_text(node: Expression) -> str:
    """Fully parenthesized text that parses back to an equal AST."""
    if isinstance(node, Const):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Unary):
        if node.op == "neg":
            return f"(-{to_text(node.arg)})"
        return f"{node.op}({to_text(node.arg)})"
    return f"({to_text(node.left)} {node.op} {to_text(node.right)})"


def _is_integer_const(node) -> bool:
    return isinstance(node, Const) and float(node.value).is_integer() and abs(node.value) < 2**31


def evaluate(node: Expression, x1, x2):
    """Evaluate ``node`` with ``x1``/``x2`` bound to jets (or anything jet-like)."""
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return x1 if node.name == "x1" else x2
    try:
        if isinstance(node, Unary):
            arg = evaluate(node.arg, x1, x2)
            if node.op == "neg":
                return -arg
            if not isinstance(arg, Jet):
                arg = Jet.constant(_space_of(x1, x2), arg)
            return J.FUNCTIONS[node.op](arg)
        left = evaluate(node.left, x1, x2)
        if node.op == "^":
            if _is_integer_const(node.right):
                n = int(node.right.value)
                if not isinstance(left, Jet):
                    if left == 0 and n < 0:
                        raise DomainError("zero raised to a negative power")
                    return float(left) ** n
                return left**n
            right = evaluate(node.right, x1, x2)
            if not isinstance(left, Jet):
                left = Jet.constant(_space_of(x1, x2), left)
            if isinstance(right, Jet):
                return J.exp(right * J.log(left))
            return J.pow_real(left, float(right))
        right = evaluate(node.right, x1, x2)
        if node.op == "+":
            return left + right
        if node.op == "-":
            return left - right
        if node.op == "*":
            return left * right
        if not isinstance(right, Jet) and np.any(np.asarray(right) == 0):
            raise DomainError("division by zero")
        if not isinstance(left, Jet) and not isinstance(right, Jet):
            return left / right
        if not isinstance(left, Jet):
            return left * J.reciprocal(right)
        return left / right
    except DomainError as exc:
        if getattr(exc, "subexpression", None) is not None:
            raise
        err = DomainError(f"{exc} in subexpression {to_text(node)}")
        err.subexpression = to_text(node)
        raise err from None


def _space_of(x1, x2) -> JetSpace:
    for v in (x1, x2):
        if isinstance(v, Jet):
            return v.space
    return JetSpace(0, 0)


@dataclass(frozen=True)
class ScalarField:
    """A parsed scalar function of (x1, x2)."""

    expression: Expression
    source: str = ""

    @classmethod
    def from_text(cls, text: str) -> "ScalarField":
        return cls(parse(text), text)

    def __call__(self, x1: Jet, x2: Jet) -> Jet:
        out = evaluate(self.expression, x1, x2)
        if not isinstance(out, Jet):
            space = _space_of(x1, x2)
            shape = np.broadcast_shapes(np.shape(getattr(x1, "value", x1)), np.shape(getattr(x2, "value", x2)))
            out = Jet.constant(space, np.broadcast_to(out, shape))
        elif isinstance(x1, Jet):
            shape = np.broadcast_shapes(out.shape, x1.shape, x2.shape)
            if shape != out.shape:
                out = out + np.zeros(shape)
        return out

    def value(self, x1, x2):
        """Plain numeric evaluation, vectorized over array arguments."""
        x1 = np.asarray(x1, float)
        x2 = np.asarray(x2, float)
        a, b = seed_point(JetSpace(0, 0), (x1, x2, 0.0, 0.0), active=())[:2]
        out = self(a, b)
        return out.value

    def __str__(self):
        return self.source or to_text(self.expression)


def eval_field(f: ScalarField, space: JetSpace, point) -> Jet:
    """Jet of ``f`` at ``point`` with both x-coordinates active."""
    x1, x2 = seed_point(space, (point[0], point[1], 0.0, 0.0), active=(J.X1, J.X2))[:2]
    return f(x1, x2)
