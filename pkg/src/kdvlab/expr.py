"""A small arithmetic expression language for coefficients and initial data.

Grammar (``^`` binds tightest and associates to the right; unary minus binds
looser than ``^`` so ``-x^2`` means ``-(x^2)``)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | power
    power   := atom ("^" unary)?
    atom    := NUMBER | NAME | NAME "(" expr ")" | "(" expr ")"

Names are the variables ``x`` and ``t``, the constants ``pi`` and ``e``,
and the functions listed in :data:`FUNCTIONS`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "ExpressionSyntaxError",
    "ExpressionDomainError",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "Node",
    "parse",
    "to_source",
    "evaluate",
    "variables",
    "FUNCTIONS",
    "CONSTANTS",
]

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "tanh": np.tanh,
    "abs": np.abs,
}
CONSTANTS = {"pi": np.pi, "e": np.e}
VARIABLES = ("x", "t")


class ExpressionSyntaxError(ValueError):
    """Syntax error with the byte offset and the set of tokens that would fit."""

    def __init__(self, message: str, source: str, offset: int, expected: tuple[str, ...] = ()):
        self.source = source
        self.offset = offset
        self.expected = tuple(expected)
        detail = f"{message} at offset {offset}"
        if expected:
            detail += f" (expected one of: {', '.join(expected)})"
        super().__init__(detail)


class ExpressionDomainError(ValueError):
    """Evaluation left the domain of an operation (division by zero, log of x <= 0)."""


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
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


Node = Union[Num, Var, Neg, BinOp, Call]

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(src: str) -> list[_Tok]:
    toks = []
    pos = 0
    while True:
        while pos < len(src) and src[pos].isspace():
            pos += 1
        if pos >= len(src):
            break
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            raise ExpressionSyntaxError(f"unexpected character {src[pos]!r}", src, pos)
        start = m.start(m.lastgroup)
        toks.append(_Tok(m.lastgroup, m.group(m.lastgroup), start))
        pos = m.end()
    toks.append(_Tok("end", "", len(src)))
    return toks


_ATOM_START = ("number", "name", "(", "-")


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.toks = _tokenize(src)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def _fail(self, msg, expected):
        raise ExpressionSyntaxError(msg, self.src, self.tok.pos, expected)

    def _is_op(self, *ops):
        return self.tok.kind == "op" and self.tok.text in ops

    def parse(self) -> Node:
        if self.tok.kind == "end":
            self._fail("empty expression", _ATOM_START)
        node = self.expr()
        if self.tok.kind != "end":
            self._fail(f"unexpected token {self.tok.text!r}", ("+", "-", "*", "/", "^", "end of input"))
        return node

    def expr(self) -> Node:
        node = self.term()
        while self._is_op("+", "-"):
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self._is_op("*", "/"):
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self._is_op("-"):
            self.i += 1
            return Neg(self.unary())
        if self._is_op("+"):
            self.i += 1
            return self.unary()
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self._is_op("^"):
            self.i += 1
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Node:
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return Num(float(tok.text))
        if tok.kind == "name":
            self.i += 1
            if tok.text in FUNCTIONS:
                if not self._is_op("("):
                    self._fail(f"function {tok.text!r} needs an argument", ("(",))
                self.i += 1
                arg = self.expr()
                if not self._is_op(")"):
                    self._fail("unclosed function call", (")",))
                self.i += 1
                return Call(tok.text, arg)
            if tok.text in VARIABLES:
                return Var(tok.text)
            if tok.text in CONSTANTS:
                return Var(tok.text)
            raise ExpressionSyntaxError(
                f"unknown identifier {tok.text!r}",
                self.src,
                tok.pos,
                VARIABLES + tuple(CONSTANTS) + tuple(FUNCTIONS),
            )
        if self._is_op("("):
            self.i += 1
            node = self.expr()
            if not self._is_op(")"):
                self._fail("unbalanced parenthesis", (")",))
            self.i += 1
            return node
        self._fail(
            "unexpected end of input" if tok.kind == "end" else f"unexpected token {tok.text!r}",
            _ATOM_START,
        )


def parse(source: str) -> Node:
    """Parse ``source`` into an expression tree."""
    if not isinstance(source, str):
        raise TypeError("expression source must be a string")
    return _Parser(source).parse()


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _fmt_num(v: float) -> str:
    s = repr(float(v))
    if s in ("inf", "nan", "-inf"):
        raise ValueError(f"cannot print non-finite literal {s}")
    return s


def to_source(node: Node) -> str:
    """Print a tree with the minimum parentheses needed to reparse it identically."""
    return _print(node, 0)


def _print(node: Node, parent: int) -> str:
    if isinstance(node, Num):
        s = _fmt_num(node.value)
        # negative literals only arise from constructed trees; keep them atomic
        return f"({s})" if node.value < 0 else s
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({_print(node.arg, 0)})"
    if isinstance(node, Neg):
        s = "-" + _print(node.operand, _PREC["neg"])
        return f"({s})" if parent > _PREC["neg"] else s
    if isinstance(node, BinOp):
        p = _PREC[node.op]
        if node.op == "^":
            left = _print(node.left, p + 1)
            right = _print(node.right, p)
        else:
            left = _print(node.left, p)
            right = _print(node.right, p + 1)
        s = f"{left} {node.op} {right}" if p < 4 else f"{left}^{right}"
        return f"({s})" if p < parent else s
    raise TypeError(f"not an expression node: {node!r}")


def variables(node: Node) -> frozenset[str]:
    """Free variables (``x`` and/or ``t``) referenced by the tree."""
    if isinstance(node, Var):
        return frozenset({node.name}) if node.name in VARIABLES else frozenset()
    if isinstance(node, Num):
        return frozenset()
    if isinstance(node, (Neg,)):
        return variables(node.operand)
    if isinstance(node, Call):
        return variables(node.arg)
    return variables(node.left) | variables(node.right)


def evaluate(node: Node, x=0.0, t=0.0):
    """Evaluate the tree with numpy broadcasting over ``x`` and ``t``."""
    with np.errstate(all="ignore"):
        return _eval(node, x, t)


def _eval(node, x, t):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        if node.name == "x":
            return x
        if node.name == "t":
            return t
        return CONSTANTS[node.name]
    if isinstance(node, Neg):
        return -_eval(node.operand, x, t)
    if isinstance(node, Call):
        arg = _eval(node.arg, x, t)
        if node.func == "log" and np.any(np.asarray(arg) <= 0):
            raise ExpressionDomainError("log of a non-positive value")
        if node.func == "sqrt" and np.any(np.asarray(arg) < 0):
            raise ExpressionDomainError("sqrt of a negative value")
        return FUNCTIONS[node.func](arg)
    left = _eval(node.left, x, t)
    right = _eval(node.right, x, t)
    if node.op == "+":
        return left + right
    if node.op == "-":
        return left - right
    if node.op == "*":
        return left * right
    if node.op == "/":
        if np.any(np.asarray(right) == 0):
            raise ExpressionDomainError("division by zero")
        return left / right
    out = np.power(np.asarray(left, dtype=float), np.asarray(right, dtype=float))
    if not np.all(np.isfinite(out)):
        raise ExpressionDomainError("power of a negative base or overflow")
    return out if np.ndim(out) else float(out)
