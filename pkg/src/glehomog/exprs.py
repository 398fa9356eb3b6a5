"""A small expression grammar for coefficient fields.

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := number | ident | '(' expr ')' | func '(' expr ')' | '-' factor
    func   in {sin, cos, exp, tanh, sqrt}
    ident  in {t, x1..x9} plus named parameters

Unary minus sits at factor level, so -a*b parses as (-a)*b; since the only
binary operators are + - * /, this evaluates identically to -(a*b), which is
the documented reading.  Evaluation is numpy-vectorized over batched x.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

FUNCTIONS = {
    "sin": np.sin, "cos": np.cos, "exp": np.exp, "tanh": np.tanh,
    "sqrt": np.sqrt,
}

_TOKEN_RE = re.compile(r"""
    (?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/()])
  | (?P<ws>\s+)
""", re.VERBOSE)


class ExprError(ValueError):
    def __init__(self, message, pos, text=""):
        self.pos = pos
        line = text.count("\n", 0, pos) + 1
        col = pos - (text.rfind("\n", 0, pos) + 1) + 1
        super().__init__(f"{message} at line {line}, column {col}")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Call:
    fn: str
    arg: object


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class Bin:
    op: str
    left: object
    right: object


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExprError(f"unexpected character {text[pos]!r}", pos, text)
        if m.lastgroup != "ws":
            tokens.append((m.lastgroup, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, val, pos = self.peek()
        if kind != "op" or val != op:
            raise ExprError(f"expected {op!r}", pos, self.text)
        return self.take()

    def parse(self):
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExprError(f"unexpected trailing {val!r}", pos, self.text)
        return node

    def expr(self):
        node = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.take()
                node = Bin(val, node, self.term())
            else:
                return node

    def term(self):
        node = self.factor()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.take()
                node = Bin(val, node, self.factor())
            else:
                return node

    def factor(self):
        kind, val, pos = self.peek()
        if kind == "num":
            self.take()
            return Num(float(val))
        if kind == "ident":
            self.take()
            nk, nv, _ = self.peek()
            if nk == "op" and nv == "(":
                if val not in FUNCTIONS:
                    raise ExprError(f"unknown function {val!r}", pos, self.text)
                self.take()
                arg = self.expr()
                self.expect_op(")")
                return Call(val, arg)
            return Var(val)
        if kind == "op" and val == "(":
            self.take()
            node = self.expr()
            self.expect_op(")")
            return node
        if kind == "op" and val == "-":
            self.take()
            return Neg(self.factor())
        raise ExprError(f"unexpected {val or 'end of input'!r}", pos, self.text)


def parse_expr(text):
    return _Parser(text).parse()


def free_variables(node):
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Call):
        return free_variables(node.arg)
    if isinstance(node, Neg):
        return free_variables(node.arg)
    if isinstance(node, Bin):
        return free_variables(node.left) | free_variables(node.right)
    return set()


def eval_expr(node, t=0.0, x=None, params=None):
    """Evaluate an expression tree; x may be a point (d,) or batch (B, d)."""
    params = params or {}

    def ev(n):
        if isinstance(n, Num):
            return n.value
        if isinstance(n, Var):
            if n.name == "t":
                return t
            m = re.fullmatch(r"x([1-9])", n.name)
            if m:
                if x is None:
                    raise ValueError(f"no state supplied for {n.name}")
                idx = int(m.group(1)) - 1
                xa = np.asarray(x, dtype=float)
                if idx >= xa.shape[-1]:
                    raise ValueError(f"{n.name} out of range for dim {xa.shape[-1]}")
                return xa[..., idx]
            if n.name in params:
                return params[n.name]
            raise ValueError(f"unknown identifier {n.name!r}")
        if isinstance(n, Call):
            arg = ev(n.arg)
            if n.fn == "sqrt" and np.any(np.asarray(arg) < 0):
                raise ValueError("sqrt of a negative value")
            return FUNCTIONS[n.fn](arg)
        if isinstance(n, Neg):
            return -ev(n.arg)
        if isinstance(n, Bin):
            a, b = ev(n.left), ev(n.right)
            if n.op == "+":
                return a + b
            if n.op == "-":
                return a - b
            if n.op == "*":
                return a * b
            return a / b
        raise TypeError(f"not an expression node: {n!r}")

    return ev(node)


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def format_expr(node):
    """Pretty-print with minimal parentheses; reparsing the output yields an
    identical tree."""

    def fmt(n, prec):
        if isinstance(n, Num):
            s = repr(n.value)
            return s[:-2] if s.endswith(".0") else s
        if isinstance(n, Var):
            return n.name
        if isinstance(n, Call):
            return f"{n.fn}({fmt(n.arg, 0)})"
        if isinstance(n, Neg):
            inner = fmt(n.arg, 3)
            s = f"-{inner}"
            return f"({s})" if prec >= 3 else s
        if isinstance(n, Bin):
            p = _PREC[n.op]
            left = fmt(n.left, p - 1)
            # right operand needs parens at equal precedence for - and /
            right = fmt(n.right, p if n.op in "-/" else p - 1)
            s = f"{left} {n.op} {right}"
            return f"({s})" if prec >= p else s
        raise TypeError(f"not an expression node: {n!r}")

    return fmt(node, 0)
