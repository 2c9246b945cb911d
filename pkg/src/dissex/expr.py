"""A tiny expression language over x for potentials and channel vectors.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('+' | '-') unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | 'x' | FUNC '(' args ')' | '(' expr ')'

with FUNC one of sin, cos, exp, abs (one argument) and max (two).
Expressions compile to vectorized numpy callables.
"""
from __future__ import annotations

import re

import numpy as np

FUNCS = {"sin": (np.sin, 1), "cos": (np.cos, 1), "exp": (np.exp, 1),
         "abs": (np.abs, 1), "max": (np.maximum, 2)}

_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)|([A-Za-z_]\w*)|(\S))")


class ExpressionError(ValueError):
    def __init__(self, message, position):
        super().__init__(f"{message} at position {position}")
        self.position = position


def tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            break
        start = m.start(m.lastindex) if m.lastindex else m.end()
        num, name, op = m.groups()
        if num is not None:
            tokens.append(("num", float(num), start))
        elif name is not None:
            tokens.append(("name", name, start))
        elif op is not None:
            if op not in "+-*/^(),":
                raise ExpressionError(f"unexpected character {op!r}", start)
            tokens.append(("op", op, start))
        pos = m.end()
    tokens.append(("end", None, len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.tokens = tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, op):
        kind, val, pos = self.take()
        if kind != "op" or val != op:
            raise ExpressionError(f"expected {op!r}", pos)

    def parse(self):
        node = self.expr()
        kind, _, pos = self.peek()
        if kind != "end":
            raise ExpressionError("unexpected trailing input", pos)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            rhs = self.term()
            node = (lambda a, b: lambda x: a(x) + b(x))(node, rhs) if op == "+" else \
                (lambda a, b: lambda x: a(x) - b(x))(node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            rhs = self.unary()
            node = (lambda a, b: lambda x: a(x) * b(x))(node, rhs) if op == "*" else \
                (lambda a, b: lambda x: a(x) / b(x))(node, rhs)
        return node

    def unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val in "+-":
            self.take()
            inner = self.unary()
            return inner if val == "+" else (lambda a: lambda x: -a(x))(inner)
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            exp = self.unary()
            return (lambda a, b: lambda x: a(x) ** b(x))(base, exp)
        return base

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            return lambda x, v=val: np.full(np.shape(x), v)
        if kind == "name":
            if val == "x":
                return lambda x: np.asarray(x, dtype=float)
            if val in FUNCS:
                fn, arity = FUNCS[val]
                self.expect("(")
                args = [self.expr()]
                for _ in range(arity - 1):
                    self.expect(",")
                    args.append(self.expr())
                self.expect(")")
                return lambda x: fn(*(a(x) for a in args))
            raise ExpressionError(f"unknown identifier {val!r}", pos)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise ExpressionError("expected a number, x, a function or '('", pos)


def compile_expression(text):
    """Compile an expression string into a vectorized function of x."""
    if not isinstance(text, str) or not text.strip():
        raise ExpressionError("empty expression", 0)
    return _Parser(text).parse()
