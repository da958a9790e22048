"""Tiny expression grammar for user-defined metric factors.

Custom targets are specified in config files as a pair of expression
strings for g and g' in the variable `rho`.  The grammar is deliberately
small so that a scenario file documents itself:

    expr   :=  term  (("+" | "-") term)*
    term   :=  unary (("*" | "/") unary)*
    unary  :=  ("+" | "-") unary | power
    power  :=  atom ("^" unary)?
    atom   :=  NUMBER | "rho" | "pi" | "e"
             | ("sin" | "cos") "(" expr ")"
             | "pow" "(" expr "," expr ")"
             | "(" expr ")"

"^" binds tighter than unary minus, so "-rho^2" is -(rho^2).  Parsed
expressions evaluate on floats and numpy arrays alike.
"""

import math

import numpy as np

_FUNCTIONS = {"sin": np.sin, "cos": np.cos}
_CONSTANTS = {"pi": math.pi, "e": math.e}


class ExpressionError(ValueError):
    """Raised when an expression string does not match the grammar."""


def _tokenize(text):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif c in "+-*/^(),":
            tokens.append((c, c))
            i += 1
        elif c.isdigit() or c == ".":
            j = i
            while j < n and (text[j].isdigit() or text[j] in ".eE" or
                             (text[j] in "+-" and text[j - 1] in "eE")):
                j += 1
            try:
                value = float(text[i:j])
            except ValueError:
                raise ExpressionError(f"bad number {text[i:j]!r} at column {i}")
            tokens.append(("num", value))
            i = j
        elif c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("name", text[i:j]))
            i = j
        else:
            raise ExpressionError(f"unexpected character {c!r} at column {i}")
    tokens.append(("end", None))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos][0]

    def next(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind):
        tok = self.next()
        if tok[0] != kind:
            raise ExpressionError(
                f"expected {kind!r}, got {tok[0]!r} in {self.text!r}")
        return tok


def _binop(op, a, b):
    if op == "+":
        return lambda r: a(r) + b(r)
    if op == "-":
        return lambda r: a(r) - b(r)
    if op == "*":
        return lambda r: a(r) * b(r)
    if op == "/":
        return lambda r: a(r) / b(r)
    if op == "^":
        return lambda r: a(r) ** b(r)
    raise ExpressionError(f"unknown operator {op!r}")


def _parse_expr(p):
    node = _parse_term(p)
    while p.peek() in "+-":
        op = p.next()[0]
        node = _binop(op, node, _parse_term(p))
    return node


def _parse_term(p):
    node = _parse_unary(p)
    while p.peek() in "*/":
        op = p.next()[0]
        node = _binop(op, node, _parse_unary(p))
    return node


def _parse_unary(p):
    if p.peek() in "+-":
        op = p.next()[0]
        inner = _parse_unary(p)
        if op == "-":
            return lambda r: -inner(r)
        return inner
    return _parse_power(p)


def _parse_power(p):
    base = _parse_atom(p)
    if p.peek() == "^":
        p.next()
        exponent = _parse_unary(p)
        return _binop("^", base, exponent)
    return base


def _parse_atom(p):
    kind, value = p.next()
    if kind == "num":
        return lambda r, v=value: np.full_like(np.asarray(r, dtype=float), v) \
            if np.ndim(r) else v
    if kind == "name":
        if value == "rho":
            return lambda r: np.asarray(r, dtype=float) if np.ndim(r) else float(r)
        if value in _CONSTANTS:
            c = _CONSTANTS[value]
            return lambda r, v=c: np.full_like(np.asarray(r, dtype=float), v) \
                if np.ndim(r) else v
        if value in _FUNCTIONS:
            fn = _FUNCTIONS[value]
            p.expect("(")
            arg = _parse_expr(p)
            p.expect(")")
            return lambda r, f=fn, a=arg: f(a(r))
        if value == "pow":
            p.expect("(")
            base = _parse_expr(p)
            p.expect(",")
            exponent = _parse_expr(p)
            p.expect(")")
            return _binop("^", base, exponent)
        raise ExpressionError(f"unknown name {value!r} (the variable is 'rho')")
    if kind == "(":
        node = _parse_expr(p)
        p.expect(")")
        return node
    raise ExpressionError(f"unexpected token {kind!r} in expression")


def parse_expression(text):
    """Parse `text` into a callable of one argument (float or ndarray)."""
    p = _Parser(text)
    node = _parse_expr(p)
    if p.peek() != "end":
        raise ExpressionError(f"trailing input in {text!r}")
    # probe once so malformed expressions fail at parse time, not in a solver loop
    try:
        node(0.5)
        node(np.array([0.25, 0.75]))
    except ExpressionError:
        raise
    except Exception as exc:
        raise ExpressionError(f"expression {text!r} does not evaluate: {exc}")
    return node
