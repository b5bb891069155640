"""Text grammar for expressions.

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom ('^' unary)?          # right associative
    atom   := number | variable | func '(' expr ')' | '(' expr ')'

Variables are ``x1 .. x<dim>``; ``t`` is accepted when a time index is
declared. Integer literals are exact, literals with a decimal point or an
exponent become float constants. ``^`` binds tighter than unary minus, so
``-x1^2`` is ``-(x1^2)``. Exponents must be constant.
"""

from __future__ import annotations

import re
from fractions import Fraction
from typing import Mapping, Optional

from .nodes import (
    FUNCTIONS,
    Add,
    Const,
    Div,
    Expr,
    FloatConst,
    IntPow,
    Mul,
    Neg,
    RealPow,
    Var,
    _Func,
)


class ExprSyntaxError(ValueError):
    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}")


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)
_VAR = re.compile(r"x(\d+)$")


def _tokenize(text: str):
    pos = 0
    tokens = []
    n = len(text)
    while pos < n:
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            start = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {text[start]!r}", start, text)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


def _const_value(e: Expr) -> Optional[Fraction]:
    """Exact value of a variable-free arithmetic tree, if it has one."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, FloatConst):
        return Fraction(repr(e.value))
    if isinstance(e, Neg):
        v = _const_value(e.arg)
        return None if v is None else -v
    if isinstance(e, Add):
        vals = [_const_value(t) for t in e.terms]
        return None if None in vals else sum(vals, Fraction(0))
    if isinstance(e, Mul):
        out = Fraction(1)
        for f in e.factors:
            v = _const_value(f)
            if v is None:
                return None
            out *= v
        return out
    if isinstance(e, Div):
        a, b = _const_value(e.num), _const_value(e.den)
        if a is None or b is None or b == 0:
            return None
        return a / b
    if isinstance(e, IntPow):
        v = _const_value(e.base)
        if v is None or (v == 0 and e.exp < 0):
            return None
        return v ** e.exp
    return None


class _Parser:
    def __init__(self, text: str, dim: int, time_index: Optional[int], aliases: Mapping[str, int]):
        self.text = text
        self.dim = dim
        self.time_index = time_index
        self.aliases = dict(aliases)
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, pos = self.take()
        if val != value or kind == "end":
            got = "end of input" if kind == "end" else repr(val)
            raise ExprSyntaxError(f"expected {value!r}, got {got}", pos, self.text)

    def parse(self) -> Expr:
        e = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {val!r}", pos, self.text)
        return e

    def expr(self) -> Expr:
        terms = [self.term()]
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            _, op, _ = self.take()
            t = self.term()
            terms.append(t if op == "+" else Neg(t))
        return terms[0] if len(terms) == 1 else Add(terms)

    def term(self) -> Expr:
        left = self.unary()
        factors = [left]
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            _, op, _ = self.take()
            right = self.unary()
            if op == "*":
                factors.append(right)
            else:
                num = factors[0] if len(factors) == 1 else Mul(factors)
                a, b = _const_value(num), _const_value(right)
                if a is not None and b is not None and b != 0 and isinstance(num, Const) and isinstance(right, Const):
                    factors = [Const(a / b)]
                else:
                    factors = [Div(num, right)]
        return factors[0] if len(factors) == 1 else Mul(factors)

    def unary(self) -> Expr:
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return Neg(self.unary())
        if kind == "op" and val == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, val, pos = self.peek()
        if kind == "op" and val == "^":
            self.take()
            exp_pos = self.peek()[2]
            exponent = self.unary()
            q = _const_value(exponent)
            if q is None:
                raise ExprSyntaxError("exponent must be a numeric constant", exp_pos, self.text)
            if q.denominator == 1:
                return IntPow(base, int(q))
            return RealPow(base, q)
        return base

    def atom(self) -> Expr:
        kind, val, pos = self.take()
        if kind == "num":
            if any(ch in val for ch in ".eE"):
                return FloatConst(float(val))
            return Const(int(val))
        if kind == "name":
            if val in FUNCTIONS:
                self.expect("(")
                inner = self.expr()
                self.expect(")")
                return FUNCTIONS[val](inner)
            return self.variable(val, pos)
        if kind == "op" and val == "(":
            inner = self.expr()
            self.expect(")")
            return inner
        got = "end of input" if kind == "end" else repr(val)
        raise ExprSyntaxError(f"unexpected {got}", pos, self.text)

    def variable(self, name: str, pos: int) -> Expr:
        if name in self.aliases:
            return Var(self.aliases[name])
        if name == "t":
            if self.time_index is None:
                raise ExprSyntaxError("time variable 't' is not declared", pos, self.text)
            return Var(self.time_index)
        m = _VAR.match(name)
        if not m:
            raise ExprSyntaxError(f"unknown name {name!r}", pos, self.text)
        k = int(m.group(1))
        if not 1 <= k <= self.dim:
            raise ExprSyntaxError(f"variable {name} out of range 1..{self.dim}", pos, self.text)
        return Var(k)


def parse(
    text: str,
    dim: int,
    time_index: Optional[int] = None,
    aliases: Optional[Mapping[str, int]] = None,
) -> Expr:
    """Parse ``text`` into an expression over ``x1..x<dim>``.

    ``time_index`` makes ``t`` an alias of that coordinate; ``aliases`` maps
    extra names (``y1``, ``s`` ...) to variable indices beyond ``dim``.
    """
    if int(dim) != dim or dim < 1:
        raise ValueError("dim must be a positive integer")
    if not isinstance(text, str):
        raise TypeError("expression text must be a string")
    return _Parser(text, int(dim), time_index, aliases or {}).parse()


# ---------------------------------------------------------------- rendering

_ADD, _MUL, _UNARY, _POW, _ATOM = 1, 2, 3, 4, 5


def _fmt_fraction(q: Fraction) -> tuple[str, int]:
    if q.denominator == 1:
        return str(q.numerator), (_ATOM if q >= 0 else _UNARY)
    s = f"{q.numerator}/{q.denominator}"
    return s, (_MUL if q > 0 else _UNARY)


def _render(e: Expr) -> tuple[str, int]:
    if isinstance(e, Const):
        return _fmt_fraction(e.value)
    if isinstance(e, FloatConst):
        s = repr(e.value)
        if "." not in s and "e" not in s and "inf" not in s and "nan" not in s:
            s += ".0"
        return s, (_ATOM if e.value >= 0 else _UNARY)
    if isinstance(e, Var):
        return f"x{e.index}", _ATOM
    if isinstance(e, Add):
        return " + ".join(_wrap(t, _ADD) for t in e.terms), _ADD
    if isinstance(e, Mul):
        return " * ".join(_wrap(f, _MUL + 1) for f in e.factors), _MUL
    if isinstance(e, Neg):
        return "-" + _wrap(e.arg, _POW), _UNARY
    if isinstance(e, Div):
        return f"{_wrap(e.num, _MUL)} / {_wrap(e.den, _UNARY + 1)}", _MUL
    if isinstance(e, IntPow):
        k = str(e.exp) if e.exp >= 0 else f"({e.exp})"
        return f"{_wrap(e.base, _ATOM)}^{k}", _POW
    if isinstance(e, RealPow):
        q = e.exp
        return f"{_wrap(e.base, _ATOM)}^({q.numerator}/{q.denominator})", _POW
    if isinstance(e, _Func):
        return f"{e.tag}({_render(e.arg)[0]})", _ATOM
    raise TypeError(type(e).__name__)


def _wrap(e: Expr, min_prec: int) -> str:
    s, prec = _render(e)
    return s if prec >= min_prec else f"({s})"


def render(e: Expr) -> str:
    """Render ``e`` in the parse grammar (``parse(render(e))`` evaluates equal)."""
    return _render(e)[0]
