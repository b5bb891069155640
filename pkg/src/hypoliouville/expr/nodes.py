"""Immutable expression tree nodes.

Every node carries a structural key (a nested tuple) computed once at
construction; equality, hashing and the canonical ordering used by the
normal form are all derived from it.
"""

from __future__ import annotations

from fractions import Fraction
from numbers import Rational


def _as_expr(value) -> "Expr":
    if isinstance(value, Expr):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not expressions")
    if isinstance(value, (int, Rational)):
        return Const(Fraction(value))
    if isinstance(value, float):
        return FloatConst(value)
    raise TypeError(f"cannot convert {type(value).__name__} to Expr")


class Expr:
    __slots__ = ("_key", "_hash")

    def _finish(self, key):
        self._key = key
        self._hash = hash(key)

    @property
    def key(self):
        return self._key

    def __eq__(self, other):
        return isinstance(other, Expr) and self._hash == other._hash and self._key == other._key

    def __ne__(self, other):
        return not self.__eq__(other)

    def __hash__(self):
        return self._hash

    def __setattr__(self, name, value):
        if hasattr(self, "_hash"):
            raise AttributeError("Expr nodes are immutable")
        object.__setattr__(self, name, value)

    def __reduce__(self):
        return (type(self), self._args())

    def _args(self) -> tuple:
        raise NotImplementedError

    def children(self) -> tuple["Expr", ...]:
        return ()

    # arithmetic builds raw trees; call simplify() for a normal form
    def __add__(self, other):
        return Add((self, _as_expr(other)))

    def __radd__(self, other):
        return Add((_as_expr(other), self))

    def __sub__(self, other):
        return Add((self, Neg(_as_expr(other))))

    def __rsub__(self, other):
        return Add((_as_expr(other), Neg(self)))

    def __mul__(self, other):
        return Mul((self, _as_expr(other)))

    def __rmul__(self, other):
        return Mul((_as_expr(other), self))

    def __truediv__(self, other):
        return Div(self, _as_expr(other))

    def __rtruediv__(self, other):
        return Div(_as_expr(other), self)

    def __neg__(self):
        return Neg(self)

    def __pow__(self, k):
        if isinstance(k, int):
            return IntPow(self, k)
        q = Fraction(k)
        if q.denominator == 1:
            return IntPow(self, int(q))
        return RealPow(self, q)

    def __str__(self):
        from .parser import render

        return render(self)

    def __repr__(self):
        return f"Expr({self})"


class Const(Expr):
    """Exact rational constant."""

    __slots__ = ("value",)

    def __init__(self, value):
        object.__setattr__(self, "value", Fraction(value))
        self._finish(("C", self.value))

    def _args(self):
        return (self.value,)


class FloatConst(Expr):
    __slots__ = ("value",)

    def __init__(self, value: float):
        object.__setattr__(self, "value", float(value))
        self._finish(("F", self.value))

    def _args(self):
        return (self.value,)


class Var(Expr):
    """Coordinate variable; indices start at 1."""

    __slots__ = ("index",)

    def __init__(self, index: int):
        if int(index) != index or index < 1:
            raise ValueError(f"variable index must be a positive integer, got {index!r}")
        object.__setattr__(self, "index", int(index))
        self._finish(("V", self.index))

    def _args(self):
        return (self.index,)


class Add(Expr):
    __slots__ = ("terms",)

    def __init__(self, terms):
        terms = tuple(_as_expr(t) for t in terms)
        if not terms:
            raise ValueError("Add needs at least one term")
        object.__setattr__(self, "terms", terms)
        self._finish(("+", tuple(t._key for t in terms)))

    def _args(self):
        return (self.terms,)

    def children(self):
        return self.terms


class Mul(Expr):
    __slots__ = ("factors",)

    def __init__(self, factors):
        factors = tuple(_as_expr(f) for f in factors)
        if not factors:
            raise ValueError("Mul needs at least one factor")
        object.__setattr__(self, "factors", factors)
        self._finish(("*", tuple(f._key for f in factors)))

    def _args(self):
        return (self.factors,)

    def children(self):
        return self.factors


class Neg(Expr):
    __slots__ = ("arg",)

    def __init__(self, arg):
        object.__setattr__(self, "arg", _as_expr(arg))
        self._finish(("neg", self.arg._key))

    def _args(self):
        return (self.arg,)

    def children(self):
        return (self.arg,)


class Div(Expr):
    __slots__ = ("num", "den")

    def __init__(self, num, den):
        object.__setattr__(self, "num", _as_expr(num))
        object.__setattr__(self, "den", _as_expr(den))
        self._finish(("/", self.num._key, self.den._key))

    def _args(self):
        return (self.num, self.den)

    def children(self):
        return (self.num, self.den)


class IntPow(Expr):
    __slots__ = ("base", "exp")

    def __init__(self, base, exp: int):
        if int(exp) != exp:
            raise ValueError("IntPow exponent must be an integer")
        object.__setattr__(self, "base", _as_expr(base))
        object.__setattr__(self, "exp", int(exp))
        self._finish(("ipow", self.base._key, self.exp))

    def _args(self):
        return (self.base, self.exp)

    def children(self):
        return (self.base,)


class RealPow(Expr):
    """base ** q for a rational q, evaluated on the real branch."""

    __slots__ = ("base", "exp")

    def __init__(self, base, exp):
        object.__setattr__(self, "base", _as_expr(base))
        object.__setattr__(self, "exp", Fraction(exp))
        self._finish(("rpow", self.base._key, self.exp))

    def _args(self):
        return (self.base, self.exp)

    def children(self):
        return (self.base,)


class _Func(Expr):
    __slots__ = ("arg",)
    tag = ""

    def __init__(self, arg):
        object.__setattr__(self, "arg", _as_expr(arg))
        self._finish((self.tag, self.arg._key))

    def _args(self):
        return (self.arg,)

    def children(self):
        return (self.arg,)


class Sin(_Func):
    __slots__ = ()
    tag = "sin"


class Cos(_Func):
    __slots__ = ()
    tag = "cos"


class Exp(_Func):
    __slots__ = ()
    tag = "exp"


class Sqrt(_Func):
    __slots__ = ()
    tag = "sqrt"


FUNCTIONS = {"sin": Sin, "cos": Cos, "exp": Exp, "sqrt": Sqrt}

ZERO = Const(0)
ONE = Const(1)


def const(value) -> Expr:
    return _as_expr(value)


def variables(e: Expr) -> frozenset[int]:
    """Indices of all variables occurring in ``e``."""
    out: set[int] = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            out.add(node.index)
        else:
            stack.extend(node.children())
    return frozenset(out)


def substitute(e: Expr, mapping: dict[int, Expr]) -> Expr:
    """Replace variables by expressions (simultaneously). Returns a raw tree."""
    mapping = {k: _as_expr(v) for k, v in mapping.items()}
    memo: dict[Expr, Expr] = {}

    def go(node: Expr) -> Expr:
        hit = memo.get(node)
        if hit is not None:
            return hit
        if isinstance(node, Var):
            out = mapping.get(node.index, node)
        elif isinstance(node, (Const, FloatConst)):
            out = node
        elif isinstance(node, Add):
            out = Add(go(t) for t in node.terms)
        elif isinstance(node, Mul):
            out = Mul(go(f) for f in node.factors)
        elif isinstance(node, Neg):
            out = Neg(go(node.arg))
        elif isinstance(node, Div):
            out = Div(go(node.num), go(node.den))
        elif isinstance(node, IntPow):
            out = IntPow(go(node.base), node.exp)
        elif isinstance(node, RealPow):
            out = RealPow(go(node.base), node.exp)
        elif isinstance(node, _Func):
            out = type(node)(go(node.arg))
        else:  # pragma: no cover
            raise TypeError(type(node))
        memo[node] = out
        return out

    return go(e)
