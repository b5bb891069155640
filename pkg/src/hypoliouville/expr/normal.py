"""Normal form for expressions: sums of coefficient * product of atom powers.

Atoms are variables, ``sin``/``cos``/``exp`` of a normalised argument, and
"composite" atoms (any other normalised expression) that appear only with
non-positive-integer exponents (``1/P`` or ``P**(1/2)`` for a sum ``P``).
Positive integer powers of sums are always expanded, so polynomial data
(rational coefficients, variable atoms, non-negative exponents) reaches a
canonical form and polynomial identities collapse to an exact zero.
``cos(a)**2`` is rewritten as ``1 - sin(a)**2``.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from typing import Optional

from .nodes import (
    Add,
    Const,
    Cos,
    Div,
    Exp,
    Expr,
    FloatConst,
    IntPow,
    Mul,
    Neg,
    RealPow,
    Sin,
    Sqrt,
    Var,
    _Func,
)

# Poly: dict[monomial, coefficient]; monomial: tuple of (atom, exponent)
# sorted by atom key. Coefficients are Fraction, or float once a decimal
# literal is involved. Poly dicts are treated as immutable once returned.
_EMPTY: tuple = ()


def _norm_exp(e):
    if isinstance(e, Fraction) and e.denominator == 1:
        return int(e)
    return e


def _is_composite(atom: Expr) -> bool:
    return not isinstance(atom, (Var, Sin, Cos, Exp))


def _mono_mul(m1: tuple, m2: tuple) -> tuple:
    if not m1:
        return m2
    if not m2:
        return m1
    out = []
    i = j = 0
    while i < len(m1) and j < len(m2):
        a1, e1 = m1[i]
        a2, e2 = m2[j]
        if a1 == a2:
            e = _norm_exp(e1 + e2)
            if e != 0:
                out.append((a1, e))
            i += 1
            j += 1
        elif a1.key < a2.key:
            out.append(m1[i])
            i += 1
        else:
            out.append(m2[j])
            j += 1
    out.extend(m1[i:])
    out.extend(m2[j:])
    return tuple(out)


def _accumulate(target: dict, mono: tuple, coeff) -> None:
    v = target.get(mono, 0) + coeff
    if v == 0:
        target.pop(mono, None)
    else:
        target[mono] = v


def p_const(c) -> dict:
    return {} if c == 0 else {_EMPTY: c}


def p_atom(atom: Expr, exp=1) -> dict:
    return {((atom, _norm_exp(exp)),): 1}


def p_add(*polys: dict) -> dict:
    out: dict = {}
    for p in polys:
        for m, c in p.items():
            _accumulate(out, m, c)
    return out


def p_scale(p: dict, c) -> dict:
    if c == 0:
        return {}
    return {m: v * c for m, v in p.items()}


def p_neg(p: dict) -> dict:
    return {m: -v for m, v in p.items()}


def p_sub(p: dict, q: dict) -> dict:
    return p_add(p, p_neg(q))


def p_mul(p: dict, q: dict) -> dict:
    if not p or not q:
        return {}
    out: dict = {}
    for m1, c1 in p.items():
        for m2, c2 in q.items():
            _accumulate(out, _mono_mul(m1, m2), c1 * c2)
    return _normalize(out)


def p_pow(p: dict, k: int) -> dict:
    if k < 0:
        return p_pow(p_inv(p), -k)
    result = {_EMPTY: 1}
    base = p
    while k:
        if k & 1:
            result = p_mul(result, base)
        k >>= 1
        if k:
            base = p_mul(base, base)
    return result


def p_inv(p: dict) -> dict:
    if not p:
        raise ZeroDivisionError("division by the zero expression")
    if len(p) == 1:
        ((m, c),) = p.items()
        inv_c = (1 / c) if isinstance(c, float) else Fraction(1) / c
        return {tuple((a, _norm_exp(-e)) for a, e in m): inv_c}
    return p_atom(from_poly(p), -1)


def p_rpow(p: dict, q: Fraction) -> dict:
    q = Fraction(q)
    if q.denominator == 1:
        return p_pow(p, int(q))
    if not p:
        if q > 0:
            return {}
        raise ZeroDivisionError("zero raised to a negative power")
    if len(p) == 1:
        ((m, c),) = p.items()
        if not m and c == 1:
            return {_EMPTY: 1}
        if c == 1 and len(m) == 1 and m[0][1] == 1:
            return p_atom(m[0][0], q)
    return p_atom(from_poly(p), q)


def _normalize(p: dict) -> dict:
    """Expand positive integer powers of composite atoms; rewrite cos^2."""
    while True:
        todo = None
        for m in p:
            for idx, (a, e) in enumerate(m):
                if isinstance(e, int) and (
                    (e >= 1 and _is_composite(a)) or (e >= 2 and isinstance(a, Cos))
                ):
                    todo = (m, idx)
                    break
            if todo:
                break
        if todo is None:
            return p
        m, idx = todo
        c = p[m]
        a, e = m[idx]
        rest = m[:idx] + m[idx + 1:]
        if isinstance(a, Cos):
            keep = _mono_mul(rest, ((a, e - 2),) if e > 2 else _EMPTY)
            repl = p_sub({_EMPTY: 1}, p_atom(Sin(a.arg), 2))
        else:
            keep = rest
            repl = p_pow(to_poly(a), e)
        new = dict(p)
        del new[m]
        for m2, c2 in repl.items():
            _accumulate(new, _mono_mul(keep, m2), c * c2)
        p = new


def _func_poly(node: _Func) -> dict:
    arg = simplify(node.arg)
    if isinstance(node, Sqrt):
        return p_rpow(to_poly(arg), Fraction(1, 2))
    if arg == Const(0):
        return {} if isinstance(node, Sin) else {_EMPTY: 1}
    return p_atom(type(node)(arg))


@lru_cache(maxsize=200_000)
def to_poly(e: Expr) -> dict:
    if isinstance(e, Const):
        return p_const(e.value)
    if isinstance(e, FloatConst):
        return p_const(e.value)
    if isinstance(e, Var):
        return p_atom(e)
    if isinstance(e, Add):
        return p_add(*(to_poly(t) for t in e.terms))
    if isinstance(e, Mul):
        out = {_EMPTY: 1}
        for f in e.factors:
            out = p_mul(out, to_poly(f))
            if not out:
                break
        return out
    if isinstance(e, Neg):
        return p_neg(to_poly(e.arg))
    if isinstance(e, Div):
        return p_mul(to_poly(e.num), p_inv(to_poly(e.den)))
    if isinstance(e, IntPow):
        return p_pow(to_poly(e.base), e.exp)
    if isinstance(e, RealPow):
        return p_rpow(to_poly(e.base), e.exp)
    if isinstance(e, _Func):
        return _func_poly(e)
    raise TypeError(f"unknown node {type(e).__name__}")


def _coef_expr(c) -> Expr:
    return FloatConst(c) if isinstance(c, float) else Const(c)


def _mono_sort_key(m: tuple):
    return tuple((a.key, e) for a, e in m)


def from_poly(p: dict) -> Expr:
    if not p:
        return Const(0)
    terms = []
    for m in sorted(p, key=_mono_sort_key):
        c = p[m]
        factors = []
        for a, e in m:
            if e == 1:
                factors.append(a)
            elif isinstance(e, int):
                factors.append(IntPow(a, e))
            else:
                factors.append(RealPow(a, e))
        if not factors:
            terms.append(_coef_expr(c))
        elif c == 1 and not isinstance(c, float):
            terms.append(factors[0] if len(factors) == 1 else Mul(factors))
        elif c == -1 and not isinstance(c, float):
            terms.append(Neg(factors[0] if len(factors) == 1 else Mul(factors)))
        else:
            terms.append(Mul([_coef_expr(c)] + factors))
    return terms[0] if len(terms) == 1 else Add(terms)


def simplify(e: Expr) -> Expr:
    """Flatten, fold constants, collect like terms, expand polynomial powers."""
    return from_poly(to_poly(e))


# ---------------------------------------------------------------- derivative


def _atom_diff(a: Expr, var: int) -> dict:
    if isinstance(a, Var):
        return {_EMPTY: 1} if a.index == var else {}
    if isinstance(a, Sin):
        return p_mul(p_atom(Cos(a.arg)), poly_diff(to_poly(a.arg), var))
    if isinstance(a, Cos):
        return p_neg(p_mul(p_atom(Sin(a.arg)), poly_diff(to_poly(a.arg), var)))
    if isinstance(a, Exp):
        return p_mul(p_atom(a), poly_diff(to_poly(a.arg), var))
    return poly_diff(to_poly(a), var)


def poly_diff(p: dict, var: int) -> dict:
    out: dict = {}
    for m, c in p.items():
        for idx, (a, e) in enumerate(m):
            da = _atom_diff(a, var)
            if not da:
                continue
            if e == 1:
                rest = m[:idx] + m[idx + 1:]
            else:
                rest = m[:idx] + ((a, _norm_exp(e - 1)),) + m[idx + 1:]
            term = p_mul({rest: c * e}, da)
            for m2, c2 in term.items():
                _accumulate(out, m2, c2)
    return _normalize(out)


def diff(e: Expr, var: int) -> Expr:
    """Symbolic partial derivative with respect to variable ``var``."""
    return from_poly(poly_diff(to_poly(e), var))


# ---------------------------------------------------------------- queries


def poly_degree(p: dict) -> Optional[int]:
    deg = 0
    for m, c in p.items():
        if isinstance(c, float):
            return None
        total = 0
        for a, e in m:
            if not isinstance(a, Var) or not isinstance(e, int) or e < 0:
                return None
            total += e
        deg = max(deg, total)
    return deg


def is_polynomial(e: Expr) -> Optional[int]:
    """Total degree if ``e`` normalises to a rational polynomial, else None."""
    return poly_degree(to_poly(e))


def is_zero_exact(e: Expr) -> bool:
    return not to_poly(e)
