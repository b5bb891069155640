"""Minimal computer-algebra kernel: parse, evaluate, differentiate, simplify."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .nodes import (
    ONE,
    ZERO,
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
    const,
    substitute,
    variables,
)
from .normal import diff, is_polynomial, is_zero_exact, simplify, to_poly
from .numeric import compile_expr, evaluate
from .parser import ExprSyntaxError, parse, render

__all__ = [
    "Add", "Const", "Cos", "Div", "Exp", "Expr", "ExprSyntaxError", "FloatConst",
    "IntPow", "Mul", "Neg", "ONE", "RealPow", "Sin", "Sqrt", "Var", "ZERO",
    "compile_expr", "const", "diff", "equals", "evaluate", "gradient",
    "is_polynomial", "is_zero", "is_zero_exact", "parse", "render", "shift",
    "simplify", "substitute", "to_poly", "variables",
]

SAMPLE_POINTS = 50
SAMPLE_TOL = 1e-9


def gradient(e: Expr, var_ids) -> list[Expr]:
    return [diff(e, v) for v in var_ids]


def shift(e: Expr, offset: int) -> Expr:
    """Rename ``x_k`` to ``x_{k+offset}``."""
    return substitute(e, {k: Var(k + offset) for k in variables(e)})


def _sample_points(nvars: int, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.5, 1.5, size=(count, max(nvars, 1)))


def is_zero(e: Expr, *, samples: int = SAMPLE_POINTS, tol: float = SAMPLE_TOL, seed: int = 0) -> bool:
    """Exact for rational polynomials; otherwise sampled at random points.

    Points where the expression is undefined (nan) are skipped.
    """
    s = simplify(e)
    if is_polynomial(s) is not None or s == ZERO:
        return is_zero_exact(s)
    vs = variables(s)
    X = _sample_points(max(vs, default=0), samples, seed)
    vals = compile_expr(s)(X)
    vals = vals[np.isfinite(vals)]
    return bool(np.all(np.abs(vals) <= tol))


def equals(a: Expr, b: Expr, **kw) -> bool:
    return is_zero(Add((a, Neg(b))), **kw)


def max_abs_sampled(e: Expr, X: np.ndarray) -> float:
    vals = compile_expr(simplify(e))(X)
    vals = vals[np.isfinite(vals)]
    return float(np.max(np.abs(vals))) if vals.size else 0.0
