"""Compile expressions to vectorised numpy callables."""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from typing import Callable

import numpy as np

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
)


def _rpow(base, num: int, den: int):
    q = num / den
    if den % 2 == 1:
        # odd root: real on the whole line
        return np.sign(base) ** (num % 2) * np.abs(base) ** q if num % 2 else np.abs(base) ** q
    return np.power(base, q)


class _Emitter:
    def __init__(self):
        self.lines: list[str] = []
        self.names: dict[Expr, str] = {}

    def emit(self, e: Expr) -> str:
        hit = self.names.get(e)
        if hit is not None:
            return hit
        if isinstance(e, Const):
            return repr(float(e.value))
        if isinstance(e, FloatConst):
            return f"np.float64({e.value!r})"
        if isinstance(e, Var):
            return f"X[..., {e.index - 1}]"
        if isinstance(e, Add):
            code = " + ".join(f"({self.emit(t)})" for t in e.terms)
        elif isinstance(e, Mul):
            code = " * ".join(f"({self.emit(f)})" for f in e.factors)
        elif isinstance(e, Neg):
            code = f"-({self.emit(e.arg)})"
        elif isinstance(e, Div):
            code = f"({self.emit(e.num)}) / ({self.emit(e.den)})"
        elif isinstance(e, IntPow):
            code = f"({self.emit(e.base)}) ** {e.exp}"
        elif isinstance(e, RealPow):
            q = Fraction(e.exp)
            code = f"_rpow({self.emit(e.base)}, {q.numerator}, {q.denominator})"
        elif isinstance(e, Sin):
            code = f"np.sin({self.emit(e.arg)})"
        elif isinstance(e, Cos):
            code = f"np.cos({self.emit(e.arg)})"
        elif isinstance(e, Exp):
            code = f"np.exp({self.emit(e.arg)})"
        elif isinstance(e, Sqrt):
            code = f"np.sqrt({self.emit(e.arg)})"
        else:  # pragma: no cover
            raise TypeError(type(e).__name__)
        name = f"_t{len(self.names)}"
        self.lines.append(f"    {name} = {code}")
        self.names[e] = name
        return name


@lru_cache(maxsize=4096)
def compile_expr(e: Expr) -> Callable[[np.ndarray], np.ndarray]:
    """Return ``f(X)`` evaluating ``e`` on points ``X`` of shape ``(..., n)``."""
    em = _Emitter()
    out = em.emit(e)
    src = "def _f(X):\n" + "\n".join(em.lines) + f"\n    return {out}\n"
    scope = {"np": np, "_rpow": _rpow}
    exec(compile(src, "<expr>", "exec"), scope)
    raw = scope["_f"]

    def f(X):
        X = np.asarray(X, dtype=float)
        with np.errstate(all="ignore"):
            val = raw(X)
        return np.broadcast_to(np.asarray(val, dtype=float), X.shape[:-1]).copy()

    return f


def evaluate(e: Expr, point) -> float | np.ndarray:
    """Evaluate at one point (returns float) or a stack of points ``(m, n)``."""
    X = np.asarray(point, dtype=float)
    if X.ndim == 0:
        X = X.reshape(1)
    need = max((v for v in _max_var(e)), default=0)
    if X.shape[-1] < need:
        raise ValueError(f"expression uses x{need} but the point has dimension {X.shape[-1]}")
    val = compile_expr(e)(X)
    return float(val) if X.ndim == 1 else val


@lru_cache(maxsize=4096)
def _max_var(e: Expr) -> tuple[int, ...]:
    from .nodes import variables

    vs = variables(e)
    return (max(vs),) if vs else ()
