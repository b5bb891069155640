"""Anisotropic dilations, homogeneous dimension and the sharp exponent."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .expr import Expr, FloatConst, Var, compile_expr, is_polynomial, simplify, substitute
from .expr.normal import from_poly, p_mul, p_sub, to_poly
from .fields import DimensionMismatch, Operator, apply_operator
from .group import AXIOM_TOL, SAMPLES, Check, CheckReport, GroupLaw, monomial_basis

AUTOMORPHISM_LAMBDAS = (Fraction(1, 2), Fraction(1), Fraction(2), Fraction(5))


@dataclass(frozen=True)
class Dilation:
    """``delta_lambda(x) = (lambda^sigma_1 x_1, ..., lambda^sigma_n x_n)``."""

    sigma: tuple[Fraction, ...]

    def __post_init__(self):
        sig = tuple(Fraction(s) for s in self.sigma)
        if not sig:
            raise ValueError("sigma must be nonempty")
        if min(sig) < 1:
            raise ValueError("dilation exponents must be >= 1")
        object.__setattr__(self, "sigma", sig)

    @classmethod
    def isotropic(cls, n: int) -> "Dilation":
        return cls((Fraction(1),) * n)

    @property
    def dim(self) -> int:
        return len(self.sigma)

    @property
    def Q(self) -> Fraction:
        """Homogeneous dimension."""
        return sum(self.sigma, Fraction(0))

    @property
    def _denominator(self) -> int:
        return math.lcm(*(s.denominator for s in self.sigma))

    def heat_lift(self) -> "Dilation":
        """``(delta_lambda(x), lambda^2 t)`` on R^{n+1}."""
        return Dilation(self.sigma + (Fraction(2),))

    def apply(self, lam: float, x) -> np.ndarray:
        if not lam > 0:
            raise ValueError("lambda must be positive")
        x = np.asarray(x, dtype=float)
        scale = np.array([float(lam) ** float(s) for s in self.sigma])
        return x * scale

    def norm(self, x) -> np.ndarray:
        return homogeneous_norm(self, x)


def apply(d: Dilation, lam: float, x) -> np.ndarray:
    return d.apply(lam, x)


def homogeneous_norm(d: Dilation, x) -> np.ndarray | float:
    """``sum_j |x_j|^(1/sigma_j)``, homogeneous of degree one under ``d``."""
    x = np.asarray(x, dtype=float)
    inv = np.array([1.0 / float(s) for s in d.sigma])
    out = np.sum(np.abs(x) ** inv, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def sharp_exponent(Q) -> Fraction:
    """``1 + 2/(Q-2)``; requires ``Q >= 3``."""
    Q = Fraction(Q)
    if Q < 3:
        raise ValueError(f"sharp exponent needs homogeneous dimension Q >= 3, got {Q}")
    return 1 + Fraction(2) / (Q - 2)


def _mu_powers(d: Dilation, mu_index: int) -> list[Expr]:
    """``mu^(D sigma_k)`` so that lambda = mu^D keeps everything polynomial."""
    D = d._denominator
    return [Var(mu_index) ** int(s * D) for s in d.sigma]


def automorphism_check(d: Dilation, G: GroupLaw, seed: int = 0) -> CheckReport:
    """``delta(x o y) = delta(x) o delta(y)`` for every lambda > 0.

    Polynomial laws are checked as an exact identity in (lambda, x, y).
    """
    n = G.dim
    if d.dim != n:
        raise DimensionMismatch(f"dilation has {d.dim} exponents, group dimension is {n}")
    if G.compose is not None and G.is_polynomial():
        mu = 2 * n + 1
        pw = _mu_powers(d, mu)
        sub = {k: pw[k - 1] * Var(k) for k in range(1, n + 1)}
        sub.update({n + k: pw[k - 1] * Var(n + k) for k in range(1, n + 1)})
        residuals = []
        for k, c in enumerate(G.compose):
            diff_p = p_sub(to_poly(pw[k] * c), to_poly(substitute(c, sub)))
            if diff_p:
                residuals.append(from_poly(diff_p))
        if not residuals:
            return CheckReport([Check("automorphism", "exact", 0.0, True)])
        P = np.random.default_rng(seed).uniform(-1, 1, size=(SAMPLES, 2 * n + 1))
        P[:, -1] = 2.0
        worst = max(float(np.max(np.abs(compile_expr(r)(P)))) for r in residuals)
        return CheckReport([Check("automorphism", "exact", worst, False, "nonzero polynomial residual")])
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(SAMPLES, n))
    Y = rng.uniform(-1, 1, size=(SAMPLES, n))
    worst = 0.0
    for lam in AUTOMORPHISM_LAMBDAS:
        lhs = d.apply(float(lam), G.op(X, Y))
        rhs = G.op(d.apply(float(lam), X), d.apply(float(lam), Y))
        err = np.abs(lhs - rhs) / np.maximum(1.0, np.abs(lhs))
        worst = max(worst, float(np.max(err)))
    return CheckReport([Check("automorphism", "sampled", worst, worst <= AXIOM_TOL)])


def _split_mu(m: tuple, mu: int):
    rest = tuple((a, e) for a, e in m if not (isinstance(a, Var) and a.index == mu))
    e_mu = next((e for a, e in m if isinstance(a, Var) and a.index == mu), 0)
    return rest, e_mu


def _mu_offset(lhs: dict, rhs: dict, mu: int) -> Optional[int]:
    """e with lhs == mu^e * rhs, read off a single term of rhs."""
    m_r, c_r = next(iter(rhs.items()))
    key_r, e_r = _split_mu(m_r, mu)
    for m_l, c_l in lhs.items():
        key_l, e_l = _split_mu(m_l, mu)
        if key_l == key_r and c_l == c_r:
            return e_l - e_r
    return None


def homogeneity_degree(L: Operator, d: Dilation, seed: int = 0) -> Optional[Fraction]:
    """m with ``L[u o delta] = lambda^m (Lu) o delta`` on monomials of degree <= 3.

    A candidate m is read off one monomial and then verified on the whole
    basis. Returns None when no single m fits.
    """
    n = L.dim
    if d.dim != n:
        raise DimensionMismatch(f"dilation has {d.dim} exponents, operator dimension is {n}")
    basis = monomial_basis(n, 3)
    if L.is_polynomial():
        mu = n + 1
        pw = _mu_powers(d, mu)
        sub = {k: pw[k - 1] * Var(k) for k in range(1, n + 1)}
        pairs = []
        for u in basis:
            lhs = to_poly(apply_operator(L, simplify(substitute(u, sub)), parameters=True))
            rhs = to_poly(substitute(apply_operator(L, u), sub))
            pairs.append((lhs, rhs))
        e = None
        for lhs, rhs in pairs:
            if rhs:
                e = _mu_offset(lhs, rhs, mu)
                break
        if e is None or not isinstance(e, int):
            return None
        up, down = to_poly(Var(mu) ** max(e, 0)), to_poly(Var(mu) ** max(-e, 0))
        for lhs, rhs in pairs:
            if p_sub(p_mul(down, lhs), p_mul(up, rhs)):
                return None
        return Fraction(e, d._denominator)
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(SAMPLES, n))
    estimates = []
    for lam in (2.0, 3.0):
        scale = np.array([lam ** float(s) for s in d.sigma])
        sub = {k: FloatConst(float(scale[k - 1])) * Var(k) for k in range(1, n + 1)}
        for u in basis:
            lhs = compile_expr(apply_operator(L, simplify(substitute(u, sub))))(X)
            rhs = compile_expr(apply_operator(L, u))(X * scale)
            mask = np.abs(rhs) > 1e-8
            if np.any(np.abs(lhs[~mask]) > 1e-8):
                return None
            if np.any(mask):
                with np.errstate(invalid="ignore", divide="ignore"):
                    estimates.append(np.log(lhs[mask] / rhs[mask]) / np.log(lam))
    if not estimates:
        return None
    est = np.concatenate(estimates)
    if not np.all(np.isfinite(est)) or np.ptp(est) > 1e-6:
        return None
    return Fraction(float(np.mean(est))).limit_denominator(1000)
