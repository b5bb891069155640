"""Constant-coefficient Kolmogorov operators ``div(A grad) + <Bx, grad> - d/dt``.

Covers the matrix exponential ``E(s) = exp(-sB)``, the controllability Gram
matrix ``C(t)``, hypoellipticity (Gram and Kalman tests cross-checked),
unimodularity of the associated group and the L-infinity Liouville
criterion on the spectrum of B.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, linalg

from .expr import ONE, ZERO, Const, Cos, Exp, Expr, FloatConst, Sin, Var, simplify
from .fields import Operator
from .group import GroupLaw

GRAM_TIMES = (0.1, 1.0, 10.0)
GRAM_MIN_EIG = 1e-10  # reported only
GRAM_RANK_RTOL = 1e-8  # relative singular-value floor of the Gram square-root factor
GRAM_STIFFNESS = 8.0  # verdict times satisfy t * ||B||_2 <= this
GRAM_NODES = 64
REAL_PART_TOL = 1e-10
TRACE_TOL = 1e-12
EIGVEC_COND_MAX = 1e8


class QuadratureError(RuntimeError):
    pass


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


def _frac_matrix(M, n: Optional[int] = None) -> tuple[tuple[Fraction, ...], ...]:
    rows = tuple(tuple(_frac(v) for v in row) for row in M)
    n = n or len(rows)
    if len(rows) != n or any(len(r) != n for r in rows):
        raise ValueError(f"expected a {n}x{n} matrix")
    return rows


def _to_float(M) -> np.ndarray:
    return np.array([[float(v) for v in row] for row in M], dtype=float)


def _exact_matmul(P, Q):
    n = len(P)
    return tuple(tuple(sum((P[i][k] * Q[k][j] for k in range(n)), Fraction(0)) for j in range(n)) for i in range(n))


def is_nilpotent_exact(B) -> bool:
    n = len(B)
    P = B
    for _ in range(n - 1):
        P = _exact_matmul(P, B)
    return all(v == 0 for row in P for v in row)


@dataclass(frozen=True)
class KolmogorovSpec:
    """Constant matrices (A, B); A symmetric positive semidefinite."""

    A: tuple[tuple[Fraction, ...], ...]
    B: tuple[tuple[Fraction, ...], ...]

    def __post_init__(self):
        A = _frac_matrix(self.A)
        n = len(A)
        B = _frac_matrix(self.B, n)
        for i in range(n):
            for j in range(n):
                if A[i][j] != A[j][i]:
                    raise ValueError("A must be symmetric")
        if np.min(np.linalg.eigvalsh(_to_float(A))) < -1e-12:
            raise ValueError("A must be positive semidefinite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return len(self.A)

    @property
    def A_float(self) -> np.ndarray:
        return _to_float(self.A)

    @property
    def B_float(self) -> np.ndarray:
        return _to_float(self.B)

    @property
    def trace_B(self) -> Fraction:
        return sum((self.B[i][i] for i in range(self.n)), Fraction(0))


@lru_cache(maxsize=256)
def _exp_plan(exact: tuple) -> tuple[np.ndarray, bool]:
    return _to_float(exact), is_nilpotent_exact(exact)


def matrix_exp(B, s: float) -> np.ndarray:
    """``exp(-sB)``; terminating series when B is (exactly) nilpotent."""
    if isinstance(B, KolmogorovSpec):
        B = B.B
    try:
        exact = _frac_matrix(B)
    except (TypeError, ValueError):
        exact = None
    if exact is not None:
        Bf, nilpotent = _exp_plan(exact)
    else:
        Bf, nilpotent = np.asarray(B, dtype=float), False
    n = Bf.shape[0]
    if nilpotent:
        out = np.eye(n)
        term = np.eye(n)
        for k in range(1, n):
            term = term @ (-s * Bf) / k
            out = out + term
        return out
    return linalg.expm(-s * Bf)


def gram(spec: KolmogorovSpec, t: float, atol: float = 1e-10) -> np.ndarray:
    """``C(t) = int_0^t E(s) A E(s)^T ds`` by adaptive Gauss-Kronrod quadrature."""
    if not t > 0:
        raise ValueError("t must be positive")
    A = spec.A_float

    def integrand(s):
        E = matrix_exp(spec.B, s)
        M = E @ A @ E.T
        return 0.5 * (M + M.T)

    C, err = integrate.quad_vec(integrand, 0.0, float(t), epsabs=atol, epsrel=1e-13, norm="max", limit=2000)
    scale = max(1.0, float(np.max(np.abs(C))))
    if not np.all(np.isfinite(C)) or err > max(atol, 1e-12 * scale) * 10:
        raise QuadratureError(f"Gram quadrature did not converge (error estimate {err:.3g})")
    return C


def gram_factor(spec: KolmogorovSpec, t: float, nodes: int = GRAM_NODES) -> np.ndarray:
    """``F`` with ``F F^T = C'(t) = int_{-t/2}^{t/2} E A E^T`` (Gauss-Legendre).

    ``C'(t) = E(-t/2) C(t) E(-t/2)^T`` is congruent to ``C(t)``, so has the
    same inertia; the centred window halves the exponential spread of ``E``.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    x, w = np.polynomial.legendre.leggauss(nodes)
    ev, V = np.linalg.eigh(spec.A_float)
    R = (V * np.sqrt(np.clip(ev, 0.0, None))) @ V.T
    return np.hstack([math.sqrt(wk * t / 2) * matrix_exp(spec.B, sk * t / 2) @ R for sk, wk in zip(x, w)])


def gram_margin(spec: KolmogorovSpec, t: float, nodes: int = GRAM_NODES) -> float:
    """``sigma_min / sigma_max`` of the row-normalised Gram factor (0 means singular).

    Working with the factor rather than ``C`` itself squares the usable
    dynamic range; row normalisation is a diagonal congruence.
    """
    F = gram_factor(spec, t, nodes)
    norms = np.linalg.norm(F, axis=1)
    if not np.all(np.isfinite(F)) or np.any(norms == 0):
        return 0.0
    sv = np.linalg.svd(F / norms[:, None], compute_uv=False)
    return float(sv[-1] / sv[0])


def gram_verdict_times(spec: KolmogorovSpec, times: Sequence[float] = GRAM_TIMES) -> list[float]:
    """Times at which ``exp(-sB)`` is well enough conditioned for a rank decision.

    Positive definiteness of ``C(t)`` does not depend on ``t > 0``, so nothing
    is lost by skipping stiff times; if every time is stiff, a shorter one is used.
    """
    nb = float(np.linalg.norm(spec.B_float, 2))
    ok = [float(t) for t in times if t * nb <= GRAM_STIFFNESS]
    return ok or [GRAM_STIFFNESS / nb]


def kalman_matrix(spec: KolmogorovSpec) -> np.ndarray:
    """``[A, BA, ..., B^(n-1) A]``."""
    A, B = spec.A_float, spec.B_float
    blocks = [A]
    for _ in range(spec.n - 1):
        blocks.append(B @ blocks[-1])
    return np.hstack(blocks)


def kalman_rank(spec: KolmogorovSpec) -> int:
    return int(np.linalg.matrix_rank(kalman_matrix(spec)))


@dataclass
class Classification:
    hypoelliptic: Optional[bool]
    unimodular: bool
    linf_liouville: bool
    eigenvalues: list[complex]
    trace_B: Fraction
    gram_min_eigenvalues: dict[float, float]
    kalman_rank: int
    gram_margins: dict[float, float] = field(default_factory=dict)
    boundary: bool = False
    diagnostics: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "hypoelliptic": self.hypoelliptic,
            "unimodular": self.unimodular,
            "Linf_liouville": self.linf_liouville,
            "Linf_liouville_boundary": self.boundary,
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "trace_B": str(self.trace_B),
            "gram_min_eigenvalues": {str(t): v for t, v in self.gram_min_eigenvalues.items()},
            "gram_margins": {str(t): v for t, v in self.gram_margins.items()},
            "kalman_rank": self.kalman_rank,
            "diagnostics": self.diagnostics,
        }


def classify(spec: KolmogorovSpec, times: Sequence[float] = GRAM_TIMES) -> Classification:
    diagnostics = []
    gram_eigs = {}
    for t in times:
        try:
            gram_eigs[float(t)] = float(np.min(np.linalg.eigvalsh(gram(spec, t))))
        except QuadratureError as exc:  # informational only; the verdict uses the factor
            gram_eigs[float(t)] = float("nan")
            diagnostics.append(f"t={t}: {exc}")
    margins = {t: gram_margin(spec, t) for t in gram_verdict_times(spec, times)}
    gram_ok = all(v > GRAM_RANK_RTOL for v in margins.values())
    rank = kalman_rank(spec)
    kalman_ok = rank == spec.n
    if gram_ok == kalman_ok:
        hypo: Optional[bool] = gram_ok
    else:
        hypo = None
        diagnostics.append(
            f"Gram test ({'positive' if gram_ok else 'singular'}) disagrees with Kalman rank {rank}/{spec.n}"
        )
    eig = np.linalg.eigvals(spec.B_float)
    eig = sorted((complex(z) for z in eig), key=lambda z: (z.real, z.imag))
    max_re = max(z.real for z in eig)
    boundary = abs(max_re) <= REAL_PART_TOL
    if boundary:
        diagnostics.append("largest real part of spec(B) is numerically zero: boundary case")
    trace = spec.trace_B
    return Classification(
        hypoelliptic=hypo,
        unimodular=abs(float(trace)) <= TRACE_TOL,
        linf_liouville=max_re <= REAL_PART_TOL,
        eigenvalues=eig,
        trace_B=trace,
        gram_min_eigenvalues=gram_eigs,
        kalman_rank=rank,
        gram_margins=margins,
        boundary=boundary,
        diagnostics=diagnostics,
    )


# ---------------------------------------------------------------- operator / group


def build_operator(spec: KolmogorovSpec) -> Operator:
    """The operator on R^{n+1}, time as the last coordinate."""
    n = spec.n
    m = n + 1
    A = [[Const(spec.A[i][j]) if i < n and j < n else ZERO for j in range(m)] for i in range(m)]
    b = []
    for i in range(n):
        e: Expr = ZERO
        for j in range(n):
            if spec.B[i][j] != 0:
                e = e + Const(spec.B[i][j]) * Var(j + 1)
        b.append(simplify(e))
    b.append(ZERO)
    return Operator(m, tuple(tuple(r) for r in A), tuple(b), time_index=m)


def _symbolic_exp(spec: KolmogorovSpec, s: Expr) -> Optional[list[list[Expr]]]:
    """Entries of ``E(s)`` as expressions in ``s``; None when B is defective."""
    n = spec.n
    if is_nilpotent_exact(spec.B):
        out = [[ONE if i == j else ZERO for j in range(n)] for i in range(n)]
        P = tuple(tuple(Fraction(int(i == j)) for j in range(n)) for i in range(n))
        fact = 1
        for k in range(1, n):
            P = _exact_matmul(P, spec.B)
            fact *= k
            coef = Fraction((-1) ** k, fact)
            for i in range(n):
                for j in range(n):
                    if P[i][j] != 0:
                        out[i][j] = out[i][j] + Const(coef * P[i][j]) * s ** k
        return [[simplify(e) for e in row] for row in out]
    B = spec.B_float
    lam, V = np.linalg.eig(B)
    if np.linalg.cond(V) > EIGVEC_COND_MAX:
        return None
    W = np.linalg.inv(V)
    out = [[ZERO for _ in range(n)] for _ in range(n)]
    used = np.zeros(n, dtype=bool)
    scale = max(1.0, float(np.max(np.abs(B))))
    for k in range(n):
        if used[k]:
            continue
        used[k] = True
        P = np.outer(V[:, k], W[k, :])
        a, w = float(lam[k].real), float(lam[k].imag)
        if abs(w) <= 1e-12 * scale:
            growth = ONE if a == 0 else Exp(FloatConst(-a) * s)
            terms = [(P.real, growth)]
        else:
            # pair with the conjugate eigenvalue
            partner = next(j for j in range(n) if not used[j] and abs(lam[j] - np.conj(lam[k])) <= 1e-9 * scale)
            used[partner] = True
            decay = ONE if a == 0 else Exp(FloatConst(-a) * s)
            terms = [
                (2 * P.real, decay * Cos(FloatConst(w) * s)),
                (2 * P.imag, decay * Sin(FloatConst(w) * s)),
            ]
        for M, f in terms:
            for i in range(n):
                for j in range(n):
                    if abs(M[i, j]) > 1e-14 * scale:
                        out[i][j] = out[i][j] + FloatConst(float(M[i, j])) * f
    return [[simplify(e) for e in row] for row in out]


def build_group(spec: KolmogorovSpec) -> GroupLaw:
    """``(x, t) o (x', t') = (x' + E(t') x, t + t')`` on R^{n+1}."""
    n = spec.n
    m = n + 1
    t_left, t_right = Var(m), Var(2 * m)
    E_right = _symbolic_exp(spec, t_right)
    if E_right is None:
        return _closure_group(spec)
    E_inv = _symbolic_exp(spec, -t_left)  # E(-t) for the inverse
    comp = []
    for i in range(n):
        e: Expr = Var(m + i + 1)
        for j in range(n):
            if E_right[i][j] != ZERO:
                e = e + E_right[i][j] * Var(j + 1)
        comp.append(simplify(e))
    comp.append(t_left + t_right)
    inv = []
    for i in range(n):
        e = ZERO
        for j in range(n):
            if E_inv[i][j] != ZERO:
                e = e - E_inv[i][j] * Var(j + 1)
        inv.append(simplify(e))
    inv.append(-t_left)
    return GroupLaw(m, tuple(comp), tuple(inv), name="kolmogorov")


def _closure_group(spec: KolmogorovSpec) -> GroupLaw:
    n = spec.n

    def compose(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.empty(np.broadcast(x, y).shape)
        flat_x = np.broadcast_to(x, out.shape).reshape(-1, n + 1)
        flat_y = np.broadcast_to(y, out.shape).reshape(-1, n + 1)
        res = out.reshape(-1, n + 1)
        for r, (xx, yy) in enumerate(zip(flat_x, flat_y)):
            res[r, :n] = yy[:n] + matrix_exp(spec.B, yy[n]) @ xx[:n]
            res[r, n] = xx[n] + yy[n]
        return out

    def inverse(x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, n + 1)
        out = np.empty_like(flat)
        for r, xx in enumerate(flat):
            out[r, :n] = -matrix_exp(spec.B, -xx[n]) @ xx[:n]
            out[r, n] = -xx[n]
        return out.reshape(x.shape)

    return GroupLaw(n + 1, compose_fn=compose, inverse_fn=inverse, name="kolmogorov (numeric closure)")
