"""Group laws on R^n: axioms, left-invariance of operators, unimodularity."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .expr import ZERO, Expr, Var, compile_expr, diff, is_polynomial, parse, simplify, substitute, variables
from .expr.normal import from_poly, p_add, p_mul, p_neg, p_sub, to_poly
from .fields import DimensionMismatch, Operator, apply_operator

AXIOM_TOL = 1e-9
INVARIANCE_TOL = 1e-8
FD_INVARIANCE_TOL = 1e-5
SAMPLES = 200
SMOOTHNESS_NOTE = "Smoothness of the law is assumed, not verified."


class InversionError(RuntimeError):
    """Newton inversion of the law failed to converge."""


def _sample(shape, seed: int, scale: float = 1.0) -> np.ndarray:
    return np.random.default_rng(seed).uniform(-scale, scale, size=shape)


@dataclass(frozen=True)
class GroupLaw:
    """``compose[k]`` is the k-th component of ``x o y`` with ``x`` in
    variables ``1..n`` and ``y`` in ``n+1..2n``; the identity is the origin.

    Laws that have no expression form carry numeric closures instead
    (``compose_fn(x, y)`` on arrays of shape ``(..., n)``).
    """

    dim: int
    compose: Optional[tuple[Expr, ...]] = None
    inverse: Optional[tuple[Expr, ...]] = None
    compose_fn: Optional[Callable] = field(default=None, compare=False)
    inverse_fn: Optional[Callable] = field(default=None, compare=False)
    name: str = ""

    def __post_init__(self):
        n = self.dim
        if self.compose is None and self.compose_fn is None:
            raise ValueError("a group law needs compose expressions or a compose_fn")
        if self.compose is not None:
            comp = tuple(simplify(c) for c in self.compose)
            if len(comp) != n:
                raise DimensionMismatch(f"compose has {len(comp)} components, expected {n}")
            for c in comp:
                if any(v > 2 * n for v in variables(c)):
                    raise DimensionMismatch("compose may only use variables 1..2n")
            object.__setattr__(self, "compose", comp)
        if self.inverse is not None:
            inv = tuple(simplify(c) for c in self.inverse)
            if len(inv) != n:
                raise DimensionMismatch(f"inverse has {len(inv)} components, expected {n}")
            for c in inv:
                if any(v > n for v in variables(c)):
                    raise DimensionMismatch("inverse may only use variables 1..n")
            object.__setattr__(self, "inverse", inv)

    # -- constructors
    @classmethod
    def parse(
        cls,
        compose: Sequence[str],
        inverse: Optional[Sequence[str]] = None,
        time_index: Optional[int] = None,
        name: str = "",
    ) -> "GroupLaw":
        """Parse ``x o y`` written with ``x1..xn`` (left) and ``y1..yn`` (right).

        Under a time index ``t`` names the left time slot and ``s`` the right one.
        """
        n = len(compose)
        aliases = {f"y{k}": n + k for k in range(1, n + 1)}
        if time_index is not None:
            aliases["s"] = n + time_index
        comp = tuple(parse(c, n, time_index, aliases) for c in compose)
        inv = None if inverse is None else tuple(parse(c, n, time_index) for c in inverse)
        return cls(n, comp, inv, name=name)

    @classmethod
    def euclidean(cls, n: int) -> "GroupLaw":
        comp = tuple(Var(k) + Var(n + k) for k in range(1, n + 1))
        inv = tuple(-Var(k) for k in range(1, n + 1))
        return cls(n, comp, inv, name=f"euclidean R^{n}")

    def direct_sum_time(self) -> "GroupLaw":
        """``(x, t) o (x', t') = (x o x', t + t')`` on R^{n+1}."""
        if self.compose is None:
            raise ValueError("needs an expression law")
        n = self.dim
        m = n + 1
        ren = {k: Var(k) for k in range(1, n + 1)}
        ren.update({n + k: Var(m + k) for k in range(1, n + 1)})
        comp = tuple(substitute(c, ren) for c in self.compose) + (Var(m) + Var(2 * m),)
        inv = None
        if self.inverse is not None:
            inv = tuple(self.inverse) + (-Var(m),)
        return GroupLaw(m, comp, inv, name=f"{self.name} + R" if self.name else "")

    # -- properties
    def is_polynomial(self) -> bool:
        if self.compose is None:
            return False
        return all(is_polynomial(c) is not None for c in self.compose)

    def inverse_is_polynomial(self) -> bool:
        return self.inverse is not None and all(is_polynomial(c) is not None for c in self.inverse)

    # -- numerics
    def op(self, x, y) -> np.ndarray:
        """``x o y`` for arrays of shape ``(..., n)`` (broadcast)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = np.broadcast_arrays(x, y)
        if self.compose is None:
            return np.asarray(self.compose_fn(x, y), dtype=float)
        X = np.concatenate([x, y], axis=-1)
        return np.stack([compile_expr(c)(X) for c in self.compose], axis=-1)

    def _jac_y(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        n = self.dim
        if self.compose is not None:
            X = np.concatenate([x, y], axis=-1)
            J = np.empty(x.shape[:-1] + (n, n))
            for k in range(n):
                for j in range(n):
                    J[..., k, j] = compile_expr(diff(self.compose[k], n + j + 1))(X)
            return J
        h = 1e-6
        J = np.empty(x.shape[:-1] + (n, n))
        for j in range(n):
            e = np.zeros(n)
            e[j] = h
            J[..., :, j] = (self.op(x, y + e) - self.op(x, y - e)) / (2 * h)
        return J

    def inv(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.inverse is not None:
            return np.stack([compile_expr(c)(x) for c in self.inverse], axis=-1)
        if self.inverse_fn is not None:
            return np.asarray(self.inverse_fn(x), dtype=float)
        return self.newton_inverse(x)

    def newton_inverse(self, x, tol: float = 1e-12, max_iter: int = 50) -> np.ndarray:
        """Solve ``x o z = 0`` by damped Newton iteration from ``z = -x``."""
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, self.dim)
        z = -flat.copy()
        scale = np.maximum(1.0, np.max(np.abs(flat), axis=-1))
        for _ in range(max_iter):
            F = self.op(flat, z)
            res = np.max(np.abs(F), axis=-1)
            if np.all(res <= tol * scale):
                return z.reshape(x.shape)
            J = self._jac_y(flat, z)
            try:
                step = np.linalg.solve(J, F[..., None])[..., 0]
            except np.linalg.LinAlgError as exc:
                raise InversionError("singular Jacobian during inversion") from exc
            alpha = np.ones(len(flat))
            for _ in range(30):
                trial = z - alpha[:, None] * step
                ok = np.max(np.abs(self.op(flat, trial)), axis=-1) < res * (1 - 1e-4 * alpha) + 1e-300
                if np.all(ok | (res <= tol * scale)):
                    break
                alpha = np.where(ok, alpha, alpha / 2)
            z = z - alpha[:, None] * step
        F = self.op(flat, z)
        if np.all(np.max(np.abs(F), axis=-1) <= tol * scale * 10):
            return z.reshape(x.shape)
        raise InversionError("Newton inversion did not converge in %d iterations" % max_iter)


def conv_point(G: GroupLaw, y, x) -> np.ndarray:
    """``y^{-1} o x``, the argument of the convolution kernel."""
    return G.op(G.inv(y), x)


# ---------------------------------------------------------------- axioms


@dataclass
class Check:
    name: str
    method: str
    worst_residual: float
    passed: bool
    detail: str = ""

    def to_dict(self) -> dict:
        d = {"name": self.name, "method": self.method, "worst_residual": self.worst_residual, "passed": self.passed}
        if self.detail:
            d["detail"] = self.detail
        return d


@dataclass
class CheckReport:
    checks: list[Check]
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks], "notes": self.notes}


def _exact_check(name: str, residuals: Sequence[Expr], nvars: int, seed: int) -> Check:
    polys = [to_poly(r) for r in residuals]
    if all(not p for p in polys):
        return Check(name, "exact", 0.0, True)
    X = _sample((SAMPLES, nvars), seed)
    worst = max(float(np.max(np.abs(compile_expr(from_poly(p))(X)))) for p in polys if p)
    return Check(name, "exact", worst, False, "nonzero polynomial residual")


def _sampled_check(name: str, values: np.ndarray, reference: np.ndarray, tol: float = AXIOM_TOL) -> Check:
    err = np.abs(values - reference) / np.maximum(1.0, np.abs(reference))
    worst = float(np.nanmax(err)) if err.size else 0.0
    if not np.all(np.isfinite(values)):
        return Check(name, "sampled", float("inf"), False, "non-finite values")
    return Check(name, "sampled", worst, worst <= tol)


def verify_axioms(G: GroupLaw, seed: int = 0) -> CheckReport:
    """Identity, two-sided inverse and associativity of the law."""
    n = G.dim
    checks: list[Check] = []
    xs = [Var(k) for k in range(1, n + 1)]
    notes = [SMOOTHNESS_NOTE]
    if G.is_polynomial():
        right_id = [substitute(c, {n + k: ZERO for k in range(1, n + 1)}) - xs[i] for i, c in enumerate(G.compose)]
        left_id = [
            substitute(c, {**{k: ZERO for k in range(1, n + 1)}, **{n + k: Var(k) for k in range(1, n + 1)}}) - xs[i]
            for i, c in enumerate(G.compose)
        ]
        checks.append(_exact_check("identity_right", right_id, n, seed))
        checks.append(_exact_check("identity_left", left_id, n, seed))
        # associativity over x, y, z in blocks of n variables
        xy = list(G.compose)
        yz = [
            substitute(c, {**{k: Var(n + k) for k in range(1, n + 1)}, **{n + k: Var(2 * n + k) for k in range(1, n + 1)}})
            for c in G.compose
        ]
        left = [
            substitute(c, {**{k: xy[k - 1] for k in range(1, n + 1)}, **{n + k: Var(2 * n + k) for k in range(1, n + 1)}})
            for c in G.compose
        ]
        right = [substitute(c, {n + k: yz[k - 1] for k in range(1, n + 1)}) for c in G.compose]
        checks.append(_exact_check("associativity", [a - b for a, b in zip(left, right)], 3 * n, seed))
    else:
        X = _sample((SAMPLES, n), seed)
        Y = _sample((SAMPLES, n), seed + 1)
        Z = _sample((SAMPLES, n), seed + 2)
        zero = np.zeros_like(X)
        checks.append(_sampled_check("identity_right", G.op(X, zero), X))
        checks.append(_sampled_check("identity_left", G.op(zero, X), X))
        checks.append(_sampled_check("associativity", G.op(G.op(X, Y), Z), G.op(X, G.op(Y, Z))))

    if G.inverse is not None and G.is_polynomial() and G.inverse_is_polynomial():
        sub_r = {n + k: G.inverse[k - 1] for k in range(1, n + 1)}
        sub_l = {**{k: G.inverse[k - 1] for k in range(1, n + 1)}, **{n + k: Var(k) for k in range(1, n + 1)}}
        checks.append(_exact_check("inverse_right", [substitute(c, sub_r) for c in G.compose], n, seed))
        left = [substitute(c, sub_l) for c in G.compose]
        checks.append(_exact_check("inverse_left", left, n, seed))
    else:
        X = _sample((SAMPLES, n), seed + 3)
        try:
            Xi = G.inv(X)
        except InversionError as exc:
            raise InversionError(f"law is ill-posed: {exc}") from exc
        zero = np.zeros_like(X)
        method_note = "explicit inverse" if G.inverse is not None or G.inverse_fn is not None else "Newton inverse"
        c1 = _sampled_check("inverse_right", G.op(X, Xi), zero)
        c2 = _sampled_check("inverse_left", G.op(Xi, X), zero)
        c1.detail = c2.detail = method_note
        checks += [c1, c2]
    return CheckReport(checks, notes)


# ---------------------------------------------------------------- invariance


def monomial_basis(n: int, max_degree: int = 3) -> list[Expr]:
    """All monomials in ``x1..xn`` of total degree <= max_degree (including 1)."""
    out: list[Expr] = []
    for deg in range(max_degree + 1):
        for combo in itertools.combinations_with_replacement(range(1, n + 1), deg):
            e: Expr = Var(combo[0]) if combo else parse("1", 1)
            for k in combo[1:]:
                e = e * Var(k)
            out.append(simplify(e))
    return out


def fd_apply(L: Operator, func: Callable, Y: np.ndarray, h: float = 1e-3) -> np.ndarray:
    """Apply L to a numeric function of y by central differences (non-divergence form)."""
    n = L.dim
    A = L.A_at(Y)
    beta = np.stack([compile_expr(b)(Y) for b in L.effective_drift()], axis=-1)
    f0 = func(Y)
    out = np.zeros(len(Y))
    E = np.eye(n) * h
    for i in range(n):
        fp, fm = func(Y + E[i]), func(Y - E[i])
        out += A[:, i, i] * (fp - 2 * f0 + fm) / h**2
        out += beta[:, i] * (fp - fm) / (2 * h)
        if L.time_index == i + 1:
            out -= (fp - fm) / (2 * h)
        for j in range(i + 1, n):
            d = (func(Y + E[i] + E[j]) - func(Y + E[i] - E[j]) - func(Y - E[i] + E[j]) + func(Y - E[i] - E[j])) / (4 * h**2)
            out += 2 * A[:, i, j] * d
    return out


def invariance_residual(
    L: Operator, G: GroupLaw, test_basis: Optional[Sequence[Expr]] = None, seed: int = 0
) -> dict:
    """Worst ``|L_y[u(x o y)] - (Lu)(x o y)|`` over the test basis."""
    if L.dim != G.dim:
        raise DimensionMismatch(f"operator dimension {L.dim} != group dimension {G.dim}")
    n = L.dim
    basis = list(test_basis) if test_basis is not None else monomial_basis(n, 3)
    if not basis:
        raise ValueError("test basis must be nonempty")
    basis_desc = "monomials of degree <= 3" if test_basis is None else f"{len(basis)} user functions"
    y_coords = [n + k for k in range(1, n + 1)]

    if G.compose is None:
        X = _sample((SAMPLES, n), seed)
        Y = _sample((SAMPLES, n), seed + 1)
        worst = 0.0
        for u in basis:
            fu = compile_expr(u)
            Lu = compile_expr(apply_operator(L, u))
            lhs = np.array([fd_apply(L, lambda yy, x=x: fu(G.op(np.broadcast_to(x, yy.shape), yy)), y[None])[0] for x, y in zip(X, Y)])
            rhs = Lu(G.op(X, Y))
            worst = max(worst, float(np.max(np.abs(lhs - rhs) / np.maximum(1.0, np.abs(rhs)))))
        return {"worst_residual": worst, "method": "sampled-fd", "passed": worst <= FD_INVARIANCE_TOL,
                "basis": basis_desc, "n_basis": len(basis)}

    sub = {k: G.compose[k - 1] for k in range(1, n + 1)}
    exact = L.is_polynomial() and G.is_polynomial() and all(is_polynomial(u) is not None for u in basis)
    residuals = []
    for u in basis:
        u_xy = simplify(substitute(u, sub))
        lhs = apply_operator(L, u_xy, coords=y_coords)
        rhs = simplify(substitute(apply_operator(L, u), sub))
        residuals.append(from_poly(p_sub(to_poly(lhs), to_poly(rhs))))
    if exact:
        nonzero = [r for r in residuals if to_poly(r)]
        if not nonzero:
            return {"worst_residual": 0.0, "method": "exact", "passed": True, "basis": basis_desc, "n_basis": len(basis)}
        P = _sample((SAMPLES, 2 * n), seed)
        worst = max(float(np.max(np.abs(compile_expr(r)(P)))) for r in nonzero)
        return {"worst_residual": worst, "method": "exact", "passed": False, "basis": basis_desc,
                "n_basis": len(basis), "failing": len(nonzero)}
    P = _sample((SAMPLES, 2 * n), seed)
    worst = 0.0
    for r in residuals:
        v = compile_expr(r)(P)
        worst = max(worst, float(np.max(np.abs(v))))
    return {"worst_residual": worst, "method": "sampled", "passed": worst <= INVARIANCE_TOL,
            "basis": basis_desc, "n_basis": len(basis)}


# ---------------------------------------------------------------- unimodularity


def _det_poly(M: list[list[dict]]) -> dict:
    n = len(M)
    if n == 1:
        return M[0][0]
    total: dict = {}
    for j in range(n):
        if not M[0][j]:
            continue
        minor = [row[:j] + row[j + 1:] for row in M[1:]]
        term = p_mul(M[0][j], _det_poly(minor))
        total = p_add(total, term if j % 2 == 0 else p_neg(term))
    return total


def translation_jacobian(G: GroupLaw, side: str) -> list[list[Expr]]:
    """Jacobian of ``y -> x o y`` (side='left') or ``y -> y o x`` (side='right')."""
    n = G.dim
    if side == "left":
        return [[diff(G.compose[k], n + j) for j in range(1, n + 1)] for k in range(n)]
    if side == "right":
        return [[diff(G.compose[k], j) for j in range(1, n + 1)] for k in range(n)]
    raise ValueError("side must be 'left' or 'right'")


def unimodularity_check(G: GroupLaw, seed: int = 0) -> CheckReport:
    """Jacobian determinants of left and right translations are identically 1."""
    n = G.dim
    checks = []
    for side in ("left", "right"):
        name = f"{side}_translation_det"
        if G.compose is not None and G.is_polynomial():
            J = translation_jacobian(G, side)
            det = _det_poly([[to_poly(e) for e in row] for row in J])
            checks.append(_exact_check(name, [from_poly(p_sub(det, {(): 1}))], 2 * n, seed))
            continue
        P = _sample((SAMPLES, 2 * n), seed)
        x, y = P[:, :n], P[:, n:]
        if G.compose is not None:
            J = translation_jacobian(G, side)
            M = np.empty((SAMPLES, n, n))
            for k in range(n):
                for j in range(n):
                    M[:, k, j] = compile_expr(J[k][j])(P)
        else:
            h = 1e-6
            M = np.empty((SAMPLES, n, n))
            for j in range(n):
                e = np.zeros(n)
                e[j] = h
                if side == "left":
                    M[:, :, j] = (G.op(x, y + e) - G.op(x, y - e)) / (2 * h)
                else:
                    M[:, :, j] = (G.op(x + e, y) - G.op(x - e, y)) / (2 * h)
        dets = np.linalg.det(M)
        tol = AXIOM_TOL if G.compose is not None else 1e-6
        chk = _sampled_check(name, dets, np.ones_like(dets), tol)
        checks.append(chk)
    return CheckReport(checks, [SMOOTHNESS_NOTE])
