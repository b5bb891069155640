"""Homogeneous fundamental solutions and their calibration.

A kernel ``Gamma = c * Gamma_unit`` is accepted once ``L Gamma_unit = 0`` off
the origin, ``Gamma_unit >= 0``, and ``Gamma_unit(delta_lam x) =
lam^(2-Q) Gamma_unit(x)`` have been re-verified; ``c`` comes from
``int Gamma L*phi = -phi(0)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from ..dilation import Dilation
from ..expr import Expr, compile_expr, parse
from ..fields import Operator, apply_adjoint, apply_operator
from ..group import GroupLaw
from .quadrature import gauss_interval, polar_jacobian, sphere_rule

EXCISION_RADIUS = 1e-3
CALIBRATION_RTOL = 1e-4
CALIBRATION_BUMP_RADIUS = 2.0
MAX_REFINEMENTS = 6


class QuadratureError(RuntimeError):
    pass


def bump_expr(dim: int, radius: float = 1.0) -> Expr:
    """``exp(1 - 1/(1 - |x|^2/r^2))`` inside ``|x| < r`` (value 1 at the origin)."""
    r2 = repr(float(radius) ** 2)
    sq = " + ".join(f"x{k}^2" for k in range(1, dim + 1))
    return parse(f"exp(1 - 1/(1 - ({sq})/{r2}))", dim)


def eval_supported(e: Expr, X: np.ndarray, radius: float) -> np.ndarray:
    """Evaluate ``e`` inside the Euclidean ball ``|x| < radius`` and zero outside."""
    X = np.asarray(X, dtype=float)
    inside = np.sum(X ** 2, axis=-1) < radius ** 2
    out = np.zeros(X.shape[:-1])
    if np.any(inside):
        with np.errstate(all="ignore"):
            vals = np.broadcast_to(compile_expr(e)(X[inside]), (int(np.count_nonzero(inside)),))
        out[inside] = vals
    return out


def ball_exit_radius(d: Dilation, theta: np.ndarray, R: float, iters: int = 80) -> np.ndarray:
    """``s`` with ``|delta_s(theta)| = R`` (unique since the map is increasing in s)."""
    sig = np.array([float(s) for s in d.sigma])
    lo = np.full(theta.shape[0], -40.0)
    hi = np.full(theta.shape[0], 40.0)
    for _ in range(iters):
        mid = (lo + hi) / 2
        big = np.sum((theta * np.exp(np.outer(mid, sig))) ** 2, axis=-1) > R * R
        hi = np.where(big, mid, hi)
        lo = np.where(big, lo, mid)
    return np.exp((lo + hi) / 2)


def polar_integral(
    func, d: Dilation, R: float, radial_order: int, sphere_order: int, excise: float = EXCISION_RADIUS
) -> float:
    """``int_{|x|<R, s > excise} func(x) dx`` in homogeneous polar coordinates."""
    S = sphere_rule(d.dim, sphere_order)
    smax = ball_exit_radius(d, S.points, R)
    s, ws = gauss_interval(np.full_like(smax, excise), smax, radial_order)  # (N_theta, m)
    sig = np.array([float(v) for v in d.sigma])
    X = S.points[:, None, :] * s[..., None] ** sig
    Q = float(d.Q)
    vals = func(X.reshape(-1, d.dim)).reshape(s.shape)
    inner = np.sum(vals * ws * s ** (Q - 1), axis=-1)
    return float(np.sum(inner * polar_jacobian(d, S.points) * S.weights))


def _refined(integrand, d: Dilation, R: float, rtol: float = CALIBRATION_RTOL) -> tuple[float, int]:
    prev = None
    m, k = 16, 8
    for it in range(MAX_REFINEMENTS):
        val = polar_integral(integrand, d, R, m, k)
        if prev is not None and abs(val - prev) <= rtol * max(abs(val), 1e-300):
            return val, it
        prev = val
        m, k = 2 * m, 2 * k
    raise QuadratureError("calibration quadrature did not converge")


def adjoint_pairing(kernel: Expr, L: Operator, d: Dilation, phi: Expr, radius: float) -> float:
    """``int kernel * L*phi dx`` over the support ball of ``phi``."""
    Lphi = apply_adjoint(L, phi)
    k_fn = compile_expr(kernel)

    def integrand(X):
        with np.errstate(all="ignore"):
            return np.broadcast_to(k_fn(X), X.shape[:-1]) * eval_supported(Lphi, X, radius)

    return _refined(integrand, d, radius)[0]


def calibrate(kernel: Expr, L: Operator, d: Dilation, radius: float = CALIBRATION_BUMP_RADIUS) -> float:
    """``c = -phi(0) / int kernel L*phi`` for the internal bump ``phi``."""
    phi = bump_expr(L.dim, radius)
    denom = adjoint_pairing(kernel, L, d, phi, radius)
    if abs(denom) < 1e-14:
        raise QuadratureError("zero pairing: the kernel has the wrong homogeneity for this operator")
    return -1.0 / denom


@dataclass
class FundamentalSolution:
    name: str
    kernel: Expr  # uncalibrated, nonnegative
    operator: Operator
    group: GroupLaw
    dilation: Dilation
    c: float
    notes: list[str] = field(default_factory=list)

    @property
    def Q(self) -> Fraction:
        return self.dilation.Q

    @property
    def dim(self) -> int:
        return self.dilation.dim

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        with np.errstate(all="ignore"):
            vals = np.broadcast_to(compile_expr(self.kernel)(X), X.shape[:-1]) * self.c
        vals = np.where(np.all(X == 0, axis=-1), np.inf, vals)
        return float(vals) if vals.ndim == 0 else vals

    def L_kernel(self) -> Expr:
        """``L Gamma_unit`` symbolically (zero off the origin for a genuine kernel)."""
        return apply_operator(self.operator, self.kernel)

    def pairing_residual(self, phi: Expr, radius: float) -> float:
        """``int Gamma L*phi + phi(0)``; zero for a correctly calibrated kernel."""
        phi0 = float(np.broadcast_to(compile_expr(phi)(np.zeros((1, self.dim))), (1,))[0])
        return self.c * adjoint_pairing(self.kernel, self.operator, self.dilation, phi, radius) + phi0

    def check_invariants(self, samples: int = 10_000, seed: int = 0) -> dict:
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(samples, self.dim)) * rng.uniform(0.1, 10, size=(samples, 1))
        vals = self(X)
        lam = np.array([0.5, 2.0, 7.0])
        expo = 2 - float(self.Q)
        homog = max(
            float(np.max(np.abs(self(self.dilation.apply(l, X[:200])) / (l ** expo * vals[:200]) - 1))) for l in lam
        )
        theta = X[:200] / np.linalg.norm(X[:200], axis=-1, keepdims=True)
        near = self(theta)
        far = self(self.dilation.apply(1e3, theta))
        return {
            "nonnegative": bool(np.all(vals >= 0)),
            "min_value": float(np.min(vals)),
            "homogeneity_rel_error": homog,
            "homogeneous": homog <= 1e-12,
            # lam^(2-Q) at lam = 1e3 is exactly 1e-3 when Q = 3, so the bound is inclusive
            "decay": bool(np.all(far <= 1e-3 * near * (1 + 1e-12))),
        }


def gamma_euclidean(n: int, calibrate_now: bool = True) -> FundamentalSolution:
    """``c_n |x|^(2-n)`` for the Laplacian on R^n."""
    if n < 3:
        raise ValueError("the Euclidean kernel needs n >= 3")
    sq = " + ".join(f"x{k}^2" for k in range(1, n + 1))
    kernel = parse(f"({sq})^({2 - n}/2)", n)
    L = Operator.laplacian(n)
    d = Dilation.isotropic(n)
    c = calibrate(kernel, L, d) if calibrate_now else 1.0
    return FundamentalSolution(f"euclidean R^{n}", kernel, L, GroupLaw.euclidean(n), d, c)


def heisenberg_operator() -> Operator:
    """``X^2 + Y^2`` with ``X = d1 - (x2/2) d3``, ``Y = d2 + (x1/2) d3``."""
    return Operator.parse(
        [["1", "0", "-x2/2"], ["0", "1", "x1/2"], ["-x2/2", "x1/2", "(x1^2 + x2^2)/4"]],
        ["0", "0", "0"],
    )


def heisenberg_group() -> GroupLaw:
    return GroupLaw.parse(
        ["x1 + y1", "x2 + y2", "x3 + y3 + (x1*y2 - x2*y1)/2"], ["-x1", "-x2", "-x3"], name="heisenberg"
    )


def gamma_heisenberg(calibrate_now: bool = True) -> FundamentalSolution:
    """``c rho^-2`` with ``rho^4 = (x1^2 + x2^2)^2 + 16 x3^2`` (Q = 4)."""
    kernel = parse("((x1^2 + x2^2)^2 + 16*x3^2)^(-1/2)", 3)
    L = heisenberg_operator()
    d = Dilation((1, 1, 2))
    c = calibrate(kernel, L, d) if calibrate_now else 1.0
    return FundamentalSolution(
        "heisenberg",
        kernel,
        L,
        heisenberg_group(),
        d,
        c,
        notes=["closed-form gauge kernel; L Gamma = 0, Gamma >= 0 and homogeneity are re-verified, not assumed"],
    )
