"""Group convolution ``Gamma * f(x) = int Gamma(y^-1 o x) f(y) dy`` and the mollifier.

Two fixed-rule evaluators are combined:

* far field (``x`` well outside the support): a product Gauss rule over the
  support ball in ``y``;
* near field: ``Gamma * f(x) = int Gamma(w) f(x o w^-1) dw`` (valid for
  unimodular laws) in homogeneous polar coordinates around ``w = 0``, where
  the kernel singularity is absorbed by the Jacobian ``s^(Q-1)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from ..dilation import Dilation
from ..expr import Expr, compile_expr
from ..group import GroupLaw
from .fundamental import EXCISION_RADIUS, FundamentalSolution, QuadratureError, bump_expr, eval_supported
from .quadrature import Rule, ball_rule, gauss_interval, polar_jacobian, polar_radius, sphere_rule

CONVOLUTION_RTOL = 1e-4
CONVOLUTION_LEVELS = 5  # rule doublings; the finest rule has ~6e6 nodes
CHUNK = 2_000_000  # pair evaluations per block


@dataclass(frozen=True)
class SupportedFunction:
    """``f`` given by an expression inside the Euclidean ball ``|y| < radius`` and zero outside."""

    expr: Expr
    radius: float
    scale: float = 1.0

    def __call__(self, Y) -> np.ndarray:
        return self.scale * eval_supported(self.expr, np.asarray(Y, dtype=float), self.radius)

    def scaled(self, c: float) -> "SupportedFunction":
        return SupportedFunction(self.expr, self.radius, self.scale * c)

    @classmethod
    def bump(cls, dim: int, radius: float = 0.5, mass: Optional[float] = None) -> "SupportedFunction":
        """Smooth bump with value 1 at 0, or normalised to the given mass."""
        f = cls(bump_expr(dim, radius), radius)
        if mass is not None:
            rule = ball_rule(dim, radius, 48, 24)
            f = f.scaled(mass / float(rule.integrate(f(rule.points))))
        return f


# ----------------------------------------------------------------- far field


def far_field(gamma: FundamentalSolution, f: SupportedFunction, X: np.ndarray, rule: Rule) -> np.ndarray:
    """``sum_j w_j f(y_j) Gamma(y_j^-1 o x)`` for a stack of points ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    fy = f(rule.points)
    keep = fy != 0
    Y, wf = rule.points[keep], rule.weights[keep] * fy[keep]
    Yinv = gamma.group.inv(Y)
    out = np.empty(X.shape[0])
    step = max(1, CHUNK // max(1, Y.shape[0]))
    for a in range(0, X.shape[0], step):
        blk = X[a : a + step]
        W = gamma.group.op(Yinv[None, :, :], blk[:, None, :])
        out[a : a + step] = gamma(W) @ wf
    return out


# ---------------------------------------------------------------- near field


def _support_extent(gamma: FundamentalSolution, f: SupportedFunction, x: np.ndarray) -> float:
    """Largest polar radius of ``y^-1 o x`` over the support of ``f`` (with margin)."""
    S = sphere_rule(gamma.dim, 12)
    r = np.linspace(0, f.radius, 9)[1:]
    Y = (r[:, None, None] * S.points[None]).reshape(-1, gamma.dim)
    Y = np.vstack([np.zeros((1, gamma.dim)), Y])
    W = gamma.group.op(gamma.group.inv(Y), np.broadcast_to(x, Y.shape))
    return float(1.1 * np.max(polar_radius(gamma.dilation, W)))


def near_field(
    gamma: FundamentalSolution,
    f: SupportedFunction,
    x,
    radial_order: int = 48,
    sphere_order: int = 24,
    extent: Optional[float] = None,
    excise: float = EXCISION_RADIUS,
) -> float:
    """``int Gamma(w) f(x o w^-1) dw`` over ``excise < s < extent`` in polar coordinates."""
    x = np.asarray(x, dtype=float)
    d = gamma.dilation
    if extent is None:
        extent = _support_extent(gamma, f, x)
    S = sphere_rule(d.dim, sphere_order)
    s, ws = gauss_interval(excise, extent, radial_order)
    sig = np.array([float(v) for v in d.sigma])
    Wp = (S.points[:, None, :] * s[:, None] ** sig[None, None, :]).reshape(-1, d.dim)
    Q = float(d.Q)
    G = gamma(Wp)
    Z = gamma.group.op(np.broadcast_to(x, Wp.shape), gamma.group.inv(Wp))
    vals = (G * f(Z)).reshape(S.points.shape[0], -1)
    inner = vals @ (ws * s ** (Q - 1))
    return float(np.sum(inner * polar_jacobian(d, S.points) * S.weights))


def _is_far(f: SupportedFunction, x: np.ndarray) -> bool:
    return float(np.linalg.norm(x)) >= 2 * f.radius


def convolve(gamma: FundamentalSolution, f: SupportedFunction, x, rtol: float = CONVOLUTION_RTOL) -> float:
    """Adaptive ``Gamma * f(x)``: rule orders double until the relative change is below ``rtol``."""
    x = np.asarray(x, dtype=float)
    far = _is_far(f, x)
    extent = None if far else _support_extent(gamma, f, x)
    m, k = 12, 8
    prev = None
    for _ in range(CONVOLUTION_LEVELS):
        if far:
            val = float(far_field(gamma, f, x[None], ball_rule(gamma.dim, f.radius, m, k))[0])
        else:
            val = near_field(gamma, f, x, 2 * m, k, extent)
        if prev is not None and abs(val - prev) <= rtol * max(abs(val), 1e-300):
            return val
        prev = val
        m, k = 2 * m, 2 * k
    raise QuadratureError(f"convolution at {x.tolist()} did not converge")


# ------------------------------------------------------------- tiered batch

# (q_max, radial order, sphere order) with q = support radius / distance to the support
FAR_TIERS = ((0.05, 10, 6), (0.25, 16, 10), (1.0, 32, 16))


def _tier_of(f: SupportedFunction, X: np.ndarray) -> np.ndarray:
    dist = np.linalg.norm(X, axis=-1) - f.radius
    q = np.where(dist > 0, f.radius / np.maximum(dist, 1e-300), np.inf)
    tier = np.full(X.shape[0], len(FAR_TIERS), dtype=int)
    for t in reversed(range(len(FAR_TIERS))):
        tier = np.where(q <= FAR_TIERS[t][0], t, tier)
    return tier


def convolve_batch(gamma: FundamentalSolution, f: SupportedFunction, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-rule ``Gamma * f`` at many points; returns values and the tier used per point.

    Tier ``len(FAR_TIERS)`` means the near-field rule.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    tier = _tier_of(f, X)
    out = np.empty(X.shape[0])
    for t, (_, m, k) in enumerate(FAR_TIERS):
        sel = tier == t
        if np.any(sel):
            out[sel] = far_field(gamma, f, X[sel], ball_rule(gamma.dim, f.radius, m, k))
    for i in np.nonzero(tier == len(FAR_TIERS))[0]:
        out[i] = near_field(gamma, f, X[i])
    return out, tier


def validate_tiers(gamma: FundamentalSolution, f: SupportedFunction, X: np.ndarray, per_tier: int = 4) -> dict:
    """Relative error of each fixed tier against the adaptive evaluator on a few of the given points."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    vals, tier = convolve_batch(gamma, f, X)
    report = {}
    for t in range(len(FAR_TIERS) + 1):
        idx = np.nonzero(tier == t)[0][:per_tier]
        if idx.size == 0:
            continue
        ref = np.array([convolve(gamma, f, X[i], rtol=1e-6) for i in idx])
        report[str(t)] = float(np.max(np.abs(vals[idx] - ref) / np.abs(ref)))
    return report


# ----------------------------------------------------------------- mollifier


@dataclass(frozen=True)
class Mollifier:
    """``J_eps(y) = c_eps exp(-1/(1 - |y/eps|^2))`` supported in ``|y| < eps``."""

    dim: int
    eps: float
    radial_order: int = 32
    sphere_order: int = 16

    def _raw(self, Y: np.ndarray) -> np.ndarray:
        r2 = np.sum(Y ** 2, axis=-1) / self.eps ** 2
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            return np.where(r2 < 1, np.exp(-1 / (1 - r2)), 0.0)

    @property
    def rule(self) -> Rule:
        return ball_rule(self.dim, self.eps, self.radial_order, self.sphere_order)

    @property
    def constant(self) -> float:
        R = self.rule
        return 1.0 / float(R.integrate(self._raw(R.points)))

    def __call__(self, Y) -> np.ndarray:
        return self.constant * self._raw(np.asarray(Y, dtype=float))

    def mass(self, radial_order: int = 96, sphere_order: int = 48) -> float:
        """``int J_eps`` on an independent, finer rule."""
        R = ball_rule(self.dim, self.eps, radial_order, sphere_order)
        return float(R.integrate(self(R.points)))


def mollify(u: Union[Expr, Callable], G: GroupLaw, eps: float, x, mollifier: Optional[Mollifier] = None) -> float:
    """``u_eps(x) = int u(y o x) J_eps(y) dy``."""
    x = np.asarray(x, dtype=float)
    J = mollifier or Mollifier(G.dim, eps)
    R = J.rule
    pts = G.op(R.points, np.broadcast_to(x, R.points.shape))
    if isinstance(u, Expr):
        fn = compile_expr(u)
        vals = np.broadcast_to(fn(pts), pts.shape[:-1])
    else:
        vals = np.asarray(u(pts), dtype=float)
    return float(R.integrate(vals * J(R.points)))
