"""Product quadrature rules: spheres, balls and homogeneous polar coordinates.

With ``x = delta_s(theta)``, ``theta`` on the Euclidean unit sphere, the
Lebesgue measure is ``dx = s^(Q-1) <Sigma theta, theta> ds dS(theta)`` where
``Sigma = diag(sigma)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from ..dilation import Dilation


@dataclass(frozen=True)
class Rule:
    points: np.ndarray  # (N, n)
    weights: np.ndarray  # (N,)

    def integrate(self, values: np.ndarray) -> np.ndarray:
        return np.tensordot(values, self.weights, axes=([-1], [0]))


@lru_cache(maxsize=None)
def _sphere(n: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    if n == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if n == 2:
        m = 2 * order
        phi = 2 * np.pi * (np.arange(m) + 0.5) / m
        return np.stack([np.cos(phi), np.sin(phi)], axis=-1), np.full(m, 2 * np.pi / m)
    # x_n = t, weight (1 - t^2)^((n-3)/2), times the rule on S^(n-2)
    a = (n - 3) / 2
    t, wt = special.roots_jacobi(order, a, a)
    P, W = _sphere(n - 1, order)
    r = np.sqrt(1 - t ** 2)
    last = np.broadcast_to(t[:, None, None], (order, P.shape[0], 1))
    pts = np.concatenate([r[:, None, None] * P[None], last], axis=-1).reshape(-1, n)
    w = (wt[:, None] * W[None]).reshape(-1)
    return pts, w


def sphere_rule(n: int, order: int = 16) -> Rule:
    """Rule on S^(n-1): Gauss-Jacobi in the last coordinate, recursively; trapezoid on circles."""
    if n < 1 or order < 1:
        raise ValueError("need n >= 1 and order >= 1")
    pts, w = _sphere(n, order)
    return Rule(pts.copy(), w.copy())


def sphere_area(n: int) -> float:
    return float(2 * np.pi ** (n / 2) / special.gamma(n / 2))


def gauss_interval(a, b, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on ``[a, b]``; ``a``, ``b`` may be arrays (broadcast on a leading axis)."""
    x, w = np.polynomial.legendre.leggauss(order)
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    half = (b - a) / 2
    return a + half * (x + 1), half * w


def ball_rule(n: int, radius: float, radial_order: int = 16, sphere_order: int = 16) -> Rule:
    """Euclidean ball ``|y| < radius``."""
    S = sphere_rule(n, sphere_order)
    r, wr = gauss_interval(0.0, radius, radial_order)
    pts = (r[:, None, None] * S.points[None]).reshape(-1, n)
    w = (wr[:, None] * r[:, None] ** (n - 1) * S.weights[None]).reshape(-1)
    return Rule(pts, w)


def polar_radius(d: Dilation, X: np.ndarray, iters: int = 80) -> np.ndarray:
    """``s`` with ``X = delta_s(theta)``, ``|theta| = 1`` (bisection in log s)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    sig = np.array([float(s) for s in d.sigma])
    nz = np.any(X != 0, axis=-1)
    lo = np.full(X.shape[0], -60.0)
    hi = np.full(X.shape[0], 60.0)
    for _ in range(iters):
        mid = (lo + hi) / 2
        scaled = X * np.exp(-np.outer(mid, sig))
        big = np.sum(scaled ** 2, axis=-1) > 1
        lo = np.where(big, mid, lo)
        hi = np.where(big, hi, mid)
    return np.where(nz, np.exp((lo + hi) / 2), 0.0)


def polar_jacobian(d: Dilation, theta: np.ndarray) -> np.ndarray:
    """``<Sigma theta, theta>``."""
    sig = np.array([float(s) for s in d.sigma])
    return np.sum(sig * theta ** 2, axis=-1)
