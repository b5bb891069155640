"""Sharpness of the L^p-Liouville exponent: ``u = -Gamma * f`` over dyadic annuli.

For ``f >= 0`` with compact support, ``u`` is a nonpositive, nonzero solution
of ``L u = f >= 0``.  ``u`` behaves like ``-(int f) Gamma`` at infinity, so the
annulus integrals ``S_k = int_{M^k <= |x| < M^(k+1)} |u|^p`` form an
asymptotically geometric sequence with ratio ``M^(Q + p(2-Q))``: ``u`` is in
``L^p`` exactly when ``p > p* = 1 + 2/(Q-2)``.

Annuli use the homogeneous norm ``|x| = sum_j |x_j|^(1/sigma_j)``.  Samples
are ``x = delta_s(theta)`` with ``theta`` uniform on the Euclidean sphere and
``s`` log-uniform on ``[M^k/|theta|, M^(k+1)/|theta|)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..dilation import homogeneous_norm, sharp_exponent
from ..group import fd_apply
from .convolution import SupportedFunction, _support_extent, convolve_batch, far_field, near_field, validate_tiers
from .fundamental import FundamentalSolution
from .quadrature import ball_rule, polar_jacobian, sphere_area

DIVERGENT_AT = 0.95
CONVERGENT_AT = 0.9
DEFAULT_SAMPLES = 100_000
FD_STEP = 5e-3
FD_RTOL = 1e-2


@dataclass
class AnnulusSamples:
    """Monte Carlo nodes per annulus and the sampled ``|u|`` (reused across exponents p)."""

    M: float
    K: int
    seed: int
    Q: float
    p_star: float
    abs_u: list[np.ndarray]
    weight: list[np.ndarray]  # |S| ln M s^Q <Sigma theta, theta>
    min_u_sign_ok: bool
    max_u: float
    tiers: dict


@dataclass
class CounterexampleReport:
    Q: float
    p: float
    p_star: float
    M: float
    K: int
    seed: int
    samples: int
    annuli: list[float]
    stderr: list[float]
    measured_ratio: float
    theoretical_ratio: float
    verdict: str
    sign_checks: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "Q": self.Q,
            "p": self.p,
            "p_star": self.p_star,
            "M": self.M,
            "K": self.K,
            "seed": self.seed,
            "samples_per_annulus": self.samples,
            "annuli": self.annuli,
            "annuli_stderr": self.stderr,
            "measured_ratio": self.measured_ratio,
            "theoretical_ratio": self.theoretical_ratio,
            "verdict": self.verdict,
            "sign_checks": self.sign_checks,
        }


def verdict_for(ratio: float) -> str:
    if ratio >= DIVERGENT_AT:
        return "divergent"
    if ratio <= CONVERGENT_AT:
        return "convergent"
    return "inconclusive"


def theoretical_ratio(Q: float, p: float, M: float) -> float:
    return float(M) ** (float(Q) + float(p) * (2 - float(Q)))


def sample_annuli(
    gamma: FundamentalSolution,
    f: SupportedFunction,
    K: int = 8,
    M: float = 2.0,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
) -> AnnulusSamples:
    if K < 4:
        raise ValueError("need at least 4 annuli")
    if not M > 1:
        raise ValueError("the annulus ratio M must exceed 1")
    n = gamma.dim
    d = gamma.dilation
    sig = np.array([float(v) for v in d.sigma])
    Q = float(d.Q)
    area = sphere_area(n)
    logM = math.log(M)
    streams = np.random.SeedSequence(seed).spawn(K)
    abs_u, weight = [], []
    sign_ok = True
    max_u = -np.inf
    tier_pts = []
    for k, ss in zip(range(1, K + 1), streams):
        rng = np.random.default_rng(ss)
        theta = rng.normal(size=(samples, n))
        theta /= np.linalg.norm(theta, axis=-1, keepdims=True)
        base = np.log(M ** k / homogeneous_norm(d, theta))
        log_s = base + rng.uniform(size=samples) * logM
        s = np.exp(log_s)
        X = theta * s[:, None] ** sig
        conv, tier = convolve_batch(gamma, f, X)
        u = -conv
        sign_ok &= bool(np.all(u <= 0))
        max_u = max(max_u, float(np.max(u)))
        abs_u.append(np.abs(u))
        weight.append(area * logM * s ** Q * polar_jacobian(d, theta))
        for t in np.unique(tier):
            tier_pts.extend(X[tier == t][:2])
    tiers = validate_tiers(gamma, f, np.array(tier_pts), per_tier=2)
    p_star = float(sharp_exponent(d.Q)) if d.Q >= 3 else float("nan")
    return AnnulusSamples(float(M), K, seed, Q, p_star, abs_u, weight, sign_ok, max_u, tiers)


def annulus_report(data: AnnulusSamples, p: float, sign_checks: Optional[dict] = None) -> CounterexampleReport:
    """Annulus sums, fitted ratio and verdict for one exponent ``p`` (samples reused)."""
    if p < 1:
        raise ValueError("p must be >= 1")
    S, err = [], []
    for au, w in zip(data.abs_u, data.weight):
        vals = au ** p * w
        S.append(float(np.mean(vals)))
        err.append(float(np.std(vals, ddof=1) / math.sqrt(vals.size)))
    half = data.K // 2
    ratio = (S[-1] / S[half - 1]) ** (1.0 / (data.K - half)) if S[half - 1] > 0 else float("inf")
    Q = data.Q
    return CounterexampleReport(
        Q=Q,
        p=float(p),
        p_star=data.p_star,
        M=data.M,
        K=data.K,
        seed=data.seed,
        samples=int(data.abs_u[0].size),
        annuli=S,
        stderr=err,
        measured_ratio=float(ratio),
        theoretical_ratio=theoretical_ratio(Q, p, data.M),
        verdict=verdict_for(ratio),
        sign_checks=dict(sign_checks or {}),
    )


def sign_checks(
    gamma: FundamentalSolution,
    f: SupportedFunction,
    points: Optional[np.ndarray] = None,
    step: float = FD_STEP,
    seed: int = 0,
) -> dict:
    """``u = -Gamma*f <= 0`` and ``L u = f >= 0`` by central differences of fixed-rule quadrature values.

    A fixed rule per check point keeps the quadrature a smooth function of the
    evaluation point, so difference quotients are meaningful.  Default points:
    six inside the support, six at distance at least half a radius outside.
    """
    n = gamma.dim
    scale = f.radius / 0.5
    if points is None:
        rng = np.random.default_rng(seed)
        dirs = rng.normal(size=(12, n))
        dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
        radii = np.concatenate([np.linspace(0.1, 0.4, 6), np.linspace(0.75, 1.5, 6)]) * scale
        points = dirs * radii[:, None]
    fmax = float(np.max(f(np.zeros((1, n)))))
    outer_rule = ball_rule(n, f.radius, 64, 24)
    out = []
    for x in np.atleast_2d(points):
        if np.linalg.norm(x) < f.radius:
            # singular kernel inside the support: polar coordinates around w = 0
            extent = _support_extent(gamma, f, x) * 1.05

            def u(Y, extent=extent):
                return np.array([-near_field(gamma, f, y, 64, 24, extent) for y in np.atleast_2d(Y)])

        else:

            def u(Y):
                return -far_field(gamma, f, np.atleast_2d(Y), outer_rule)

        Lu = float(fd_apply(gamma.operator, u, x[None], h=step)[0])
        fx = float(f(x[None])[0])
        out.append({"x": x.tolist(), "u": float(u(x[None])[0]), "Lu": Lu, "f": fx, "residual": abs(Lu - fx)})
    worst = max(r["residual"] for r in out) / fmax
    return {
        "points": len(out),
        "u_nonpositive": all(r["u"] <= 0 for r in out),
        "Lu_nonnegative": all(r["Lu"] >= -FD_RTOL * fmax for r in out),
        "worst_relative_residual": worst,
        "residual_ok": worst <= FD_RTOL,
        "fd_step": step,
    }


def counterexample(
    gamma: FundamentalSolution,
    f: Optional[SupportedFunction] = None,
    p: float | Sequence[float] = 2.0,
    K: int = 8,
    M: float = 2.0,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    check_signs: bool = True,
):
    """Run the annulus experiment; a list of ``p`` reuses the same samples."""
    f = f or SupportedFunction.bump(gamma.dim, 0.5)
    ps = [p] if np.isscalar(p) else list(p)
    if any(q < 1 for q in ps):
        raise ValueError("p must be >= 1")
    data = sample_annuli(gamma, f, K, M, samples, seed)
    checks = {"u_nonpositive_on_samples": data.min_u_sign_ok, "max_u": data.max_u, "tier_errors": data.tiers}
    if check_signs:
        checks.update(sign_checks(gamma, f, seed=seed))
    reports = [annulus_report(data, q, checks) for q in ps]
    return reports[0] if np.isscalar(p) else reports
