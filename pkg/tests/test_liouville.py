"""Fundamental solutions, convolution, mollifier, cutoffs and the sharpness counterexample."""

import math

import numpy as np
import pytest

from hypoliouville.dilation import Dilation
from hypoliouville.expr import compile_expr, parse
from hypoliouville.fields import Operator
from hypoliouville.group import GroupLaw
from hypoliouville.liouville import (
    CutoffSequence,
    Mollifier,
    SupportedFunction,
    annulus_report,
    bump_expr,
    calibrate,
    convolve,
    convolve_batch,
    counterexample,
    gamma_euclidean,
    gamma_heisenberg,
    mollify,
    sample_annuli,
    sign_checks,
)
from hypoliouville.liouville.counterexample import theoretical_ratio, verdict_for
from hypoliouville.liouville.quadrature import ball_rule

# oracles: 1/(4 pi), 1/(2 pi); raw bump integrals of exp(-1/(1-|y|^2)) over the unit ball (mpmath, 15 digits)
INV_4PI = 0.0795774715459477
INV_2PI = 0.159154943091895
RAW_BUMP = {1: 0.443993816168079, 2: 0.466512393178330, 3: 0.441088887276604}


@pytest.fixture(scope="module")
def g3():
    return gamma_euclidean(3)


@pytest.fixture(scope="module")
def gh():
    return gamma_heisenberg()


def _at(e, X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.broadcast_to(compile_expr(e)(X), X.shape[:-1])


# ---------------------------------------------------------- fundamental solutions


def test_euclidean_constant(g3):
    assert abs(g3.c - INV_4PI) <= 1e-3
    assert g3.c == pytest.approx(INV_4PI, rel=1e-5)


def test_heisenberg_constant(gh):
    assert gh.c == pytest.approx(INV_2PI, rel=1e-5)
    assert gh.Q == 4


def test_euclidean_needs_three_dimensions():
    with pytest.raises(ValueError):
        gamma_euclidean(2)


def test_euclidean_kernel_harmonic_and_homogeneous(g3):
    assert abs(float(_at(g3.L_kernel(), [1.0, 1.0, 1.0])[0])) < 1e-12
    x = np.array([[0.3, -1.2, 0.8]])
    assert g3(2 * x)[0] == pytest.approx(g3(x)[0] / 2, rel=1e-14)


def test_heisenberg_kernel_solves_homogeneous_equation(gh, rng):
    assert abs(float(_at(gh.L_kernel(), [1.0, 0.0, 1.0])[0])) < 1e-9
    theta = rng.normal(size=(50, 3))
    theta /= np.linalg.norm(theta, axis=-1, keepdims=True)
    rho = lambda X: ((X[:, 0] ** 2 + X[:, 1] ** 2) ** 2 + 16 * X[:, 2] ** 2) ** 0.25
    scale = rng.uniform(0.5, 2, 50) / rho(theta)
    X = theta * scale[:, None] ** np.array([1, 1, 2])  # rho(delta_s theta) = s rho(theta)
    assert np.all((rho(X) >= 0.5 - 1e-12) & (rho(X) <= 2 + 1e-12))
    assert np.max(np.abs(_at(gh.L_kernel(), X))) < 1e-9


@pytest.mark.parametrize("name", ["g3", "gh"])
def test_kernel_invariants(name, request):
    inv = request.getfixturevalue(name).check_invariants(samples=10_000, seed=5)
    assert inv["nonnegative"] and inv["homogeneous"] and inv["decay"]
    assert inv["homogeneity_rel_error"] <= 1e-12


def test_kernel_infinite_at_origin(gh):
    assert gh(np.zeros(3)) == math.inf


def test_calibration_is_linear_in_the_kernel():
    L = Operator.laplacian(3)
    d = Dilation.isotropic(3)
    k = parse("(x1^2 + x2^2 + x3^2)^(-1/2)", 3)
    c1 = calibrate(k, L, d)
    c2 = calibrate(parse("2*(x1^2 + x2^2 + x3^2)^(-1/2)", 3), L, d)
    assert c2 == pytest.approx(c1 / 2, rel=1e-12)


def test_calibration_cross_validates_on_another_bump(gh):
    # different radius and a shifted profile
    phi = parse("exp(1 - 1/(1 - (x1^2 + x2^2 + x3^2)/1.69)) * (1 + x1/4)", 3)
    assert abs(gh.pairing_residual(phi, 1.3)) < 1e-3


def test_bump_expr_peak():
    assert float(_at(bump_expr(3, 2.0), [0, 0, 0])[0]) == pytest.approx(1.0)


# ------------------------------------------------------------------ convolution


def test_convolution_positive(gh, rng):
    f = SupportedFunction.bump(3, 0.5)
    X = rng.normal(size=(30, 3)) * 2
    vals, _ = convolve_batch(gh, f, X)
    assert np.all(vals >= 0)


def test_far_field_point_mass(g3):
    f = SupportedFunction.bump(3, 0.5, mass=1.0)
    x = np.array([20.0, 0.0, 0.0])
    ratio = convolve(g3, f, x) / g3(x[None])[0]
    assert 0.95 <= ratio <= 1.05


def test_convolution_linear(gh):
    f = SupportedFunction.bump(3, 0.5)
    for x in ([2.0, 1.0, 0.5], [0.1, 0.0, 0.05]):
        assert convolve(gh, f.scaled(3.0), x) == pytest.approx(3 * convolve(gh, f, x), rel=1e-10)


def test_convolution_translation_consistent(g3):
    # Gamma*(f(. - z))(x) = Gamma*f(x - z), the left side by an independent shifted rule
    f = SupportedFunction.bump(3, 0.5)
    x, z = np.array([3.0, 0.0, 1.0]), np.array([-0.5, 1.0, 0.25])
    rule = ball_rule(3, 0.5, 48, 24)
    shifted = rule.points + z
    ref = float(rule.integrate(f(shifted - z) * g3(x - shifted)))
    assert convolve(g3, f, x - z) == pytest.approx(ref, rel=1e-4)


def test_batch_tiers_agree_with_adaptive(gh):
    f = SupportedFunction.bump(3, 0.5)
    X = np.array([[0.1, 0.2, 0.0], [0.8, 0.3, 0.1], [2.0, -1.0, 0.4], [4.0, 0.0, 0.0], [9.0, 3.0, 20.0]])
    vals, tier = convolve_batch(gh, f, X)
    assert len(set(tier.tolist())) == 4
    ref = np.array([convolve(gh, f, x, rtol=1e-6) for x in X])
    assert np.max(np.abs(vals / ref - 1)) < 1e-3


def test_cutoff_limit_of_convolution(g3):
    f = SupportedFunction.bump(3, 0.5)
    phi = CutoffSequence()
    x = np.array([1.5, 0.0, 0.0])
    rule = ball_rule(3, 0.5, 48, 24)
    fy = f(rule.points) * g3(x - rule.points)
    vals = [float(rule.integrate(fy * phi(m, rule.points))) for m in (0.0, 0.1, 0.25, 0.5, 1.0, 2.0)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    full = float(rule.integrate(fy))
    assert abs(vals[-3] - full) <= 1e-6 * full and abs(vals[-1] - full) <= 1e-6 * full


# ---------------------------------------------------------------- cutoffs


def test_cutoff_shape_and_monotone(rng):
    phi = CutoffSequence()
    X = rng.normal(size=(5000, 2)) * 3
    r = np.linalg.norm(X, axis=-1)
    for m in range(4):
        v = phi(m, X)
        assert np.all((v >= 0) & (v <= 1))
        assert np.all(v[r <= m] == 1) and np.all(v[r >= m + 1] == 0)
        assert np.all(phi(m + 1, X) >= v)


def test_cutoff_with_homogeneous_norm(gh):
    from hypoliouville.dilation import homogeneous_norm

    phi = CutoffSequence(norm=lambda X: homogeneous_norm(gh.dilation, X))
    assert phi(1, np.array([[0.0, 0.0, 0.99]]))[0] == 1.0  # |x3|^(1/2) ~ 0.995 < 1


# ---------------------------------------------------------------- mollifier


@pytest.mark.parametrize("n", [1, 2, 3])
def test_mollifier_constant_against_oracle(n):
    for eps in (0.05, 0.1, 0.2):
        J = Mollifier(n, eps)
        assert J.constant * RAW_BUMP[n] * eps ** n == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("eps", [0.05, 0.1, 0.2])
def test_mollifier_unit_mass(eps):
    assert abs(Mollifier(3, eps).mass() - 1) <= 1e-6


def test_mollify_constants_and_linear(heis_G):
    for eps in (0.05, 0.1, 0.2):
        assert abs(mollify(parse("1", 3), heis_G, eps, [0.3, -1.0, 2.0]) - 1) <= 1e-6
    G = GroupLaw.euclidean(2)
    u = parse("3*x1 - 2*x2 + 1", 2)
    assert mollify(u, G, 0.2, [0.4, 0.9]) == pytest.approx(3 * 0.4 - 2 * 0.9 + 1, abs=1e-6)


def test_mollify_abs_decreases_to_zero():
    G = GroupLaw.euclidean(3)
    u = lambda X: np.linalg.norm(X, axis=-1)
    vals = [mollify(u, G, eps, np.zeros(3)) for eps in (0.2, 0.1, 0.05)]
    assert vals[0] > vals[1] > vals[2] > 0
    # |x| is 1-homogeneous: u_eps(0) = eps * u_1(0)
    assert vals[0] / vals[1] == pytest.approx(2.0, rel=1e-10)


def test_mollify_heisenberg_converges_monotonically(heis_G):
    u = parse("sin(x1) + x2*x3", 3)
    x = np.array([0.5, -0.2, 1.0])
    exact = float(_at(u, x)[0])
    errs = [abs(mollify(u, heis_G, eps, x) - exact) for eps in (0.2, 0.1, 0.05)]
    assert errs[0] > errs[1] > errs[2]


# ------------------------------------------------------------- counterexample


def test_theoretical_ratio_and_verdicts():
    assert theoretical_ratio(4, 2, 2) == 1.0
    assert theoretical_ratio(4, 3, 2) == 0.25
    assert theoretical_ratio(3, 3, 2) == 1.0
    assert verdict_for(0.95) == "divergent"
    assert verdict_for(0.9) == "convergent"
    assert verdict_for(0.93) == "inconclusive"


def test_counterexample_preconditions(gh):
    with pytest.raises(ValueError):
        counterexample(gh, p=0.5, samples=10, check_signs=False)
    with pytest.raises(ValueError):
        counterexample(gh, K=3, samples=10, check_signs=False)
    with pytest.raises(ValueError):
        counterexample(gh, M=1.0, samples=10, check_signs=False)


@pytest.mark.parametrize("name", ["g3", "gh"])
def test_verdict_flips_at_sharp_exponent(name, request):
    gamma = request.getfixturevalue(name)
    ps = float(gamma.Q) / (float(gamma.Q) - 2)  # 1 + 2/(Q-2)
    reps = counterexample(gamma, p=[ps - 0.5, ps, ps + 0.5], samples=2000, seed=0, check_signs=False)
    assert [r.verdict for r in reps] == ["divergent", "divergent", "convergent"]
    for r in reps:
        assert abs(r.measured_ratio - r.theoretical_ratio) <= 0.05
        assert r.p_star == pytest.approx(ps)


def test_heisenberg_p3_ratio(gh):
    r = counterexample(gh, p=3.0, samples=2000, seed=1, check_signs=False)
    assert 0.2 <= r.measured_ratio <= 0.3 and r.verdict == "convergent"


def test_counterexample_deterministic_and_reusable(gh):
    f = SupportedFunction.bump(3, 0.5)
    a = sample_annuli(gh, f, K=4, samples=300, seed=11)
    b = sample_annuli(gh, f, K=4, samples=300, seed=11)
    ra, rb = annulus_report(a, 2.0), annulus_report(b, 2.0)
    assert ra.to_dict() == rb.to_dict()
    assert a.min_u_sign_ok and a.max_u <= 0
    keys = {"Q", "p", "p_star", "annuli", "measured_ratio", "theoretical_ratio", "verdict", "seed"}
    assert keys <= set(ra.to_dict())


@pytest.mark.slow
def test_sign_checks_euclidean(g3):
    chk = sign_checks(g3, SupportedFunction.bump(3, 0.5))
    assert chk["u_nonpositive"] and chk["Lu_nonnegative"] and chk["residual_ok"]
