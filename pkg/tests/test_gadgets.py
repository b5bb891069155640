"""Composition gadgets F, their invariants, and the chain-rule / semilinear identities."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypoliouville.expr import is_zero, parse
from hypoliouville.fields import Operator, chain_rule_residual
from hypoliouville.liouville import (
    DomainError,
    Gadget,
    antiderivative,
    check_gadget,
    gadget_eval,
    heisenberg_operator,
    semilinear_residual,
)

# closed forms and two derivatives evaluated in sympy (17 digits)
FROZEN = [
    (Gadget("thm1", 2.0), 1.0, (0.17157287525380990, 0.58578643762690495, 1.2928932188134525)),
    (Gadget("thm1", 1.5), 2.0, (1.3742429988900499, 1.4916173636357353, 0.68883396834793371)),
    (Gadget("thm2", 0.5), 3.0, (1.0, 0.25, -0.03125)),
    (Gadget("thm3", 2.0), 0.5, (0.00023322153548441959, 0.0036481915223411244, 0.049135155071612581)),
]


@pytest.mark.parametrize("g,t,ref", FROZEN)
def test_gadget_values_against_oracle(g, t, ref):
    assert np.allclose(gadget_eval(g, t), ref, rtol=1e-12, atol=0)


def test_gadget_values_at_origin():
    assert gadget_eval(Gadget("thm1", 2.0), 0.0) == (0.0, 0.0, 0.0)
    F, F1, _ = gadget_eval(Gadget("thm2", 0.5), 0.0)
    assert F == 0.0 and F1 == 0.5
    for t in (-3.0, -1e-9, 0.0):
        assert gadget_eval(Gadget("thm3", 1.0), t) == (0.0, 0.0, 0.0)


def test_thm1_small_t_has_no_cancellation():
    # (sqrt(1+t^2)-1)^2 ~ t^4/4
    F, _, _ = gadget_eval(Gadget("thm1", 2.0), 1e-5)
    assert F == pytest.approx(1e-20 / 4, rel=1e-9)


def test_thm5_primitive():
    g = Gadget("thm5", f=parse("x1^3 + sin(x1)", 1))
    F, F1, F2 = gadget_eval(g, 2.0)
    assert F == pytest.approx(4 + 1 - np.cos(2.0), rel=1e-12)
    assert F1 == pytest.approx(8 + np.sin(2.0))
    assert F2 == pytest.approx(12 + np.cos(2.0))


def test_vectorised_matches_scalar():
    g = Gadget("thm3", 1.5)
    t = np.array([-1.0, 0.3, 4.0])
    vec = gadget_eval(g, t)
    for k, tk in enumerate(t):
        assert tuple(v[k] for v in vec) == pytest.approx(gadget_eval(g, float(tk)))


@pytest.mark.parametrize(
    "kind,p",
    [("thm1", 1.0), ("thm1", 2.5), ("thm2", 0.3), ("thm2", 0.9), ("thm3", 1.0), ("thm3", 3.0)],
)
def test_invariants_on_dense_grid(kind, p):
    rep = check_gadget(Gadget(kind, p), n=10_000)
    assert rep["passed"], rep
    if kind == "thm3":
        assert rep["c2_jump"] < 1e-4


def test_thm5_invariants():
    rep = check_gadget(Gadget("thm5", f=parse("x1^3", 1)))
    assert rep["passed"] and rep["F0"] == 0 and rep["convex"] and rep["zero_only_at_origin"]
    # f not increasing: convexity is not claimed
    rep = check_gadget(Gadget("thm5", f=parse("sin(x1)", 1)))
    assert rep["convex"] is None and not rep["zero_only_at_origin"]


def test_parameter_validation():
    with pytest.raises(ValueError):
        Gadget("thm1", 0.5)
    with pytest.raises(ValueError):
        Gadget("thm2", 1.0)
    with pytest.raises(ValueError):
        Gadget("thm5")
    with pytest.raises(ValueError):
        Gadget("thm9")


def test_domain_errors():
    with pytest.raises(DomainError):
        gadget_eval(Gadget("thm2", 0.5), -0.1)
    with pytest.raises(DomainError):
        gadget_eval(Gadget("thm1", 2.0), np.inf)


@settings(max_examples=50, deadline=None)
@given(st.floats(1.0, 6.0), st.floats(-40, 40))
def test_thm1_bound_property(p, t):
    F, _, F2 = gadget_eval(Gadget("thm1", p), t)
    assert 0 <= F <= abs(t) ** p * (1 + 1e-12)
    if abs(t) > 1e-6:  # F'' ~ t^(2p-2) underflows below this
        assert F2 > 0


# ---------------------------------------------------------------- identities


def _random_poly(rng, nvars, max_deg, terms):
    out = []
    for _ in range(terms):
        c = int(rng.integers(-3, 4)) or 1
        mono = "*".join(f"x{v}^{int(rng.integers(0, max_deg + 1))}" for v in range(1, nvars + 1))
        out.append(f"({c})*{mono}")
    return " + ".join(out)


@pytest.mark.parametrize("name", ["euclidean", "heisenberg"])
def test_chain_rule_on_random_polynomial_pairs(name):
    L = Operator.laplacian(3) if name == "euclidean" else heisenberg_operator()
    rng = np.random.default_rng(17)
    for _ in range(20):
        F = parse(_random_poly(rng, 1, 4, 3), 1)
        u = parse(_random_poly(rng, 3, 2, 3), 3)
        assert is_zero(chain_rule_residual(L, F, u))


def test_antiderivative():
    F = antiderivative(parse("3*x1^2 + 1", 1))
    assert is_zero(F - parse("x1^3 + x1", 1))
    with pytest.raises(ValueError):
        antiderivative(parse("sin(x1)", 1))


@pytest.mark.parametrize(
    "L,f,u",
    [
        # L u = u (f(s) = s)
        (Operator.parse([["1"]], ["0"]), "x1", "exp(x1)"),
        # L u = lambda u
        (Operator.parse([["1"]], ["0"]), "4*x1", "exp(2*x1)"),
        # L u = |u|^(p-1) u with p = 3 on x1 > 0
        (Operator.parse([["1"]], ["0"]), "x1^3", "2^(1/2)/x1"),
        # heat-type operator with a time variable
        (Operator.parse([["1", "0"], ["0", "0"]], ["0", "0"], 2), "x1", "exp(2*x1 + 3*x2)"),
    ],
)
def test_semilinear_identity_on_manufactured_instances(L, f, u):
    rep = semilinear_residual(L, parse(f, 1), parse(u, L.dim))
    assert rep.equation_holds and rep.identity_holds and rep.chain_holds


def test_semilinear_identity_fails_off_solutions():
    L = Operator.parse([["1", "0"], ["0", "0"]], ["0", "0"], 2)
    rep = semilinear_residual(L, parse("x1", 1), parse("exp(x1 + x2)", 2))
    assert not rep.equation_holds and not rep.identity_holds and rep.chain_holds


def test_semilinear_rejects_wrong_primitive():
    with pytest.raises(ValueError):
        semilinear_residual(Operator.laplacian(1), parse("x1", 1), parse("x1", 1), F=parse("x1^2", 1))
