"""Dilations, homogeneity, Q and p*, homogeneous norm."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypoliouville.dilation import (
    Dilation,
    automorphism_check,
    homogeneity_degree,
    homogeneous_norm,
    sharp_exponent,
)
from hypoliouville.fields import Operator
from hypoliouville.group import GroupLaw


def test_heat_dilation():
    d = Dilation((1, 1, 2))
    assert np.allclose(d.apply(3.0, [1.0, -2.0, 0.5]), [3.0, -6.0, 4.5])


def test_apply_identity_and_composition(rng):
    d = Dilation((1, Fraction(3, 2), 2))
    x = rng.normal(size=(50, 3))
    assert np.array_equal(d.apply(1.0, x), x)
    assert np.allclose(d.apply(3.0, d.apply(2.0, x)), d.apply(6.0, x), rtol=1e-12)


def test_apply_rejects_nonpositive():
    with pytest.raises(ValueError):
        Dilation((1, 1)).apply(0.0, [1.0, 1.0])


def test_sigma_must_be_at_least_one():
    with pytest.raises(ValueError):
        Dilation((Fraction(1, 2), 1))


def test_automorphism(heis_G):
    assert automorphism_check(Dilation((1, 1, 2)), heis_G).passed
    assert automorphism_check(Dilation.isotropic(3), GroupLaw.euclidean(3)).passed
    bad = automorphism_check(Dilation((1, 1, 1)), heis_G)
    assert not bad.passed and bad.checks[0].method == "exact"


def test_homogeneity_degree(heis_L):
    assert homogeneity_degree(heis_L, Dilation((1, 1, 2))) == 2
    heat = Operator.parse([["1", "0", "0"], ["0", "1", "0"], ["0", "0", "0"]], ["0", "0", "0"], 3)
    assert homogeneity_degree(heat, Dilation((1, 1, 2))) == 2
    assert homogeneity_degree(Operator.laplacian(2), Dilation((1, 2))) is None


def test_homogeneity_degree_nonpolynomial():
    # sqrt(x1^4) d11 = x1^2 d11 scaled by delta_lambda(x) = lambda x: degree 0
    L = Operator.parse([["sqrt(x1^4)"]], ["0"])
    assert not L.is_polynomial()
    assert homogeneity_degree(L, Dilation((1,))) == 0


def test_homogeneity_scale_invariant(heis_L):
    assert homogeneity_degree(heis_L.scaled(Fraction(7, 3)), Dilation((1, 1, 2))) == 2


def test_sharp_exponent_values():
    assert sharp_exponent(4) == 2
    assert sharp_exponent(3) == 3
    assert sharp_exponent(Dilation((1, 1, 2)).heat_lift().Q) == Fraction(3, 2)
    with pytest.raises(ValueError):
        sharp_exponent(2)


def test_sharp_exponent_decreasing():
    vals = [sharp_exponent(Q) for Q in (3, 4, 6, 10, 100)]
    assert all(a > b for a, b in zip(vals, vals[1:])) and vals[-1] - 1 < Fraction(1, 40)


def test_heat_lift_adds_two():
    d = Dilation((1, 1, 2))
    assert d.heat_lift().Q == d.Q + 2


def test_homogeneous_norm_examples():
    assert homogeneous_norm(Dilation((1, 1)), [3.0, 4.0]) == 7.0
    assert homogeneous_norm(Dilation((1, 2)), [0.0, 4.0]) == 2.0
    assert homogeneous_norm(Dilation((1, 2)), [0.0, 0.0]) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10, allow_subnormal=False), min_size=3, max_size=3), st.floats(0.01, 100))
def test_norm_homogeneity(x, lam):
    d = Dilation((1, Fraction(3, 2), 2))
    n1 = homogeneous_norm(d, d.apply(lam, x))
    n0 = homogeneous_norm(d, x)
    assert n1 == pytest.approx(lam * n0, rel=1e-12, abs=1e-300)
