"""Lens Dirichlet solver, discrete harmonic/Green measures and maximum principles."""

import csv

import numpy as np
import pytest

from hypoliouville.config import load_config
from hypoliouville.expr import compile_expr, parse
from hypoliouville.fields import Operator
from hypoliouville.group import GroupLaw, monomial_basis
from hypoliouville.lens import (
    DiscretizationError,
    LensDomain,
    discretize,
    extract_measures,
    maximum_principle_check,
    measures_on_grid,
    representation_check,
    solve_dirichlet,
    solve_on_grid,
    total_variation,
    translated_representation_check,
)

LAP2 = Operator.laplacian(2)
LENS2 = LensDomain(2, 4.0, 1.0)


@pytest.fixture(scope="module")
def meas64():
    return extract_measures(LAP2, LENS2, 1 / 64)


@pytest.fixture(scope="module")
def remark83():
    return load_config("remark83").operator


def test_domain_validation():
    with pytest.raises(ValueError):
        LensDomain(2, 1.0, 1.0)
    with pytest.raises(ValueError):
        LensDomain(2, 4.0, 0.0)
    d = LensDomain(2)
    assert d.contains(np.zeros(2))
    assert not d.contains(np.array([1.01, 0.0]))  # half-width along e1 is eps
    assert d.contains(np.array([0.0, 2.9]))  # sqrt(25 - 16) = 3


def test_grid_structure():
    g = discretize(LAP2, LENS2, 1 / 4)
    assert np.all(g.interior[g.origin] == 0)
    assert LENS2.contains(g.interior_points).all()
    assert not LENS2.contains(g.boundary_points).any()
    # every stencil neighbour of an interior node is interior or boundary
    known = {tuple(k) for k in g.interior} | {tuple(k) for k in g.boundary}
    for k in g.interior:
        for e in np.eye(2, dtype=int):
            assert tuple(k + e) in known and tuple(k - e) in known


# ------------------------------------------------------------------- solver


def test_linear_data_reproduced_exactly():
    sol = solve_dirichlet(LAP2, LENS2, 1 / 16, 0.0, parse("x1", 2))
    assert np.max(np.abs(sol.interior_values - sol.grid.interior_points[:, 0])) <= 1e-10


def test_zero_data_gives_zero():
    sol = solve_dirichlet(LAP2, LENS2, 1 / 8, 0.0, 0.0)
    assert np.all(sol.interior_values == 0)


@pytest.mark.parametrize("u", ["x1^2 - x2^2", "x1^3 - 3*x1*x2^2"])
def test_harmonic_polynomials_reproduced(u):
    e = parse(u, 2)
    sol = solve_dirichlet(LAP2, LENS2, 1 / 16, 0.0, e)
    exact = np.broadcast_to(compile_expr(e)(sol.grid.interior_points), sol.interior_values.shape)
    assert np.max(np.abs(sol.interior_values - exact)) <= 1e-9


def test_manufactured_solution_converges_second_order():
    # exp(x1) cos(x2) is harmonic; boundary data are sampled exactly at boundary nodes
    u = lambda X: np.exp(X[..., 0]) * np.cos(X[..., 1])
    errs = []
    for h in (1 / 8, 1 / 16):
        sol = solve_dirichlet(LAP2, LENS2, h, 0.0, u)
        errs.append(np.max(np.abs(sol.interior_values - u(sol.grid.interior_points))))
    assert errs[1] < 1e-3
    assert errs[0] / errs[1] >= 3


def test_torsion_function_is_negative():
    # L u = -f with f = -1: u is minus the torsion function
    sol = solve_dirichlet(LAP2, LENS2, 1 / 16, -1.0, 0.0)
    assert np.all(sol.interior_values < 0)
    assert sol.value_at_origin == pytest.approx(np.min(sol.interior_values), rel=0.05)


def test_bump_source_with_negative_boundary_data():
    bump = lambda X: -np.exp(-np.sum(X ** 2, axis=-1))
    sol = solve_dirichlet(LAP2, LENS2, 1 / 16, bump, parse("-x1^2", 2))
    assert np.max(sol.interior_values) <= 1e-10


def test_mixed_stencil_requires_diagonal_dominance():
    L = Operator.parse([["1", "2"], ["2", "5"]], ["0", "0"])
    with pytest.raises(DiscretizationError):
        discretize(L, LENS2, 1 / 8)


def test_degenerate_operator_needs_regularisation():
    # pure rotation, no diffusion: the origin is a stagnation node cut off from the boundary
    L = Operator.parse([["0", "0"], ["0", "0"]], ["-x2", "x1"])
    with pytest.raises(DiscretizationError):
        discretize(L, LENS2, 1 / 8, reg=0.0)
    grid = discretize(L, LENS2, 1 / 8, reg=0.05)
    assert grid.reg == 0.05


def test_negative_reg_rejected():
    with pytest.raises(ValueError):
        discretize(LAP2, LENS2, 1 / 8, reg=-1.0)


def test_remark83_regularised_solve_obeys_picone_bound(remark83):
    dom = LensDomain(3)
    grid = discretize(remark83, dom, 1 / 8, reg=0.05)
    meas = measures_on_grid(grid)
    f = lambda X: np.cos(X[..., 0]) * np.sin(X[..., 1])
    sol = solve_on_grid(grid, f, parse("x1*x2 - x3", 3))
    bound = np.max(np.abs(sol.boundary_values)) + meas.nu_total * 1.0
    assert abs(sol.value_at_origin) <= bound
    assert grid.upwinded > 0  # the drift is strong enough to need upwinding somewhere


# ----------------------------------------------------------------- measures


def test_mu_is_a_probability_measure(meas64):
    assert abs(meas64.mu_total - 1) <= 1e-8
    assert meas64.nonnegative
    assert np.min(meas64.mu) >= -1e-10 and np.min(meas64.nu) >= -1e-10


def test_mu_symmetric_under_reflection(meas64):
    B = meas64.grid.boundary
    lookup = {tuple(k): w for k, w in zip(B, meas64.mu)}
    refl = np.array([lookup[(k[0], -k[1])] for k in B])
    assert np.max(np.abs(refl - meas64.mu)) <= 1e-10


def test_measures_match_direct_solves():
    # definition: mu_b is u(0) for phi = indicator of b; nu_i is u(0) for f = indicator of i
    grid = discretize(LAP2, LENS2, 1 / 2)
    meas = measures_on_grid(grid)
    NB, NI = grid.boundary.shape[0], grid.interior.shape[0]
    mu = np.empty(NB)
    for b in range(NB):
        rhs = -(grid.L_IB[:, [b]].toarray().ravel())
        mu[b] = np.linalg.solve(grid.L_II.toarray(), rhs)[grid.origin]
    nu = np.empty(NI)
    for i in range(NI):
        rhs = np.zeros(NI)
        rhs[i] = -1.0
        nu[i] = np.linalg.solve(grid.L_II.toarray(), rhs)[grid.origin]
    assert np.max(np.abs(mu - meas.mu)) <= 1e-12
    assert np.max(np.abs(nu - meas.nu)) <= 1e-12


def test_reg_notes_recorded():
    m = extract_measures(Operator.parse([["1", "0"], ["0", "0"]], ["0", "0"]), LENS2, 1 / 8, reg=0.05)
    assert any("0.05" in n for n in m.notes)
    assert any("empirically" in n for n in m.notes)
    assert m.summary()["reg"] == 0.05


def test_csv_dump(meas64, tmp_path):
    path = tmp_path / "m.csv"
    meas64.to_csv(path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["kind", "x1", "x2", "weight"]
    body = rows[1:]
    assert len(body) == meas64.mu.size + meas64.nu.size
    mu = sum(float(r[3]) for r in body if r[0] == "mu")
    assert mu == pytest.approx(meas64.mu_total, abs=1e-14)


# ----------------------------------------------------------- representation


def test_representation_of_constants(meas64):
    assert representation_check(meas64, parse("1", 2)) < 1e-8


def test_representation_of_cubic_monomials(meas64):
    worst = max(representation_check(meas64, m) for m in monomial_basis(2, 3))
    assert len(monomial_basis(2, 3)) == 10
    assert worst < 5e-3


def test_representation_harmonic(meas64):
    assert representation_check(meas64, parse("x1^2 - x2^2", 2)) < 5e-3


def test_green_mass_identity(meas64):
    # u = |x|^2: 0 = sum mu |x|^2 - 4 sum nu
    B = meas64.grid.boundary_points
    lhs = meas64.mu @ np.sum(B ** 2, axis=-1)
    assert meas64.nu_total == pytest.approx(lhs / 4, rel=1e-10)


def test_representation_error_is_second_order_for_quartic_data():
    # degree <= 3 data sit at roundoff (the stencil is exact for cubics); quartics expose O(h^2)
    u = parse("x1^4 + x2^4", 2)
    r = [representation_check(extract_measures(LAP2, LENS2, h), u) for h in (1 / 16, 1 / 32)]
    assert r[0] / r[1] >= 3


def test_translated_representation(meas64):
    G = GroupLaw.euclidean(2)
    v = parse("x1^2 - x2^2 + 3*x1*x2", 2)
    assert translated_representation_check(meas64, G, v, [1.0, 0.0]) < 5e-3
    assert translated_representation_check(meas64, G, parse("1", 2), [0.7, -2.0]) < 1e-8
    u = parse("x1^3 + x2", 2)
    assert translated_representation_check(meas64, G, u, [0.0, 0.0]) == pytest.approx(
        representation_check(meas64, u), abs=1e-14
    )


def test_total_variation_rejects_different_grids():
    a = extract_measures(LAP2, LENS2, 1 / 4)
    b = extract_measures(LAP2, LENS2, 1 / 8)
    with pytest.raises(ValueError):
        total_variation(a, b)
    assert total_variation(a, a) == {"mu": 0.0, "nu": 0.0}


@pytest.mark.slow
def test_measures_continuous_in_reg(remark83):
    # stated tolerance: TV change between reg and reg/2 below 10%
    dom = LensDomain(3)
    m1 = extract_measures(remark83, dom, 1 / 8, reg=0.05)
    m2 = extract_measures(remark83, dom, 1 / 8, reg=0.025)
    tv = total_variation(m1, m2)
    print(f"TV(mu) = {tv['mu']:.4f}, TV(nu)/|nu| = {tv['nu']:.4f}")
    assert tv["mu"] < 0.1 and tv["nu"] < 0.1


# --------------------------------------------------------- maximum principle


def test_maximum_principle_laplacian():
    rep = maximum_principle_check(LAP2, LENS2, 1 / 32, trials=20, seed=3)
    assert rep.passed and rep.worst_max <= 1e-10 and rep.picone_ok


def test_maximum_principle_remark83(remark83):
    rep = maximum_principle_check(remark83, LensDomain(3), 1 / 8, reg=0.05, trials=20, seed=3)
    assert rep.passed and rep.worst_max <= 1e-10
    assert rep.to_dict()["reg"] == 0.05
