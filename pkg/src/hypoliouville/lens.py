"""Finite-difference Dirichlet problems on the lens ``D(R e1, R+eps) ∩ D(-R e1, R+eps)``.

The discrete operator is assembled on the grid ``hZ^n`` (the origin is a node).
Interior nodes lie strictly inside the lens; boundary nodes are the outside
grid points reached by an interior stencil.  Rows of the inverse operator at
the origin give the discrete harmonic measure ``mu`` (boundary nodes) and the
Green measure ``nu`` (interior nodes):

    u(0) = sum_b mu_b u(b) - sum_i nu_i (L u)(i).
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import splu

from .expr import Expr, compile_expr
from .fields import DimensionMismatch, Operator, apply_operator
from .group import GroupLaw

DEFAULT_R = 4.0
DEFAULT_EPS = 1.0
DEFAULT_H = {2: 1 / 64, 3: 1 / 16}
DEFAULT_REG = 0.05
SIGN_TOL = 1e-10
GEOMETRY_NOTE = (
    "R and eps are chosen empirically; the exterior-ball condition on the lens is not verified."
)

Data = Union[Expr, Callable, float, int]


class DiscretizationError(ValueError):
    """The discrete operator is not an irreducibly diagonally dominant M-matrix."""


@dataclass(frozen=True)
class LensDomain:
    dim: int
    R: float = DEFAULT_R
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if not 0 < self.eps < self.R:
            raise ValueError("need 0 < eps < R")

    @property
    def radius(self) -> float:
        return self.R + self.eps

    def contains(self, X) -> np.ndarray:
        """Strict membership, vectorised over the last axis."""
        X = np.asarray(X, dtype=float)
        r2 = self.radius ** 2
        rest = np.sum(X[..., 1:] ** 2, axis=-1)
        return ((X[..., 0] - self.R) ** 2 + rest < r2) & ((X[..., 0] + self.R) ** 2 + rest < r2)

    def half_widths(self) -> np.ndarray:
        side = np.sqrt(self.radius ** 2 - self.R ** 2)
        return np.array([self.eps] + [side] * (self.dim - 1))


@dataclass
class GridDiscretization:
    domain: LensDomain
    h: float
    interior: np.ndarray  # integer multi-indices, shape (NI, n)
    boundary: np.ndarray  # shape (NB, n)
    origin: int  # row of the origin in ``interior``
    L_II: sparse.csc_matrix
    L_IB: sparse.csr_matrix
    operator: Operator
    reg: float
    upwinded: int = 0

    @property
    def interior_points(self) -> np.ndarray:
        return self.interior * self.h

    @property
    def boundary_points(self) -> np.ndarray:
        return self.boundary * self.h

    def __post_init__(self):
        self._lu = None

    @property
    def lu(self):
        if self._lu is None:
            try:
                self._lu = splu(self.L_II.tocsc())
            except RuntimeError as exc:
                raise DiscretizationError(f"singular discrete system: {exc}") from exc
        return self._lu


@dataclass
class DiscreteSolution:
    grid: GridDiscretization
    interior_values: np.ndarray
    boundary_values: np.ndarray

    @property
    def value_at_origin(self) -> float:
        return float(self.interior_values[self.grid.origin])

    @property
    def max_interior(self) -> float:
        return float(np.max(self.interior_values))


@dataclass
class DiscreteMeasures:
    grid: GridDiscretization
    mu: np.ndarray
    nu: np.ndarray
    notes: list[str] = field(default_factory=list)

    @property
    def mu_total(self) -> float:
        return float(np.sum(self.mu))

    @property
    def nu_total(self) -> float:
        return float(np.sum(self.nu))

    @property
    def min_weight(self) -> float:
        return float(min(np.min(self.mu), np.min(self.nu)))

    @property
    def nonnegative(self) -> bool:
        return self.min_weight >= -SIGN_TOL

    def summary(self) -> dict:
        return {
            "h": self.grid.h,
            "R": self.grid.domain.R,
            "eps": self.grid.domain.eps,
            "reg": self.grid.reg,
            "n_interior": int(self.nu.size),
            "n_boundary": int(self.mu.size),
            "mu_total": self.mu_total,
            "nu_total": self.nu_total,
            "min_weight": self.min_weight,
            "upwinded_rows": self.grid.upwinded,
            "notes": list(self.notes),
        }

    def to_csv(self, path) -> None:
        n = self.grid.domain.dim
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind"] + [f"x{k + 1}" for k in range(n)] + ["weight"])
            for pts, wts, kind in (
                (self.grid.boundary_points, self.mu, "mu"),
                (self.grid.interior_points, self.nu, "nu"),
            ):
                for p, v in zip(pts, wts):
                    w.writerow([kind] + [repr(float(c)) for c in p] + [repr(float(v))])


# ------------------------------------------------------------------ assembly


def _offsets(n: int, mixed: bool) -> list[tuple[int, ...]]:
    out = []
    for i in range(n):
        for s in (1, -1):
            e = [0] * n
            e[i] = s
            out.append(tuple(e))
    if mixed:
        for i, j in itertools.combinations(range(n), 2):
            for si, sj in itertools.product((1, -1), repeat=2):
                e = [0] * n
                e[i], e[j] = si, sj
                out.append(tuple(e))
    return out


def _eval(e: Expr, X: np.ndarray) -> np.ndarray:
    return np.broadcast_to(np.asarray(compile_expr(e)(X), dtype=float), X.shape[:-1]).copy()


def discretize(L: Operator, dom: LensDomain, h: Optional[float] = None, reg: float = 0.0) -> GridDiscretization:
    """Assemble ``L + reg * Laplacian`` on the lens.

    Second differences are centred; mixed derivatives use the sign-aware
    seven-point stencil; first-order terms are centred unless that would make
    an off-diagonal weight negative, in which case that node and axis is
    upwinded.
    """
    n = dom.dim
    if L.dim != n:
        raise DimensionMismatch(f"operator dimension {L.dim} != domain dimension {n}")
    if reg < 0:
        raise ValueError("reg must be nonnegative")
    h = float(h if h is not None else DEFAULT_H.get(n, 1 / 8))
    Lr = L.regularized(reg) if reg else L

    half = dom.half_widths()
    kmax = np.floor(half / h).astype(int) + 2
    axes = [np.arange(-k, k + 1) for k in kmax]
    K = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    inside = dom.contains(K * h)
    interior = K[inside]
    if interior.shape[0] == 0:
        raise DiscretizationError("no interior nodes; decrease h")

    mixed_pairs = [(i, j) for i, j in itertools.combinations(range(n), 2) if not _is_zero_coef(Lr.A[i][j])]
    offsets = _offsets(n, bool(mixed_pairs))
    off_index = {o: k for k, o in enumerate(offsets)}

    X = interior * h
    NI = X.shape[0]
    a = np.zeros((NI, n, n))
    for i in range(n):
        for j in range(i, n):
            if not _is_zero_coef(Lr.A[i][j]):
                a[:, i, j] = a[:, j, i] = _eval(Lr.A[i][j], X)
    beta = np.zeros((NI, n))
    for j, e in enumerate(Lr.effective_drift()):
        if not _is_zero_coef(e):
            beta[:, j] = _eval(e, X)
    if Lr.time_index is not None:
        beta[:, Lr.time_index - 1] -= 1.0

    W = np.zeros((NI, len(offsets)))
    centre = np.zeros(NI)
    h2 = h * h
    for i in range(n):
        W[:, off_index[_unit(n, i, 1)]] += a[:, i, i] / h2
        W[:, off_index[_unit(n, i, -1)]] += a[:, i, i] / h2
        centre -= 2 * a[:, i, i] / h2
    for i, j in mixed_pairs:
        c = np.abs(a[:, i, j])  # the PDE term is 2 a_ij d_ij
        pos = a[:, i, j] >= 0
        for si, sj in itertools.product((1, -1), repeat=2):
            o = off_index[_pair(n, i, j, si, sj)]
            use = pos if si == sj else ~pos
            W[:, o] += np.where(use, c / h2, 0.0)
        for k in (i, j):
            for s in (1, -1):
                W[:, off_index[_unit(n, k, s)]] -= c / h2
        centre += 2 * c / h2
    upwinded = 0
    for i in range(n):
        plus, minus = off_index[_unit(n, i, 1)], off_index[_unit(n, i, -1)]
        slack = np.minimum(W[:, plus], W[:, minus])
        if np.any(slack < -SIGN_TOL / h2):
            raise DiscretizationError(
                f"diffusion matrix is not diagonally dominant along axis {i + 1}; mixed stencil loses monotonicity"
            )
        b = beta[:, i]
        centred = slack >= np.abs(b) / (2 * h)
        upwinded += int(np.count_nonzero(~centred & (b != 0)))
        W[:, plus] += np.where(centred, b / (2 * h), np.where(b > 0, b / h, 0.0))
        W[:, minus] += np.where(centred, -b / (2 * h), np.where(b < 0, -b / h, 0.0))
        centre -= np.where(centred, 0.0, np.abs(b) / h)

    # neighbour classification
    lo = K.min(axis=0)
    shape = tuple(K.max(axis=0) - lo + 1)
    index = np.full(shape, -1, dtype=np.int64)
    index[tuple((interior - lo).T)] = np.arange(NI)
    rows_I, cols_I, vals_I = [np.arange(NI)], [np.arange(NI)], [centre]
    rows_B, keys_B, vals_B = [], [], []
    for o, k in off_index.items():
        w = W[:, k]
        nz = w != 0
        if not np.any(nz):
            continue
        nb = interior[nz] + np.array(o)
        idx = index[tuple((nb - lo).T)]
        r = np.nonzero(nz)[0]
        is_int = idx >= 0
        rows_I.append(r[is_int])
        cols_I.append(idx[is_int])
        vals_I.append(w[nz][is_int])
        rows_B.append(r[~is_int])
        keys_B.append(nb[~is_int])
        vals_B.append(w[nz][~is_int])
    keys = np.concatenate(keys_B) if keys_B else np.zeros((0, n), dtype=int)
    boundary, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = np.asarray(inv).reshape(-1)
    L_II = sparse.csc_matrix(
        (np.concatenate(vals_I), (np.concatenate(rows_I), np.concatenate(cols_I))), shape=(NI, NI)
    )
    L_IB = sparse.csr_matrix(
        (np.concatenate(vals_B) if vals_B else np.zeros(0), (np.concatenate(rows_B) if rows_B else np.zeros(0, int), inv)),
        shape=(NI, boundary.shape[0]),
    )
    origin = int(index[tuple(-lo)])
    if origin < 0:
        raise DiscretizationError("the origin is not an interior node")
    grid = GridDiscretization(dom, h, interior, boundary, origin, L_II, L_IB, Lr, float(reg), upwinded)
    _check_m_matrix(grid)
    return grid


def _is_zero_coef(e: Expr) -> bool:
    from .expr import ZERO

    return e == ZERO


def _unit(n: int, i: int, s: int) -> tuple[int, ...]:
    e = [0] * n
    e[i] = s
    return tuple(e)


def _pair(n: int, i: int, j: int, si: int, sj: int) -> tuple[int, ...]:
    e = [0] * n
    e[i], e[j] = si, sj
    return tuple(e)


def _check_m_matrix(grid: GridDiscretization) -> None:
    """Nonnegative off-diagonals, nonpositive row sums, and every row chained to a strict row."""
    L = grid.L_II.tocsr()
    diag = L.diagonal()
    off = L - sparse.diags(diag)
    if off.nnz and off.data.min() < -SIGN_TOL:
        raise DiscretizationError("negative off-diagonal weight; decrease h or increase reg")
    if grid.L_IB.nnz and grid.L_IB.data.min() < -SIGN_TOL:
        raise DiscretizationError("negative boundary weight; decrease h or increase reg")
    row_sums = np.asarray(L.sum(axis=1)).ravel() + np.asarray(grid.L_IB.sum(axis=1)).ravel()
    scale = np.max(np.abs(diag))
    if np.any(row_sums > 1e-12 * scale):
        raise DiscretizationError("positive row sum: discrete operator is not diagonally dominant")
    strict = np.asarray(grid.L_IB.sum(axis=1)).ravel() > 0
    if not np.any(strict):
        raise DiscretizationError("no interior row couples to the boundary")
    # rows reachable backwards from strict rows along nonzero couplings
    NI = L.shape[0]
    adj = (abs(off) > 0).astype(np.int8).T.tocsr()  # edge j -> i when row i uses column j
    source = sparse.csr_matrix((np.ones(np.count_nonzero(strict)), (np.zeros(np.count_nonzero(strict), int), np.nonzero(strict)[0] + 1)), shape=(1, NI + 1))
    aug = sparse.vstack([source, sparse.hstack([sparse.csr_matrix((NI, 1)), adj])]).tocsr()
    order = csgraph.breadth_first_order(aug, 0, directed=True, return_predecessors=False)
    if order.size - 1 < NI:
        raise DiscretizationError(
            f"{NI - (order.size - 1)} interior nodes are not connected to the boundary; increase reg"
        )


# -------------------------------------------------------------------- solves


def _values(data: Data, X: np.ndarray) -> np.ndarray:
    if isinstance(data, Expr):
        return _eval(data, X)
    if callable(data):
        return np.broadcast_to(np.asarray(data(X), dtype=float), X.shape[:-1]).copy()
    return np.full(X.shape[0], float(data))


def solve_on_grid(grid: GridDiscretization, f: Data, phi: Data) -> DiscreteSolution:
    """Solve ``L_h u = -f`` at interior nodes with ``u = phi`` at boundary nodes."""
    fv = _values(f, grid.interior_points)
    pv = _values(phi, grid.boundary_points)
    rhs = -fv - grid.L_IB @ pv
    u = grid.lu.solve(rhs)
    if not np.all(np.isfinite(u)):
        raise DiscretizationError("non-finite discrete solution")
    return DiscreteSolution(grid, u, pv)


def solve_dirichlet(
    L: Operator, dom: LensDomain, h: Optional[float], f: Data, phi: Data, reg: float = 0.0
) -> DiscreteSolution:
    return solve_on_grid(discretize(L, dom, h, reg), f, phi)


def measures_on_grid(grid: GridDiscretization) -> DiscreteMeasures:
    """One adjoint solve for the origin-evaluation functional."""
    e0 = np.zeros(grid.L_II.shape[0])
    e0[grid.origin] = 1.0
    g = grid.lu.solve(e0, trans="T")
    nu = -g
    mu = -(grid.L_IB.T @ g)
    notes = [GEOMETRY_NOTE]
    if grid.reg:
        notes.append(f"measures of the regularised operator L + {grid.reg} Laplacian")
    return DiscreteMeasures(grid, np.asarray(mu).ravel(), nu, notes)


def extract_measures(L: Operator, dom: LensDomain, h: Optional[float] = None, reg: float = 0.0) -> DiscreteMeasures:
    return measures_on_grid(discretize(L, dom, h, reg))


def representation_check(measures: DiscreteMeasures, u: Expr, L: Optional[Operator] = None) -> float:
    """``|u(0) - sum mu u(b) + sum nu (Lu)(i)|``; ``L`` defaults to the discretised operator."""
    grid = measures.grid
    L = L or grid.operator
    Lu = apply_operator(L, u)
    origin = np.zeros((1, grid.domain.dim))
    val = _values(u, origin)[0]
    val -= measures.mu @ _values(u, grid.boundary_points)
    val += measures.nu @ _values(Lu, grid.interior_points)
    return float(abs(val))


def translated_representation_check(
    measures: DiscreteMeasures, G: GroupLaw, v: Expr, x, L: Optional[Operator] = None
) -> float:
    """``|v(x) - sum mu v(x o y_b) + sum nu (Lv)(x o y_i)|``.

    Exact in the discrete sense only for the Euclidean law; for other laws the
    grid is not group-adapted and the value is an approximation.
    """
    grid = measures.grid
    L = L or grid.operator
    x = np.asarray(x, dtype=float).reshape(1, -1)
    Lv = apply_operator(L, v)
    val = _values(v, x)[0]
    val -= measures.mu @ _values(v, G.op(x, grid.boundary_points))
    val += measures.nu @ _values(Lv, G.op(x, grid.interior_points))
    return float(abs(val))


def total_variation(m1: DiscreteMeasures, m2: DiscreteMeasures) -> dict:
    """Total-variation distance of two measure pairs on the same grid (``nu`` relative to its mass)."""
    if m1.mu.shape != m2.mu.shape or m1.nu.shape != m2.nu.shape:
        raise ValueError("measures live on different grids")
    return {
        "mu": float(np.sum(np.abs(m1.mu - m2.mu))),
        "nu": float(np.sum(np.abs(m1.nu - m2.nu)) / max(m1.nu_total, m2.nu_total)),
    }


def _random_nonpositive(rng: np.random.Generator, dom: LensDomain, n_bumps: int = 3) -> Callable:
    """A random smooth nonpositive function: minus a constant plus Gaussian bumps."""
    c0 = rng.uniform(0, 1)
    amps = rng.uniform(0, 2, n_bumps)
    centres = rng.uniform(-1, 1, (n_bumps, dom.dim)) * dom.half_widths()
    widths = rng.uniform(0.3, 1.5, n_bumps)

    def func(X):
        out = np.full(X.shape[:-1], -c0)
        for a, z, w in zip(amps, centres, widths):
            out -= a * np.exp(-np.sum((X - z) ** 2, axis=-1) / w ** 2)
        return out

    return func


@dataclass
class MaximumPrincipleReport:
    trials: int
    worst_max: float
    picone_ok: bool
    reg: float
    h: float
    passed: bool
    violations: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return self.__dict__.copy()


def maximum_principle_check(
    L: Operator,
    dom: LensDomain,
    h: Optional[float] = None,
    reg: float = 0.0,
    trials: int = 50,
    seed: int = 0,
    tol: float = SIGN_TOL,
) -> MaximumPrincipleReport:
    """Random ``f <= 0``, ``phi <= 0`` instances must give ``u <= tol``.

    Also checks the discrete Picone estimate ``max|u| <= max|phi| + (sum nu) max|f|``
    at the origin.
    """
    grid = discretize(L, dom, h, reg)
    meas = measures_on_grid(grid)
    rng = np.random.default_rng(seed)
    worst = -np.inf
    violations = []
    picone_ok = True
    for k in range(trials):
        f = _random_nonpositive(rng, dom)
        phi = _random_nonpositive(rng, dom)
        sol = solve_on_grid(grid, f, phi)
        m = sol.max_interior
        worst = max(worst, m)
        if m > tol:
            violations.append(k)
        bound = np.max(np.abs(sol.boundary_values)) + meas.nu_total * np.max(np.abs(_values(f, grid.interior_points)))
        if abs(sol.value_at_origin) > bound * (1 + 1e-10):
            picone_ok = False
    return MaximumPrincipleReport(trials, float(worst), picone_ok, float(reg), grid.h, not violations and picone_ok, violations)
