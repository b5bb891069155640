"""TOML operator configurations.

Sections::

    name = "heisenberg"

    [operator]              # explicit form; excludes [kolmogorov]
    dimension = 3
    time = false            # or true (last coordinate) or an integer index
    A = [["1", "0", "-x2/2"], ...]
    b = ["0", "0", "0"]

    [kolmogorov]            # div(A grad) + <Bx, grad> - d/dt on R^{n+1}
    A = [["1", "0"], ["0", "0"]]
    B = [["0", "0"], ["1", "0"]]

    [group]                 # optional; x1..xn o y1..yn (s = right time slot)
    compose = ["x1 + y1", ...]
    inverse = ["-x1", ...]

    [dilation]              # optional
    sigma = ["1", "1", "2"]

    [fields]                # optional explicit Hormander fields
    X = [["1", "0", "-x2/2"], ["0", "1", "x1/2"]]

    [fundamental_solution]  # optional
    builtin = "heisenberg"  # or "euclidean"
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Optional, Union

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .dilation import Dilation
from .expr import ExprSyntaxError
from .fields import DimensionMismatch, Operator, VectorField
from .group import GroupLaw
from .kolmogorov import KolmogorovSpec, build_group, build_operator

FIXTURES = ("euclidean_laplacian", "laplacian2d", "heat", "heisenberg", "kolmogorov_classical", "remark83", "mumford")
BUILTIN_KERNELS = ("euclidean", "heisenberg")


class ConfigError(ValueError):
    """Malformed configuration (maps to the usage/parse exit code)."""


@dataclass
class OperatorConfig:
    name: str
    dimension: int
    operator: Operator
    group: Optional[GroupLaw] = None
    dilation: Optional[Dilation] = None
    kolmogorov: Optional[KolmogorovSpec] = None
    fields: Optional[list[VectorField]] = None
    fundamental_solution: Optional[str] = None

    @property
    def time_index(self) -> Optional[int]:
        return self.operator.time_index


def _rational(v) -> Fraction:
    if isinstance(v, bool):
        raise ConfigError(f"expected a number, got {v!r}")
    if isinstance(v, float):
        return Fraction(repr(v))
    try:
        return Fraction(str(v).strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"bad rational {v!r}") from exc


def _matrix(v, what: str) -> list[list]:
    if not isinstance(v, list) or not all(isinstance(r, list) for r in v):
        raise ConfigError(f"{what} must be a list of rows")
    return v


def _time_index(spec, dim: int) -> Optional[int]:
    if spec is None or spec is False:
        return None
    if spec is True:
        return dim
    if isinstance(spec, int) and 1 <= spec <= dim:
        return spec
    raise ConfigError(f"time must be true/false or an index in 1..{dim}")


def parse_config(data: dict, name: str = "") -> OperatorConfig:
    try:
        return _parse(data, name)
    except (ExprSyntaxError, DimensionMismatch, KeyError, TypeError) as exc:
        raise ConfigError(f"{type(exc).__name__}: {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def _parse(data: dict, name: str) -> OperatorConfig:
    name = str(data.get("name", name))
    has_op, has_k = "operator" in data, "kolmogorov" in data
    if has_op == has_k:
        raise ConfigError("exactly one of [operator] or [kolmogorov] is required")
    spec = None
    group = None
    if has_k:
        k = data["kolmogorov"]
        spec = KolmogorovSpec(
            [[_rational(x) for x in row] for row in _matrix(k["A"], "kolmogorov.A")],
            [[_rational(x) for x in row] for row in _matrix(k["B"], "kolmogorov.B")],
        )
        op = build_operator(spec)
        group = build_group(spec)
        dim = op.dim
    else:
        o = data["operator"]
        A = _matrix(o["A"], "operator.A")
        dim = int(o.get("dimension", len(A)))
        if len(A) != dim:
            raise ConfigError(f"operator.A has {len(A)} rows, dimension is {dim}")
        b = o.get("b", ["0"] * dim)
        op = Operator.parse([[str(x) for x in row] for row in A], [str(x) for x in b], _time_index(o.get("time"), dim))
    if "group" in data:
        if group is not None:
            raise ConfigError("[group] is derived automatically for [kolmogorov] configs")
        g = data["group"]
        comp = [str(c) for c in g["compose"]]
        if len(comp) != dim:
            raise ConfigError(f"group.compose has {len(comp)} components, dimension is {dim}")
        inv = g.get("inverse")
        group = GroupLaw.parse(comp, None if inv is None else [str(c) for c in inv], op.time_index, name=name)
    dil = None
    if "dilation" in data:
        sigma = [_rational(s) for s in data["dilation"]["sigma"]]
        if len(sigma) != dim:
            raise ConfigError(f"dilation.sigma has {len(sigma)} entries, dimension is {dim}")
        dil = Dilation(tuple(sigma))
    fields = None
    if "fields" in data:
        fields = [VectorField.parse([str(c) for c in X], dim, op.time_index) for X in _matrix(data["fields"]["X"], "fields.X")]
    kernel = None
    if "fundamental_solution" in data:
        kernel = str(data["fundamental_solution"].get("builtin", ""))
        if kernel not in BUILTIN_KERNELS:
            raise ConfigError(f"unknown builtin fundamental solution {kernel!r}; expected one of {BUILTIN_KERNELS}")
    return OperatorConfig(name, dim, op, group, dil, spec, fields, kernel)


def fixture_path(name: str) -> Path:
    if name not in FIXTURES:
        raise ConfigError(f"unknown fixture {name!r}; available: {', '.join(FIXTURES)}")
    return Path(str(resources.files("hypoliouville") / "fixtures" / f"{name}.toml"))


def load_config(source: Union[str, Path]) -> OperatorConfig:
    """Load a TOML file, or a shipped fixture by name."""
    path = Path(source)
    if not path.exists():
        path = fixture_path(str(source))
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data, path.stem)
