"""Verification toolkit for L^p-Liouville theorems of hypoelliptic operators
that are left translation invariant on Lie groups of R^n.

Submodules: ``expr`` (symbolic kernel), ``fields`` (vector fields, operators,
Hörmander rank), ``group`` (group laws), ``dilation``, ``kolmogorov``,
``lens`` (finite-difference representation measures), ``liouville``
(fundamental solutions, convolution, sharpness counterexample, gadgets),
``config`` and ``cli``.
"""

from .dilation import Dilation, homogeneous_norm, sharp_exponent
from .fields import Operator, VectorField, hormander_check, hormander_fields, lie_bracket
from .group import GroupLaw, invariance_residual, unimodularity_check, verify_axioms
from .kolmogorov import KolmogorovSpec, classify

__version__ = "0.1.0"

__all__ = [
    "Dilation",
    "GroupLaw",
    "KolmogorovSpec",
    "Operator",
    "VectorField",
    "classify",
    "homogeneous_norm",
    "hormander_check",
    "hormander_fields",
    "invariance_residual",
    "lie_bracket",
    "sharp_exponent",
    "unimodularity_check",
    "verify_axioms",
]
