"""Fundamental solutions, group convolution, the sharpness counterexample, mollifiers and gadgets."""

from .convolution import Mollifier, SupportedFunction, convolve, convolve_batch, far_field, mollify, near_field
from .counterexample import CounterexampleReport, annulus_report, counterexample, sample_annuli, sign_checks
from .fundamental import (
    FundamentalSolution,
    QuadratureError,
    bump_expr,
    calibrate,
    gamma_euclidean,
    gamma_heisenberg,
    heisenberg_group,
    heisenberg_operator,
)
from .gadgets import CutoffSequence, DomainError, Gadget, antiderivative, check_gadget, gadget_eval, semilinear_residual

__all__ = [
    "CounterexampleReport",
    "CutoffSequence",
    "DomainError",
    "FundamentalSolution",
    "Gadget",
    "Mollifier",
    "QuadratureError",
    "SupportedFunction",
    "annulus_report",
    "antiderivative",
    "bump_expr",
    "calibrate",
    "check_gadget",
    "convolve",
    "convolve_batch",
    "counterexample",
    "far_field",
    "gadget_eval",
    "gamma_euclidean",
    "gamma_heisenberg",
    "heisenberg_group",
    "heisenberg_operator",
    "mollify",
    "near_field",
    "sample_annuli",
    "semilinear_residual",
    "sign_checks",
]
