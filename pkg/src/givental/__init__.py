"""Exact finite-truncation toolkit for axiomatic genus-zero theories, their quantization and Virasoro constraints."""
from .series import Poly, TruncatedPotential, TruncationError, TruncationSpec
from .loop import LaurentMatrix, LoopEndo, Metric, birkhoff_factorize
from .quantization import FockOperator, flow, weyl_quantize
from .tau import SRData, Theory, axiomatic_tau, builtin_theory, point_correlators, wk_correlator

__all__ = [
    "FockOperator",
    "LaurentMatrix",
    "LoopEndo",
    "Metric",
    "Poly",
    "SRData",
    "Theory",
    "TruncatedPotential",
    "TruncationError",
    "TruncationSpec",
    "axiomatic_tau",
    "birkhoff_factorize",
    "builtin_theory",
    "flow",
    "point_correlators",
    "weyl_quantize",
    "wk_correlator",
]
