"""Plane-wave Galerkin solver for periodic Coulomb Hamiltonians and cusp-driven cutoff error analysis."""

__version__ = "0.1.0"

from .analysis import (
    CancellationRow,
    CorrectionConstants,
    cancellation_metrics,
    cusp_corrected_nuclear_values,
    error_identity_check,
    first_order_correction,
    fourier_tail_profile,
    nuclear_values,
    pairwise_error_prediction,
    richardson_reference,
    slope_fit,
)
from .eigensolver import EigenSolution, SolverOptions, phase_normalize, solve_lowest
from .lattice import Cell, CutoffBasis, FourierField, Shape, build_basis, fft_grid_size
from .lattice_sums import CUBIC_A, lattice_zeta, tail_asymptote, tail_sum
from .operator import HamiltonianOperator, build_operator
from .potential import ChargeConfig, SmoothPotential, coulomb_coefficient
from .records import ConvergenceRecord, emit_table, read_json_table
from .study import cancellation_study, convergence_study, solve_cutoff, tail_law_study

__all__ = [
    "CUBIC_A",
    "CancellationRow",
    "Cell",
    "ChargeConfig",
    "ConvergenceRecord",
    "CorrectionConstants",
    "CutoffBasis",
    "EigenSolution",
    "FourierField",
    "HamiltonianOperator",
    "Shape",
    "SmoothPotential",
    "SolverOptions",
    "build_basis",
    "build_operator",
    "cancellation_metrics",
    "cancellation_study",
    "convergence_study",
    "coulomb_coefficient",
    "cusp_corrected_nuclear_values",
    "emit_table",
    "error_identity_check",
    "fft_grid_size",
    "first_order_correction",
    "fourier_tail_profile",
    "lattice_zeta",
    "nuclear_values",
    "pairwise_error_prediction",
    "phase_normalize",
    "read_json_table",
    "richardson_reference",
    "slope_fit",
    "solve_cutoff",
    "solve_lowest",
    "tail_asymptote",
    "tail_law_study",
    "tail_sum",
]
