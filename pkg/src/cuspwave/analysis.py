"""Cusp-driven discretization error formulas and fitting utilities.

For a plane-wave cutoff ``M`` the eigenvalue error of a periodic Coulomb
Hamiltonian behaves like

    E_M - E  ~  prefactor / M^3 * sum_I Z_I^2 psi(R_I)^2

with ``prefactor = 2 L^3 / (3 pi^3)`` for the spherical cutoff and
``A L^3 / (2 pi^4)`` for the cubic one.  Both come from the tail
``sum_{k outside cutoff} |k|^-6`` of the squared ``|K|^-4`` Fourier decay
that the nuclear cusps impose on the eigenfunctions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .eigensolver import EigenSolution
from .errors import (
    AlignmentError,
    ConfigMismatchError,
    DimensionError,
    DomainError,
    InsufficientDataError,
    PhaseError,
    ShellError,
)
from .lattice import FourierField, Shape
from .lattice_sums import CUBIC_A, phased_tail_sum, tail_asymptote
from .operator import HamiltonianOperator
from .potential import ChargeConfig

__all__ = [
    "CUBIC_A",
    "CorrectionConstants",
    "CancellationRow",
    "first_order_correction",
    "pairwise_error_prediction",
    "fourier_tail_profile",
    "error_identity_check",
    "cancellation_metrics",
    "richardson_reference",
    "slope_fit",
    "nuclear_values",
    "cusp_corrected_nuclear_values",
]


@dataclass(frozen=True)
class CorrectionConstants:
    shape: Shape
    L: float

    @classmethod
    def for_shape(cls, shape: Shape | str, L: float) -> "CorrectionConstants":
        return cls(Shape.parse(shape), float(L))

    @property
    def tail_constant(self) -> float:
        """``lim M^3 sum_{k outside cutoff} |k|^-6``: ``4 pi / 3`` or ``A``."""
        return tail_asymptote(6, self.shape)

    @property
    def prefactor(self) -> float:
        # 32 pi^2 / |cell| * (L / 2 pi)^6 * tail constant
        return 32.0 * np.pi**2 / self.L**3 * (self.L / (2 * np.pi)) ** 6 * self.tail_constant

    def as_dict(self) -> dict:
        return {
            "shape": self.shape.value,
            "L": self.L,
            "A": CUBIC_A,
            "tail_constant": self.tail_constant,
            "prefactor": self.prefactor,
            "spherical_prefactor": 2 * self.L**3 / (3 * np.pi**3),
            "cubic_prefactor": CUBIC_A * self.L**3 / (2 * np.pi**4),
        }


def nuclear_values(field: FourierField, config: ChargeConfig, check_phase: bool = True) -> np.ndarray:
    """Real values ``psi(R_I)`` of a phase-normalized eigenfunction."""
    if len(config) == 0:
        return np.zeros(0)
    vals = field.evaluate_at_points(config.positions)
    if check_phase and np.any(np.abs(vals.imag) > 1e-6):
        raise PhaseError(f"eigenfunction is not phase-normalized: Im psi(R_I) = {vals.imag}")
    return vals.real


def cusp_corrected_nuclear_values(field: FourierField, config: ChargeConfig) -> np.ndarray:
    """Estimate of the untruncated ``psi(R_I)`` from a cutoff eigenvector.

    Point values of ``psi_M`` miss the ``|K|^-4`` coefficient tail outside the
    cutoff, an ``O(1/M)`` relative bias.  Adding that tail back gives the
    linear system ``psi_I = psi_M(R_I) + sum_J 8 pi Z_J / |cell| T_IJ psi_J``
    with ``T_IJ = sum_{K outside} cos(K.(R_I - R_J)) / |K|^4``.
    """
    psi_M = nuclear_values(field, config)
    if len(config) == 0:
        return psi_M
    basis = field.basis
    L = basis.cell.L
    Z, R = config.Z, config.positions
    n = len(Z)
    T = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            T[i, j] = (L / (2 * np.pi)) ** 4 * phased_tail_sum(basis.M, 4, basis.shape, (R[i] - R[j]) / L)
    A = np.eye(n) - 8 * np.pi / L**3 * T * Z[None, :]
    return np.linalg.solve(A, psi_M)


def first_order_correction(
    solution: EigenSolution,
    config: ChargeConfig,
    constants: CorrectionConstants,
    M: int,
    index: int = 0,
) -> float:
    """``prefactor / M^3 * sum_I Z_I^2 psi_M(R_I)^2`` for eigenpair ``index``."""
    field = solution.eigenvectors[index]
    if field.basis.M != M:
        raise DimensionError(f"solution was computed at M={field.basis.M}, correction requested for M={M}")
    psi = nuclear_values(field, config)
    return float(constants.prefactor / M**3 * np.sum(config.Z**2 * psi**2))


def pairwise_error_prediction(
    psi_at_nuclei,
    config: ChargeConfig,
    M: int,
    shape: Shape | str,
) -> float:
    """First-order error including the nucleus-pair tails.

    ``32 pi^2 / |cell| * sum_{I,J} Z_I Z_J psi(R_I) psi(R_J) sum_{K outside} cos(K.(R_I-R_J)) / |K|^6``.
    The ``I != J`` terms are ``O(M^-4)`` but oscillate with ``M``; they are
    what separates two nearby configurations at moderate cutoffs.
    """
    L = config.cell.L
    psi = np.asarray(psi_at_nuclei, dtype=float)
    Z, R = config.Z, config.positions
    total = 0.0
    for i in range(len(Z)):
        for j in range(len(Z)):
            shift = (R[i] - R[j]) / L
            total += Z[i] * Z[j] * psi[i] * psi[j] * phased_tail_sum(M, 6, shape, shift)
    return float(32.0 * np.pi**2 / L**3 * (L / (2 * np.pi)) ** 6 * total)


def _shell_mask(basis, r_lo, r_hi):
    norm = np.sqrt(basis.k2)
    return (norm >= r_lo) & (norm < r_hi)


def fourier_tail_profile(
    solution: EigenSolution,
    config: ChargeConfig,
    shells,
    index: int = 0,
    nuclear: str = "corrected",
) -> list[float]:
    """Shell-wise relative misfit of the leading cusp term of the Fourier coefficients.

    The prediction is ``8 pi / (|cell|^(1/2) |K|^4) sum_I Z_I psi(R_I) exp(-i K.R_I)``.
    Each shell ``r_lo <= |k| < r_hi`` reports ``||psi_K - pred_K|| / ||pred_K||``
    over the coefficients in that shell.

    ``nuclear`` selects the estimate of ``psi(R_I)``: ``"corrected"`` uses
    :func:`cusp_corrected_nuclear_values`, ``"galerkin"`` the raw point values
    of the cutoff eigenvector (biased low by ``O(1/M)``).
    """
    field = solution.eigenvectors[index]
    basis = field.basis
    cell = basis.cell
    if nuclear == "corrected":
        psi = cusp_corrected_nuclear_values(field, config)
    elif nuclear == "galerkin":
        psi = nuclear_values(field, config)
    else:
        raise ValueError(f"unknown nuclear value estimate {nuclear!r}")
    out = []
    for r_lo, r_hi in shells:
        mask = _shell_mask(basis, r_lo, r_hi)
        if not np.any(mask):
            raise ShellError(f"no retained wavevectors with {r_lo} <= |k| < {r_hi} (M={basis.M})")
        K = basis.wavevectors[mask]
        K2 = np.einsum("ij,ij->i", K, K)
        phase = np.exp(-1j * K @ config.positions.T) if len(config) else np.zeros((len(K), 0))
        pred = 8 * np.pi / (np.sqrt(cell.volume) * K2**2) * (phase @ (config.Z * psi))
        denom = np.linalg.norm(pred)
        if denom == 0:
            raise ShellError(f"leading cusp term vanishes on shell [{r_lo}, {r_hi})")
        out.append(float(np.linalg.norm(field.coeffs[mask] - pred) / denom))
    return out


def embed(field: FourierField, target_basis) -> np.ndarray:
    """Coefficients of ``field`` on a larger basis (zeros elsewhere)."""
    pos = target_basis.position(field.basis.indices)
    if np.any(pos < 0):
        raise DimensionError(f"{field.basis!r} is not contained in {target_basis!r}")
    out = np.zeros(target_basis.size, dtype=complex)
    out[pos] = field.coeffs
    return out


def error_identity_check(
    solution_M: EigenSolution,
    solution_ref: EigenSolution,
    op_ref: HamiltonianOperator,
    index: int = 0,
) -> tuple[float, float]:
    """``(E_M - E_ref, -<psi_M, V P_perp psi_ref>)`` evaluated in the reference basis.

    ``P_perp`` removes the components retained at cutoff ``M``; ``V`` is the
    potential part of the reference operator (kinetic energy excluded).  The
    reference eigenvector is sign-aligned with ``psi_M`` before use.
    """
    for sol in (solution_M, solution_ref):
        if sol.config is not None and sol.config != op_ref.config:
            raise ConfigMismatchError("solutions and reference operator describe different charge configurations")
        if sol.smooth is not None and sol.smooth != op_ref.smooth:
            raise ConfigMismatchError("solutions and reference operator use different smooth potentials")
    ref = solution_ref.eigenvectors[index]
    if not ref.basis.same_as(op_ref.basis):
        raise DimensionError("reference solution does not live on the reference operator's basis")
    psi_M = embed(solution_M.eigenvectors[index], op_ref.basis)
    psi_ref = ref.coeffs.copy()
    if np.vdot(psi_M, psi_ref).real < 0:
        psi_ref = -psi_ref
    perp = psi_ref.copy()
    perp[op_ref.basis.position(solution_M.basis.indices)] = 0.0
    lhs = float(solution_M.eigenvalues[index] - solution_ref.eigenvalues[index])
    if not np.any(perp):
        return lhs, 0.0
    Vperp = op_ref.apply_potential(perp, hermitian=True)
    rhs = float(-np.vdot(psi_M, Vperp).real)
    return lhs, rhs


@dataclass(frozen=True)
class CancellationRow:
    M: int
    D_M: float
    S_M: float

    @property
    def ratio(self) -> float:
        return self.D_M / self.S_M if self.S_M else 0.0


def cancellation_metrics(runs_config1, runs_config2) -> list[CancellationRow]:
    """Energy-difference error ``D_M`` versus summed eigenvalue errors ``S_M``, per cutoff."""
    m1 = [r.M for r in runs_config1]
    m2 = [r.M for r in runs_config2]
    if m1 != m2:
        raise AlignmentError(f"cutoff grids differ: {m1} vs {m2}")
    rows = []
    for a, b in zip(runs_config1, runs_config2):
        D = abs((a.E_M - b.E_M) - (a.E_ref - b.E_ref))
        S = abs(a.E_M - a.E_ref) + abs(b.E_M - b.E_ref)
        rows.append(CancellationRow(a.M, D, S))
    return rows


def richardson_reference(pairs, rate: float = 3.0) -> tuple[float, float]:
    """Fit ``E_M = E + c / M^rate`` on the largest half of the cutoffs; returns ``(E, c)``."""
    pairs = sorted((int(M), float(E)) for M, E in pairs)
    if len({M for M, _ in pairs}) < 3:
        raise InsufficientDataError(f"Richardson fit needs at least 3 distinct cutoffs, got {len(pairs)}")
    use = pairs[-max(2, math.ceil(len(pairs) / 2)):]
    M = np.array([m for m, _ in use], dtype=float)
    E = np.array([e for _, e in use])
    X = np.stack([np.ones_like(M), M**-rate], axis=1)
    (E0, c), *_ = np.linalg.lstsq(X, E, rcond=None)
    return float(E0), float(c)


def slope_fit(pairs) -> float:
    """Least-squares slope of ``log(err)`` against ``log(M)``."""
    pairs = list(pairs)
    if len(pairs) < 3:
        raise InsufficientDataError(f"slope fit needs at least 3 points, got {len(pairs)}")
    M = np.array([m for m, _ in pairs], dtype=float)
    err = np.array([e for _, e in pairs], dtype=float)
    if np.any(~(err > 0)):
        raise DomainError(f"slope fit needs positive errors, got {err}")
    return float(np.polyfit(np.log(M), np.log(err), 1)[0])
