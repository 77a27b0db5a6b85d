"""Convergence-study driver: per-cutoff solves, reference energies and the four experiments."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analysis import (
    CorrectionConstants,
    cancellation_metrics,
    error_identity_check,
    first_order_correction,
    fourier_tail_profile,
    nuclear_values,
    richardson_reference,
    slope_fit,
)
from .eigensolver import EigenSolution, SolverOptions, phase_normalize, solve_lowest
from .errors import ConvergenceError, CuspwaveError, ResourceGuardError
from .lattice import CutoffBasis, Shape
from .operator import HamiltonianOperator
from .potential import ChargeConfig, SmoothPotential
from .records import ConvergenceRecord

log = logging.getLogger(__name__)

MAX_BASIS_SIZE = 5_000_000


def basis_cardinality(M: int, shape: Shape | str) -> int:
    """Number of plane waves at cutoff ``M`` without building the index set."""
    shape = Shape.parse(shape)
    if shape is Shape.CUBIC:
        return (2 * M + 1) ** 3
    r = np.arange(-M, M + 1)
    q = (r[:, None] ** 2 + r[None, :] ** 2).ravel()
    q = q[q <= M * M]
    return int(np.sum(2 * np.floor(np.sqrt(M * M - q) + 1e-12).astype(int) + 1))


def check_resources(cutoffs, shape, limit: int = MAX_BASIS_SIZE, force: bool = False) -> int:
    largest = max(basis_cardinality(M, shape) for M in cutoffs)
    if largest > limit and not force:
        raise ResourceGuardError(f"largest basis has {largest} plane waves (limit {limit}); pass force to override")
    return largest


@dataclass
class SolvedCutoff:
    M: int
    solution: EigenSolution
    operator: HamiltonianOperator
    psi_at_nuclei: np.ndarray
    converged: bool = True

    @property
    def energy(self) -> float:
        return self.solution.ground_energy


def solve_cutoff(
    config: ChargeConfig,
    M: int,
    shape: Shape | str = Shape.CUBIC,
    smooth: SmoothPotential | None = None,
    options: SolverOptions | None = None,
    workers: int | None = None,
    allow_unconverged: bool = False,
) -> SolvedCutoff:
    """Solve at one cutoff and phase-normalize at the first nucleus (origin if none)."""
    op = HamiltonianOperator(CutoffBasis(config.cell, M, shape), config, smooth, workers=workers)
    converged = True
    try:
        sol = solve_lowest(op, options)
    except ConvergenceError as exc:
        if not allow_unconverged:
            raise
        log.warning("M=%d: %s", M, exc)
        sol, converged = exc.solution, False
    anchor = config.positions[0] if len(config) else np.zeros(3)
    sol = phase_normalize(sol, anchor)
    return SolvedCutoff(M, sol, op, nuclear_values(sol.eigenvectors[0], config), converged)


def solve_many(config, cutoffs, shape, smooth=None, options=None, threads: int = 1, allow_unconverged=False):
    """Solves for every cutoff; results ordered by ``M`` regardless of completion order."""
    cutoffs = list(cutoffs)
    threads = max(1, int(threads))
    workers = 1 if threads > 1 else None

    def one(M):
        log.info("solving M=%d", M)
        return solve_cutoff(config, M, shape, smooth, options, workers, allow_unconverged)

    if threads == 1 or len(cutoffs) == 1:
        return [one(M) for M in cutoffs]
    with ThreadPoolExecutor(max_workers=min(threads, len(cutoffs))) as pool:
        return list(pool.map(one, cutoffs))


@dataclass
class ReferenceValue:
    E_ref: float
    policy: str
    M_ref: int | None = None
    E_high: float | None = None
    correction: float | None = None
    richardson_E: float | None = None
    richardson_points: tuple = ()
    cross_check_difference: float | None = None
    solved: SolvedCutoff | None = field(default=None, repr=False)

    def as_dict(self) -> dict:
        return {
            "E_ref": self.E_ref,
            "policy": self.policy,
            "M_ref": self.M_ref,
            "E_high": self.E_high,
            "correction": self.correction,
            "richardson_E": self.richardson_E,
            "richardson_points": list(self.richardson_points),
            "cross_check_difference": self.cross_check_difference,
        }


def reference_energy(
    solved: list[SolvedCutoff],
    config: ChargeConfig,
    shape,
    policy: str = "high_cutoff_corrected",
    M_ref: int | None = None,
    smooth=None,
    options=None,
    workers=None,
    high: SolvedCutoff | None = None,
) -> ReferenceValue:
    """Reference eigenvalue under one of three policies.

    ``high_cutoff_corrected``: ``E_{M_ref}`` minus its own first-order cusp
    correction.  ``high_cutoff``: the plain ``E_{M_ref}``.  ``richardson``:
    extrapolation of the study energies.  The high-cutoff policies are
    cross-checked by a Richardson fit through the two largest study cutoffs
    and ``M_ref``.
    """
    pairs = [(s.M, s.energy) for s in solved]
    if policy == "richardson":
        E, _ = richardson_reference(pairs)
        return ReferenceValue(E, policy, richardson_E=E, richardson_points=tuple(M for M, _ in pairs))
    if policy not in ("high_cutoff", "high_cutoff_corrected"):
        raise ValueError(f"unknown reference policy {policy!r}")
    if M_ref is None:
        M_ref = max(3 * max(M for M, _ in pairs), 48)
    if high is None:
        high = solve_cutoff(config, M_ref, shape, smooth, options, workers)
    E_high = high.energy
    corr = first_order_correction(high.solution, config, CorrectionConstants.for_shape(shape, config.cell.L), M_ref)
    E_ref = E_high - corr if policy == "high_cutoff_corrected" else E_high
    ref = ReferenceValue(E_ref, policy, M_ref, E_high, corr, solved=high)
    top = sorted(pairs)[-2:] + [(M_ref, E_high)]
    if len(top) >= 3:
        ref.richardson_E, _ = richardson_reference(top)
        ref.richardson_points = tuple(M for M, _ in top)
        ref.cross_check_difference = abs(ref.richardson_E - E_ref)
    return ref


def _safe_slope(pairs):
    try:
        return slope_fit(pairs)
    except CuspwaveError as exc:
        log.warning("slope fit skipped: %s", exc)
        return math.nan


@dataclass
class StudyResult:
    records: list
    reference: ReferenceValue
    constants: CorrectionConstants
    slopes: dict
    solved: list = field(default_factory=list, repr=False)

    @property
    def all_converged(self) -> bool:
        return all(r.converged for r in self.records)

    def summary(self) -> dict:
        return {
            "reference": self.reference.as_dict(),
            "constants": self.constants.as_dict(),
            "slopes": dict(self.slopes),
            "all_converged": self.all_converged,
        }


def convergence_study(
    config: ChargeConfig,
    cutoffs,
    shape: Shape | str = Shape.CUBIC,
    smooth: SmoothPotential | None = None,
    options: SolverOptions | None = None,
    policy: str = "high_cutoff_corrected",
    M_ref: int | None = None,
    min_cutoff: int = 6,
    threads: int = 1,
    allow_unconverged: bool = False,
) -> StudyResult:
    """Per-cutoff records with raw, predicted and corrected errors against a reference."""
    shape = Shape.parse(shape)
    cutoffs = sorted(int(M) for M in cutoffs)
    todo = list(cutoffs)
    if policy != "richardson":
        M_ref = M_ref if M_ref is not None else max(3 * max(cutoffs), 48)
        todo.append(M_ref)
    results = solve_many(config, todo, shape, smooth, options, threads, allow_unconverged)
    solved, high = (results, None) if policy == "richardson" else (results[:-1], results[-1])
    ref = reference_energy(solved, config, shape, policy, M_ref, smooth, options, high=high)
    constants = CorrectionConstants.for_shape(shape, config.cell.L)

    records = []
    for s in solved:
        pred = first_order_correction(s.solution, config, constants, s.M)
        raw = s.energy - ref.E_ref
        coupling = math.nan
        if ref.solved is not None:
            _, coupling = error_identity_check(s.solution, ref.solved.solution, ref.solved.operator)
        records.append(
            ConvergenceRecord(
                M=s.M,
                E_M=s.energy,
                E_ref=ref.E_ref,
                raw_error=raw,
                predicted_error=pred,
                corrected_error=raw - pred,
                psi_at_nuclei=tuple(s.psi_at_nuclei),
                residual_coupling=coupling,
                tail_fit=raw / pred if pred else math.nan,
                ref_policy=ref.policy,
                converged=s.converged,
            )
        )
    fit = [r for r in records if r.M >= min_cutoff]
    slopes = {
        "raw_error": _safe_slope([(r.M, r.raw_error) for r in fit]),
        "corrected_error": _safe_slope([(r.M, abs(r.corrected_error)) for r in fit]),
        "predicted_error": _safe_slope([(r.M, r.predicted_error) for r in fit]),
    }
    return StudyResult(records, ref, constants, slopes, solved)


@dataclass(frozen=True)
class CancellationResult:
    rows: list
    slope_D: float
    slope_S: float
    study1: StudyResult
    study2: StudyResult


def cancellation_study(config1, config2, cutoffs, shape=Shape.CUBIC, smooth=None, options=None,
                       policy="high_cutoff_corrected", M_ref=None, min_cutoff=6, threads=1,
                       allow_unconverged=False) -> CancellationResult:
    s1 = convergence_study(config1, cutoffs, shape, smooth, options, policy, M_ref, min_cutoff, threads, allow_unconverged)
    s2 = convergence_study(config2, cutoffs, shape, smooth, options, policy, M_ref, min_cutoff, threads, allow_unconverged)
    rows = cancellation_metrics(s1.records, s2.records)
    fit = [r for r in rows if r.M >= min_cutoff]
    return CancellationResult(
        rows,
        _safe_slope([(r.M, r.D_M) for r in fit]),
        _safe_slope([(r.M, r.S_M) for r in fit]),
        s1,
        s2,
    )


@dataclass(frozen=True)
class TailLawResult:
    M: int
    shells: tuple
    residuals: list
    residuals_galerkin: list
    psi_at_nuclei: np.ndarray
    energy: float


def tail_law_study(config, M, shells, shape=Shape.CUBIC, smooth=None, options=None) -> TailLawResult:
    s = solve_cutoff(config, M, shape, smooth, options)
    shells = tuple(tuple(sh) for sh in shells)
    return TailLawResult(
        M,
        shells,
        fourier_tail_profile(s.solution, config, shells, nuclear="corrected"),
        fourier_tail_profile(s.solution, config, shells, nuclear="galerkin"),
        s.psi_at_nuclei,
        s.energy,
    )
