import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cuspwave.eigensolver import SolverOptions
from cuspwave.errors import ConvergenceError, ResourceGuardError
from cuspwave.lattice import Cell, CutoffBasis
from cuspwave.potential import ChargeConfig
from cuspwave.study import (
    basis_cardinality,
    cancellation_study,
    check_resources,
    convergence_study,
    reference_energy,
    solve_cutoff,
    solve_many,
    tail_law_study,
)

from conftest import model_config

OPTS = SolverOptions(residual_tol=1e-9)
CUTS = (4, 6, 8)


@pytest.fixture(scope="module")
def small_study():
    return convergence_study(model_config(), CUTS, "cubic", options=OPTS, M_ref=12, min_cutoff=4)


class TestResources:
    @given(M=st.integers(1, 12), shape=st.sampled_from(["spherical", "cubic"]))
    @settings(max_examples=20, deadline=None)
    def test_cardinality(self, M, shape):
        assert basis_cardinality(M, shape) == CutoffBasis(Cell(1.0), M, shape).size

    def test_guard(self):
        with pytest.raises(ResourceGuardError):
            check_resources([8, 90], "cubic")
        assert check_resources([8, 90], "cubic", force=True) == 181**3
        assert check_resources([8, 100], "spherical") < 5_000_000


class TestConvergenceStudy:
    def test_record_consistency(self, small_study):
        res = small_study
        assert [r.M for r in res.records] == list(CUTS)
        for r in res.records:
            assert r.raw_error == pytest.approx(r.E_M - r.E_ref, abs=0)
            assert r.corrected_error == pytest.approx(r.raw_error - r.predicted_error, abs=1e-18)
            assert r.tail_fit == pytest.approx(r.raw_error / r.predicted_error)
            assert r.raw_error >= -1e-9
            assert r.predicted_error >= 0
            assert r.ref_policy == "high_cutoff_corrected"
            assert r.converged and len(r.psi_at_nuclei) == 2
            assert math.isfinite(r.residual_coupling) and r.residual_coupling > 0

    def test_reference(self, small_study):
        ref = small_study.reference
        assert ref.M_ref == 12
        assert ref.E_ref == pytest.approx(ref.E_high - ref.correction, abs=0)
        assert ref.richardson_points == (6, 8, 12)
        assert ref.cross_check_difference == pytest.approx(abs(ref.richardson_E - ref.E_ref))

    def test_summary(self, small_study):
        s = small_study.summary()
        assert set(s["slopes"]) == {"raw_error", "corrected_error", "predicted_error"}
        assert s["constants"]["shape"] == "cubic"
        assert s["all_converged"] is True

    def test_raw_reference_policy(self, small_study):
        res = convergence_study(model_config(), CUTS, "cubic", options=OPTS, policy="high_cutoff", M_ref=12)
        assert res.reference.E_ref == res.reference.E_high == small_study.reference.E_high
        assert all(r.ref_policy == "high_cutoff" for r in res.records)

    def test_richardson_policy(self, small_study):
        res = convergence_study(model_config(), CUTS, "cubic", options=OPTS, policy="richardson")
        assert res.reference.M_ref is None
        assert all(math.isnan(r.residual_coupling) for r in res.records)
        assert [r.E_M for r in res.records] == [r.E_M for r in small_study.records]

    def test_unknown_policy(self):
        solved = solve_many(model_config(), (2, 3, 4), "cubic")
        with pytest.raises(ValueError):
            reference_energy(solved, model_config(), "cubic", policy="median")

    def test_threads_deterministic(self, small_study):
        res = convergence_study(model_config(), CUTS, "cubic", options=OPTS, M_ref=12, min_cutoff=4, threads=3)
        assert res.records == small_study.records

    def test_unconverged_flagged(self):
        opts = SolverOptions(method="lobpcg", residual_tol=1e-13, max_iterations=1)
        with pytest.raises(ConvergenceError):
            solve_cutoff(model_config(), 6, "cubic", options=opts)
        res = convergence_study(model_config(), (6, 7, 8), "cubic", options=opts, M_ref=10, allow_unconverged=True)
        assert not res.all_converged
        assert all(not r.converged for r in res.records)


class TestOtherStudies:
    def test_cancellation(self):
        res = cancellation_study(model_config(0.7), model_config(0.75), CUTS, "cubic", options=OPTS, M_ref=12,
                                 min_cutoff=4)
        assert [r.M for r in res.rows] == list(CUTS)
        for row, a, b in zip(res.rows, res.study1.records, res.study2.records):
            assert row.D_M == pytest.approx(abs((a.E_M - b.E_M) - (a.E_ref - b.E_ref)))
            assert row.D_M <= row.S_M
        assert math.isfinite(res.slope_S) and res.slope_S < 0

    def test_tail_law(self):
        cfg = ChargeConfig(Cell(2.0), ((2.0, (0, 0, 0)),))
        res = tail_law_study(cfg, 16, [(3, 6), (6, 9), (9, 12)], options=OPTS)
        assert len(res.residuals) == len(res.residuals_galerkin) == 3
        assert res.residuals[-1] < res.residuals[0]
        assert res.energy < 0 and res.psi_at_nuclei[0] > 0

    def test_no_charges_anchor(self):
        s = solve_cutoff(ChargeConfig(Cell(2.0)), 3, "cubic")
        assert s.energy == pytest.approx(0.0, abs=1e-12)
        assert s.psi_at_nuclei.shape == (0,)
        np.testing.assert_allclose(s.solution.eigenvectors[0].evaluate_at_points([0, 0, 0]).real, 8**-0.5)
