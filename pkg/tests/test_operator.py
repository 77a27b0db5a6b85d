from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from cuspwave.errors import DimensionError, OracleScaleError
from cuspwave.lattice import Cell, FourierField, build_basis, plane_wave, random_real_field
from cuspwave.operator import HamiltonianOperator, build_operator
from cuspwave.potential import ChargeConfig, SmoothPotential, coulomb_coefficient

from conftest import model_config


def random_complex(basis, rng):
    return FourierField(basis, rng.standard_normal(basis.size) + 1j * rng.standard_normal(basis.size), real=False)


class TestApply:
    def test_free_plane_wave(self, cell2):
        op = build_operator(ChargeConfig(cell2), 3, "cubic")
        u = plane_wave(op.basis, (1, -2, 3))
        out = op.apply(u)
        K2 = (2 * np.pi / 2.0) ** 2 * 14
        np.testing.assert_allclose(out.coeffs, 0.5 * K2 * u.coeffs, atol=1e-13)

    def test_constant_shift(self, cell2, rng):
        op = build_operator(ChargeConfig(cell2), 3, "spherical", smooth=SmoothPotential.constant(0.8))
        u = random_real_field(op.basis, rng)
        np.testing.assert_allclose(op.apply(u).coeffs, op.kinetic * u.coeffs + 0.8 * u.coeffs, atol=1e-12)

    def test_matches_dense_model(self, model, rng):
        op = build_operator(model, 2, "cubic")
        H = op.dense_matrix()
        u = random_real_field(op.basis, rng)
        ref = H @ u.coeffs
        assert np.linalg.norm(op.apply(u).coeffs - ref) <= 1e-11 * np.linalg.norm(ref)

    @pytest.mark.parametrize("M", [1, 2, 3, 4])
    @pytest.mark.parametrize("shape", ["spherical", "cubic"])
    def test_oracle_equivalence(self, M, shape):
        cfg = ChargeConfig(Cell(2.0), ((1.3, (0.11, -0.42, 0.77)), (2.0, (-0.3, 0.5, 0.05))))
        w = SmoothPotential.from_cosines([((1, 0, 0), 0.5), ((0, 2, 1), -0.25)])
        op = build_operator(cfg, M, shape, smooth=w)
        H = op.dense_matrix()
        rng = np.random.default_rng(M)
        for _ in range(20):
            u = random_real_field(op.basis, rng)
            assert np.linalg.norm(op.apply(u).coeffs - H @ u.coeffs) <= 1e-11 * u.norm()
        v = random_complex(op.basis, rng)
        assert np.linalg.norm(op.apply(v).coeffs - H @ v.coeffs) <= 1e-11 * v.norm()

    def test_hermiticity(self, model, rng):
        op = build_operator(model, 5, "spherical")
        for _ in range(5):
            u, v = random_real_field(op.basis, rng), random_real_field(op.basis, rng)
            a = u.inner(op.apply(v))
            b = v.inner(op.apply(u))
            assert abs(a - np.conj(b)) <= 1e-11 * u.norm() * v.norm()

    def test_reality_preservation(self, model, rng):
        op = build_operator(model, 5, "cubic")
        u = random_real_field(op.basis, rng)
        # the generic complex path must also keep real functions real
        out = op.apply(u.coeffs, hermitian=False)
        assert FourierField(op.basis, out).hermitian_defect() <= 1e-12

    def test_grid_size_independence(self, model, rng):
        base = build_operator(model, 3, "cubic")
        big = build_operator(model, 3, "cubic", grid_min=40)
        assert big.grid_shape[0] > base.grid_shape[0]
        u = random_real_field(base.basis, rng)
        np.testing.assert_allclose(base.apply(u).coeffs, big.apply(u).coeffs, atol=1e-12 * u.norm())

    def test_block_apply(self, model, rng):
        op = build_operator(model, 3, "cubic")
        X = np.stack([random_real_field(op.basis, rng).coeffs for _ in range(3)], axis=1)
        AX = op.apply(X, hermitian=True)
        for j in range(3):
            np.testing.assert_allclose(AX[:, j], op.apply(X[:, j], hermitian=True), atol=1e-14)

    def test_basis_mismatch(self, model, rng):
        op = build_operator(model, 3, "cubic")
        with pytest.raises(DimensionError):
            op.apply(random_real_field(build_basis(model.cell, 3, "spherical"), rng))
        with pytest.raises(DimensionError):
            op.apply(np.zeros(10))

    def test_concurrent_apply(self, model, rng):
        op = build_operator(model, 4, "cubic")
        us = [random_real_field(op.basis, rng) for _ in range(6)]
        serial = [op.apply(u).coeffs for u in us]
        with ThreadPoolExecutor(3) as pool:
            par = list(pool.map(lambda u: op.apply(u).coeffs, us))
        for a, b in zip(serial, par):
            np.testing.assert_array_equal(a, b)

    def test_deterministic(self, model, rng):
        op = build_operator(model, 4, "cubic")
        u = random_real_field(op.basis, rng)
        np.testing.assert_array_equal(op.apply(u).coeffs, op.apply(u).coeffs)

    def test_potential_part(self, model, rng):
        op = build_operator(model, 3, "cubic")
        u = random_real_field(op.basis, rng)
        np.testing.assert_allclose(op.apply_potential(u).coeffs + op.kinetic * u.coeffs, op.apply(u).coeffs, atol=1e-13)

    def test_kinetic_invariant(self, model):
        op = build_operator(model, 3, "cubic")
        assert op.kinetic[op.basis.position((0, 0, 0))] == 0
        assert np.all(np.delete(op.kinetic, op.basis.size // 2) > 0)
        assert op.potential.basis.M == 6


class TestDenseMatrix:
    def test_free_is_diagonal(self, cell2):
        op = build_operator(ChargeConfig(cell2), 2, "cubic")
        H = op.dense_matrix()
        np.testing.assert_array_equal(H, np.diag(op.kinetic))

    def test_entry_formula(self):
        cell = Cell(2 * np.pi)
        op = build_operator(ChargeConfig(cell, ((1.0, (0, 0, 0)),)), 1, "spherical")
        assert op.size == 7
        H = op.dense_matrix()
        i, j = op.basis.position((1, 0, 0)), op.basis.position((0, 0, 0))
        assert H[i, j] == pytest.approx(-1 / (2 * np.pi**2), rel=1e-14)
        assert H[i, j] == pytest.approx(coulomb_coefficient(op.config, (1, 0, 0)), rel=1e-14)

    def test_per_entry_oracle(self, cell2):
        cfg = ChargeConfig(cell2, ((1.3, (0.11, -0.42, 0.77)), (2.0, (-0.3, 0.5, 0.05))))
        op = build_operator(cfg, 1, "cubic")
        H = op.dense_matrix()
        idx = op.basis.indices
        for a in range(op.size):
            for b in range(op.size):
                expected = coulomb_coefficient(cfg, idx[a] - idx[b]) + (op.kinetic[a] if a == b else 0.0)
                assert abs(H[a, b] - expected) <= 1e-14

    def test_hermitian(self, cell2):
        cfg = ChargeConfig(cell2, ((1.3, (0.11, -0.42, 0.77)), (2.0, (-0.3, 0.5, 0.05))))
        H = build_operator(cfg, 2, "cubic").dense_matrix()
        assert np.abs(H - H.conj().T).max() <= 1e-14

    def test_oracle_scale_guard(self, model):
        op = build_operator(model, 14, "cubic")
        assert op.size > 20000
        with pytest.raises(OracleScaleError):
            op.dense_matrix()

    def test_rayleigh_quotient(self, model, rng):
        op = build_operator(model, 2, "spherical")
        u = random_real_field(op.basis, rng)
        H = op.dense_matrix()
        expected = (np.vdot(u.coeffs, H @ u.coeffs) / np.vdot(u.coeffs, u.coeffs)).real
        assert op.rayleigh_quotient(u) == pytest.approx(expected, rel=1e-12)
