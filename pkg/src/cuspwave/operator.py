"""Matrix-free Galerkin application of ``H = -1/2 Laplacian + V_per + W_per``."""

from __future__ import annotations

import numpy as np
import scipy.fft

from .errors import DimensionError, OracleScaleError
from .lattice import CutoffBasis, FourierField, fft_grid_size
from .potential import ChargeConfig, SmoothPotential, assemble_potential_field

DENSE_ORACLE_LIMIT = 20000


class HamiltonianOperator:
    """Galerkin restriction of the periodic Hamiltonian to a cutoff basis.

    The potential is kept up to wavenumber ``2M`` and sampled on a grid of at
    least ``4M + 1`` points per axis, so ``apply`` reproduces the exact
    Galerkin matrix-vector product (no aliasing into retained modes).
    Instances are read-only after construction; ``apply`` allocates its own
    FFT workspace per call and can be used from several threads.
    """

    def __init__(
        self,
        basis: CutoffBasis,
        config: ChargeConfig,
        smooth: SmoothPotential | None = None,
        grid_min: int = 0,
        workers: int | None = None,
    ):
        if config.cell != basis.cell:
            raise DimensionError("charge configuration and basis use different cells")
        self.basis = basis
        self.config = config
        self.smooth = smooth or SmoothPotential()
        self.workers = workers
        self.kinetic = 0.5 * basis.cell.dk**2 * basis.k2.astype(float)
        self.potential = assemble_potential_field(config, self.smooth, 2 * basis.M, basis.shape)
        self.grid_shape = fft_grid_size(basis, grid_min)
        v = self.potential.to_grid(self.grid_shape, workers=workers)
        self.v_grid = np.ascontiguousarray(v.real)
        self.v_grid.setflags(write=False)
        self._setup_slots()

    def _setup_slots(self):
        N1, N2, N3 = self.grid_shape
        k = self.basis.indices.astype(np.int64)
        self._full_flat = (np.mod(k[:, 0], N1) * N2 + np.mod(k[:, 1], N2)) * N3 + np.mod(k[:, 2], N3)
        half = k[:, 2] >= 0
        self._half_pos = np.flatnonzero(half)
        self._half_flat = (np.mod(k[half, 0], N1) * N2 + np.mod(k[half, 1], N2)) * (N3 // 2 + 1) + k[half, 2]
        self._low_pos = np.flatnonzero(~half)

    @property
    def size(self) -> int:
        return self.basis.size

    def _coeffs(self, u):
        if isinstance(u, FourierField):
            if not u.basis.same_as(self.basis):
                raise DimensionError(f"field lives on {u.basis!r}, operator on {self.basis!r}")
            return u.coeffs, u.real
        u = np.asarray(u)
        if u.shape[0] != self.basis.size:
            raise DimensionError(f"vector length {u.shape[0]} != basis size {self.basis.size}")
        return u, False

    def apply(self, u, hermitian: bool | None = None):
        """``Pi_M H u``; accepts a FourierField, a vector, or an ``(n, b)`` block."""
        c, flagged = self._coeffs(u)
        hermitian = flagged if hermitian is None else hermitian
        out = self.apply_potential_array(c, hermitian) + self.kinetic.reshape((-1,) + (1,) * (c.ndim - 1)) * c
        if isinstance(u, FourierField):
            return FourierField(self.basis, out, u.real)
        return out

    def apply_potential(self, u, hermitian: bool | None = None):
        """Potential part ``Pi_M (V_per + W_per) u`` only."""
        c, flagged = self._coeffs(u)
        hermitian = flagged if hermitian is None else hermitian
        out = self.apply_potential_array(c, hermitian)
        if isinstance(u, FourierField):
            return FourierField(self.basis, out, u.real)
        return out

    def apply_potential_array(self, c: np.ndarray, hermitian: bool = False) -> np.ndarray:
        if c.ndim == 2:
            return np.stack([self.apply_potential_array(c[:, j], hermitian) for j in range(c.shape[1])], axis=1)
        if hermitian:
            return self._vmul_real(c)
        return self._vmul_complex(c)

    def _vmul_complex(self, c):
        a = np.zeros(self.grid_shape, dtype=complex)
        a.flat[self._full_flat] = c
        f = scipy.fft.ifftn(a, workers=self.workers, overwrite_x=True)
        f *= self.v_grid
        F = scipy.fft.fftn(f, workers=self.workers, overwrite_x=True)
        return F.flat[self._full_flat]

    def _vmul_real(self, c):
        # c must satisfy c[-k] = conj(c[k]); only the k3 >= 0 half is scattered.
        N1, N2, N3 = self.grid_shape
        a = np.zeros((N1, N2, N3 // 2 + 1), dtype=complex)
        a.flat[self._half_flat] = c[self._half_pos]
        f = scipy.fft.irfftn(a, s=self.grid_shape, workers=self.workers, overwrite_x=True)
        f *= self.v_grid
        F = scipy.fft.rfftn(f, workers=self.workers, overwrite_x=True)
        out = np.empty(self.basis.size, dtype=complex)
        out[self._half_pos] = F.flat[self._half_flat]
        out[self._low_pos] = np.conj(out[self.basis.size - 1 - self._low_pos])
        return out

    def rayleigh_quotient(self, u: FourierField) -> float:
        Hu = self.apply(u)
        return float(np.vdot(u.coeffs, Hu.coeffs).real / np.vdot(u.coeffs, u.coeffs).real)

    def dense_matrix(self) -> np.ndarray:
        """Explicit Galerkin matrix ``H[K, K'] = |K|^2/2 delta + (V+W)^_{K-K'} / |cell|^(1/2)``."""
        n = self.basis.size
        if n > DENSE_ORACLE_LIMIT:
            raise OracleScaleError(f"basis of {n} plane waves exceeds dense oracle limit {DENSE_ORACLE_LIMIT}")
        idx = self.basis.indices.astype(np.int64)
        pot = self.potential.coeffs / np.sqrt(self.basis.cell.volume)
        H = np.empty((n, n), dtype=complex)
        chunk = max(1, 4_000_000 // max(n, 1))
        for start in range(0, n, chunk):
            rows = idx[start:start + chunk]
            pos = self.potential.basis.position(rows[:, None, :] - idx[None, :, :])
            H[start:start + chunk] = pot[pos]
        H[np.diag_indices(n)] += self.kinetic
        return H


def build_operator(config: ChargeConfig, M: int, shape="cubic", smooth=None, **kwargs) -> HamiltonianOperator:
    basis = CutoffBasis(config.cell, M, shape)
    return HamiltonianOperator(basis, config, smooth, **kwargs)
