"""Fourier coefficients of the periodic Coulomb potential and of smooth potentials.

Conventions: a potential ``V(x) = sum_K v_K exp(i K.x)`` has *plain* Fourier
coefficients ``v_K``; the :class:`FourierField` that stores it holds the
coefficients in the normalized plane-wave basis, ``|cell|^(1/2) v_K``.

Point charges are attractive: near each nucleus the potential behaves like
``-Z/|x - R|``.  A uniform neutralizing background fixes the mean to zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateConfigurationError
from .lattice import Cell, CutoffBasis, FourierField, Shape

_OVERLAP_TOL = 1e-12


@dataclass(frozen=True)
class ChargeConfig:
    cell: Cell
    charges: tuple = ()

    def __post_init__(self):
        cleaned = []
        for item in self.charges:
            Z, R = item
            Z = float(Z)
            if not (np.isfinite(Z) and Z > 0):
                raise ValueError(f"charges must be positive, got Z={Z}")
            R = self.cell.reduce(np.asarray(R, dtype=float).reshape(3))
            cleaned.append((Z, tuple(float(x) for x in R)))
        object.__setattr__(self, "charges", tuple(cleaned))
        self.check_distinct()

    @property
    def Z(self) -> np.ndarray:
        return np.array([z for z, _ in self.charges], dtype=float)

    @property
    def positions(self) -> np.ndarray:
        return np.array([r for _, r in self.charges], dtype=float).reshape(-1, 3)

    def __len__(self):
        return len(self.charges)

    def check_distinct(self):
        R = self.positions
        for i in range(len(R)):
            for j in range(i):
                d = self.cell.reduce(R[i] - R[j])
                if np.linalg.norm(d) <= _OVERLAP_TOL * self.cell.L:
                    raise DegenerateConfigurationError(
                        f"charges {j} and {i} coincide modulo the lattice at {tuple(R[i])}"
                    )

    def scaled(self, s: float) -> "ChargeConfig":
        return ChargeConfig(self.cell, tuple((s * z, r) for z, r in self.charges))

    def translated(self, t) -> "ChargeConfig":
        t = np.asarray(t, dtype=float)
        return ChargeConfig(self.cell, tuple((z, tuple(np.asarray(r) + t)) for z, r in self.charges))


@dataclass(frozen=True)
class SmoothPotential:
    """Finite Fourier series ``W(x) = sum_k w_k exp(i K.x)`` (plain coefficients)."""

    terms: dict = field(default_factory=dict)

    def __post_init__(self):
        terms = {tuple(int(v) for v in k): complex(w) for k, w in dict(self.terms).items()}
        for k, w in terms.items():
            mk = tuple(-v for v in k)
            partner = terms.get(mk, 0.0)
            if abs(partner - np.conj(w)) > 1e-14 * max(1.0, abs(w)):
                raise ValueError(f"smooth potential is not real: w{k}={w}, w{mk}={partner}")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def from_cosines(cls, terms) -> "SmoothPotential":
        """Build ``sum a * cos(K.x)`` from ``(k, a)`` pairs; ``k = 0`` adds the constant ``a``."""
        coeffs: dict = {}
        for k, a in terms:
            k = tuple(int(v) for v in k)
            if not any(k):
                coeffs[k] = coeffs.get(k, 0.0) + a
                continue
            mk = tuple(-v for v in k)
            coeffs[k] = coeffs.get(k, 0.0) + 0.5 * a
            coeffs[mk] = coeffs.get(mk, 0.0) + 0.5 * a
        return cls(coeffs)

    @classmethod
    def constant(cls, c: float) -> "SmoothPotential":
        return cls({(0, 0, 0): c})

    @property
    def max_index(self) -> int:
        return max((max(abs(v) for v in k) for k in self.terms), default=0)

    def __bool__(self):
        return bool(self.terms)


def coulomb_coefficient(config: ChargeConfig, k) -> complex:
    """Plain Fourier coefficient of the periodic Coulomb potential at index ``k``."""
    return complex(coulomb_coefficients(config, np.asarray(k).reshape(1, 3))[0])


def coulomb_coefficients(config: ChargeConfig, indices) -> np.ndarray:
    indices = np.asarray(indices, dtype=np.int64).reshape(-1, 3)
    dk = config.cell.dk
    K2 = dk**2 * np.einsum("ij,ij->i", indices, indices).astype(float)
    out = np.zeros(len(indices), dtype=complex)
    for Z, R in config.charges:
        out += Z * _phases(indices, R, dk)
    nonzero = K2 > 0
    out[nonzero] *= -4.0 * np.pi / (config.cell.volume * K2[nonzero])
    out[~nonzero] = 0.0
    return out


def _phases(indices: np.ndarray, R, dk: float) -> np.ndarray:
    # exp(-i K.R) as a product of 1-D factors: exactly conjugate under k -> -k.
    p = np.ones(len(indices), dtype=complex)
    for d in range(3):
        p *= np.exp(-1j * ((dk * indices[:, d]) * R[d]))
    return p


def smooth_coefficients(w: SmoothPotential, basis: CutoffBasis) -> np.ndarray:
    out = np.zeros(basis.size, dtype=complex)
    if not w.terms:
        return out
    ks = np.array(list(w.terms.keys()), dtype=np.int64)
    vals = np.array(list(w.terms.values()), dtype=complex)
    pos = basis.position(ks)
    keep = pos >= 0
    out[pos[keep]] = vals[keep]
    return out


def assemble_potential_field(
    config: ChargeConfig,
    w: SmoothPotential | None,
    max_wavenumber: int,
    shape: Shape | str = Shape.SPHERICAL,
) -> FourierField:
    """Total potential ``V_per + W_per`` truncated at ``max_wavenumber`` (normalized coefficients)."""
    config.check_distinct()
    basis = CutoffBasis(config.cell, max_wavenumber, shape)
    plain = coulomb_coefficients(config, basis.indices)
    if w:
        plain += smooth_coefficients(w, basis)
    return FourierField(basis, np.sqrt(config.cell.volume) * plain, real=True)
