"""Periodic cubic cell, plane-wave cutoff sets and coefficient/grid layout.

Plane waves are ``e_K(x) = exp(i K.x) / |cell|^(1/2)`` with ``K = 2*pi*k/L`` for
integer triples ``k``.  A field is stored as a dense coefficient vector over
the retained index set; FFT grids are only used as scratch space.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft

from .errors import InvalidCutoffError


class Shape(str, enum.Enum):
    SPHERICAL = "spherical"
    CUBIC = "cubic"

    @classmethod
    def parse(cls, value: "Shape | str") -> "Shape":
        if isinstance(value, Shape):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown cutoff shape {value!r}; expected 'spherical' or 'cubic'") from None


@dataclass(frozen=True)
class Cell:
    """Cubic cell ``[-L/2, L/2]^3`` repeated over the lattice ``L Z^3``."""

    L: float

    def __post_init__(self):
        if not (np.isfinite(self.L) and self.L > 0):
            raise ValueError(f"cell edge must be positive, got {self.L}")
        object.__setattr__(self, "L", float(self.L))

    @property
    def volume(self) -> float:
        return self.L**3

    @property
    def dk(self) -> float:
        """Reciprocal lattice spacing ``2*pi/L``."""
        return 2.0 * np.pi / self.L

    def reduce(self, points) -> np.ndarray:
        """Map points into the fundamental cell ``[-L/2, L/2)^3``."""
        p = np.asarray(points, dtype=float)
        return p - self.L * np.floor(p / self.L + 0.5)


def is_smooth_235(n: int) -> bool:
    for p in (2, 3, 5):
        while n % p == 0:
            n //= p
    return n == 1


def next_smooth_235(n: int) -> int:
    """Smallest integer ``>= n`` with no prime factor other than 2, 3, 5."""
    n = max(int(n), 1)
    while not is_smooth_235(n):
        n += 1
    return n


def _index_cube(M: int) -> np.ndarray:
    r = np.arange(-M, M + 1, dtype=np.int32)
    k1, k2, k3 = np.meshgrid(r, r, r, indexing="ij")
    return np.stack([k1.ravel(), k2.ravel(), k3.ravel()], axis=1)


class CutoffBasis:
    """Integer index set ``{k : |k| <= M}`` (spherical) or ``{k : |k|_inf <= M}`` (cubic).

    Indices are kept in lexicographic order of ``(k1, k2, k3)``.  Because the
    set is closed under negation, ``-indices[i] == indices[n - 1 - i]``.
    """

    def __init__(self, cell: Cell, M: int, shape: Shape | str = Shape.SPHERICAL):
        if int(M) != M or M < 1:
            raise InvalidCutoffError(f"cutoff M must be a positive integer, got {M!r}")
        self.cell = cell
        self.M = int(M)
        self.shape = Shape.parse(shape)
        cube = _index_cube(self.M)
        if self.shape is Shape.SPHERICAL:
            keep = np.einsum("ij,ij->i", cube, cube) <= self.M**2
        else:
            keep = np.ones(len(cube), dtype=bool)
        self.indices = cube[keep]
        self.indices.setflags(write=False)
        self._cube_mask = keep

    def __len__(self) -> int:
        return len(self.indices)

    def __repr__(self):
        return f"CutoffBasis(L={self.cell.L}, M={self.M}, shape={self.shape.value}, size={len(self)})"

    @property
    def size(self) -> int:
        return len(self.indices)

    @cached_property
    def wavevectors(self) -> np.ndarray:
        return self.cell.dk * self.indices.astype(float)

    @cached_property
    def k2(self) -> np.ndarray:
        """Squared integer norms ``|k|^2``."""
        k = self.indices.astype(np.int64)
        return np.einsum("ij,ij->i", k, k)

    @property
    def neg(self) -> np.ndarray:
        """Permutation taking position of ``k`` to position of ``-k``."""
        return np.arange(self.size)[::-1]

    @cached_property
    def cube_lookup(self) -> np.ndarray:
        """Flat ``(2M+1)^3`` array giving the position of each ``k``, or -1."""
        lut = np.full(self._cube_mask.size, -1, dtype=np.int64)
        lut[self._cube_mask] = np.arange(self.size)
        return lut

    def position(self, k) -> np.ndarray:
        """Positions of integer triples ``k`` (shape ``(..., 3)``); -1 if not retained."""
        k = np.asarray(k, dtype=np.int64)
        side = 2 * self.M + 1
        inside = np.all(np.abs(k) <= self.M, axis=-1)
        kc = np.clip(k + self.M, 0, side - 1)
        flat = (kc[..., 0] * side + kc[..., 1]) * side + kc[..., 2]
        return np.where(inside, self.cube_lookup[flat], -1)

    def contains(self, other: "CutoffBasis") -> bool:
        return other.cell == self.cell and bool(np.all(self.position(other.indices) >= 0))

    def same_as(self, other: "CutoffBasis") -> bool:
        return (
            other is self
            or (other.cell == self.cell and other.M == self.M and other.shape == self.shape)
        )


def build_basis(cell: Cell, M: int, shape: Shape | str = Shape.SPHERICAL) -> CutoffBasis:
    return CutoffBasis(cell, M, shape)


def fft_grid_size(basis: CutoffBasis, min_size: int = 0) -> tuple[int, int, int]:
    """Alias-free grid for (potential up to 2M) x (state up to M) products.

    Any 2,3,5-smooth ``N >= 4M + 1`` keeps aliased wavenumbers of the product
    (which lives in ``[-3M, 3M]``) out of the retained range ``[-M, M]``.
    """
    n = next_smooth_235(max(4 * basis.M + 1, int(min_size)))
    return (n, n, n)


def _grid_slots(indices: np.ndarray, shape) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return tuple(np.mod(indices[:, d], shape[d]) for d in range(3))


@dataclass
class FourierField:
    """Coefficients ``u_K`` of ``u = sum_K u_K e_K`` over a cutoff basis.

    ``real`` flags a field meant to represent a real-valued function, i.e.
    ``coeffs[-k] == conj(coeffs[k])``.
    """

    basis: CutoffBasis
    coeffs: np.ndarray
    real: bool = True
    meta: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape != (self.basis.size,):
            raise ValueError(
                f"coefficient vector has shape {self.coeffs.shape}, basis has {self.basis.size} entries"
            )

    def copy(self) -> "FourierField":
        return FourierField(self.basis, self.coeffs.copy(), self.real)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def inner(self, other: "FourierField") -> complex:
        """L2 inner product ``<self, other>`` (conjugate-linear in ``self``)."""
        return complex(np.vdot(self.coeffs, other.coeffs))

    def hermitian_defect(self) -> float:
        """Relative violation of ``c[-k] = conj(c[k])``."""
        c = self.coeffs
        scale = max(np.linalg.norm(c), np.finfo(float).tiny)
        return float(np.linalg.norm(c - np.conj(c[::-1])) / scale)

    def symmetrized(self) -> "FourierField":
        c = 0.5 * (self.coeffs + np.conj(self.coeffs[::-1]))
        return FourierField(self.basis, c, True)

    def to_grid(self, shape=None, workers: int | None = None) -> np.ndarray:
        """Function values on the uniform grid ``x_j = j L / N`` (complex array)."""
        if shape is None:
            shape = fft_grid_size(self.basis)
        if any(n <= 2 * self.basis.M for n in shape):
            raise ValueError(f"grid {shape} too small for cutoff M={self.basis.M}")
        a = np.zeros(shape, dtype=complex)
        a[_grid_slots(self.basis.indices, shape)] = self.coeffs
        u = scipy.fft.ifftn(a, workers=workers)
        u *= np.prod(shape) / np.sqrt(self.basis.cell.volume)
        return u

    def evaluate_at_points(self, points) -> np.ndarray:
        """``u(x)`` at arbitrary points, by separable phase contraction over the index cube."""
        return evaluate_at_points(self, points)

    def grid_points(self, shape) -> np.ndarray:
        L = self.basis.cell.L
        axes = [np.arange(n) * L / n for n in shape]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def evaluate_at_points(field_: FourierField, points) -> np.ndarray:
    basis = field_.basis
    pts = basis.cell.reduce(np.atleast_2d(np.asarray(points, dtype=float)))
    M = basis.M
    side = 2 * M + 1
    cube = np.zeros(side**3, dtype=complex)
    cube[basis._cube_mask] = field_.coeffs
    cube = cube.reshape(side, side, side)
    ks = np.arange(-M, M + 1) * basis.cell.dk
    out = np.empty(len(pts), dtype=complex)
    for i, x in enumerate(pts):
        p1, p2, p3 = (np.exp(1j * ks * x[d]) for d in range(3))
        out[i] = np.einsum("abc,a,b,c->", cube, p1, p2, p3, optimize=True)
    return out / np.sqrt(basis.cell.volume)


def plane_wave(basis: CutoffBasis, k, amplitude: complex = 1.0) -> FourierField:
    """Single plane wave ``amplitude * e_K`` (complex-valued unless k = 0)."""
    c = np.zeros(basis.size, dtype=complex)
    pos = int(basis.position(k))
    if pos < 0:
        raise ValueError(f"wavevector index {tuple(k)} outside the cutoff")
    c[pos] = amplitude
    return FourierField(basis, c, real=not np.any(k))


def random_real_field(basis: CutoffBasis, rng: np.random.Generator, decay: float = 0.0) -> FourierField:
    """Random Hermitian-symmetric field; ``decay`` damps coefficients as ``(1+|k|^2)^(-decay/2)``."""
    c = rng.standard_normal(basis.size) + 1j * rng.standard_normal(basis.size)
    if decay:
        c *= (1.0 + basis.k2) ** (-0.5 * decay)
    c = 0.5 * (c + np.conj(c[::-1]))
    return FourierField(basis, c, True)
