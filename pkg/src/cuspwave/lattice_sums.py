"""Lattice sums of ``|k|^-p`` over ``Z^3`` and their tails outside a cutoff."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import special

from .errors import DivergentSumError, InvalidCutoffError
from .lattice import Shape

# exp(-pi * 6^2) ~ 1e-49: image sums below are converged far past double precision.
_EWALD_RANGE = 6


def upper_gamma(a: float, x):
    """Upper incomplete gamma ``Gamma(a, x)`` for any real ``a`` and ``x > 0``."""
    x = np.asarray(x, dtype=float)
    if a > 0:
        return special.gammaincc(a, x) * special.gamma(a)
    if a == 0:
        return special.exp1(x)
    # Gamma(a, x) = (Gamma(a + 1, x) - x^a e^-x) / a
    return (upper_gamma(a + 1.0, x) - x**a * np.exp(-x)) / a


@lru_cache(maxsize=None)
def _nonzero_norms2(n: int) -> np.ndarray:
    r = np.arange(-n, n + 1)
    k1, k2, k3 = np.meshgrid(r, r, r, indexing="ij")
    q = (k1**2 + k2**2 + k3**2).ravel().astype(float)
    return q[q > 0]


@lru_cache(maxsize=None)
def lattice_zeta(p: float) -> float:
    """``sum_{k in Z^3, k != 0} |k|^-p`` for ``p > 3`` via the Ewald splitting at ``t = 1``.

    The slowly decaying part is moved to reciprocal space with Poisson
    summation; both remaining sums decay like ``exp(-pi |k|^2)``.
    """
    if p <= 3:
        raise DivergentSumError(f"lattice sum of |k|^-{p} diverges in three dimensions")
    s = 0.5 * p
    q = _nonzero_norms2(_EWALD_RANGE)
    direct = np.sum(upper_gamma(s, np.pi * q) / q**s) / special.gamma(s)
    recip = np.sum((np.pi * q) ** (s - 1.5) * upper_gamma(1.5 - s, np.pi * q))
    return float(direct + np.pi**s / special.gamma(s) * (1.0 / (s - 1.5) - 1.0 / s + recip))


def _fractional(shift) -> np.ndarray:
    a = np.asarray(shift, dtype=float).reshape(3)
    return a - np.round(a)


@lru_cache(maxsize=None)
def _phased_zeta(p: float, a: tuple) -> float:
    s = 0.5 * p
    a = np.array(a)
    r = np.arange(-_EWALD_RANGE, _EWALD_RANGE + 1)
    k = np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3).astype(float)
    q = np.einsum("ij,ij->i", k, k)
    nz = q > 0
    direct = np.sum(np.cos(2 * np.pi * k[nz] @ a) * upper_gamma(s, np.pi * q[nz]) / q[nz] ** s) / special.gamma(s)
    d = k - a
    qd = np.einsum("ij,ij->i", d, d)
    hit = qd < 1e-28
    recip = np.sum((np.pi * qd[~hit]) ** (s - 1.5) * upper_gamma(1.5 - s, np.pi * qd[~hit]))
    if np.any(hit):
        recip += 1.0 / (s - 1.5)
    return float(direct + np.pi**s / special.gamma(s) * (recip - 1.0 / s))


def phased_lattice_zeta(p: float, shift) -> float:
    """``sum_{k != 0} cos(2 pi k.a) |k|^-p`` for a fractional shift ``a`` (``p > 3``)."""
    if p <= 3:
        raise DivergentSumError(f"lattice sum of |k|^-{p} diverges in three dimensions")
    a = _fractional(shift)
    if not np.any(a):
        return lattice_zeta(float(p))
    return _phased_zeta(float(p), tuple(a))


def inner_sum(M: int, p: float, shape: Shape | str, shift=None) -> float:
    """``sum |k|^-p`` (times ``cos(2 pi k.a)`` if ``shift`` is given) over ``0 < |k| <= M``
    (or ``0 < |k|_inf <= M``)."""
    shape = Shape.parse(shape)
    a = None if shift is None else _fractional(shift)
    r = np.arange(-M, M + 1, dtype=np.int64)
    total = 0.0
    # slab by slab keeps memory at O(M^2)
    k2g, k3g = np.meshgrid(r, r, indexing="ij")
    k2g, k3g = k2g.ravel(), k3g.ravel()
    k23 = k2g**2 + k3g**2
    for k1 in r:
        q = (k1 * k1 + k23).astype(float)
        keep = (q > 0) & (q <= M * M) if shape is Shape.SPHERICAL else q > 0
        terms = q[keep] ** (-0.5 * p)
        if a is not None:
            terms = terms * np.cos(2 * np.pi * (k1 * a[0] + k2g[keep] * a[1] + k3g[keep] * a[2]))
        total += math.fsum(terms)
    return total


def tail_sum(M: int, exponent: float, shape: Shape | str = Shape.SPHERICAL) -> float:
    """``sum |k|^-p`` over integer ``k`` outside the cutoff ``|k| <= M`` (or ``|k|_inf <= M``)."""
    if exponent <= 3:
        raise DivergentSumError(f"tail of |k|^-{exponent} diverges in three dimensions; need exponent >= 4")
    if int(M) != M or M < 1:
        raise InvalidCutoffError(f"cutoff must be a positive integer, got {M!r}")
    return lattice_zeta(float(exponent)) - inner_sum(int(M), exponent, shape)


def phased_tail_sum(M: int, exponent: float, shape: Shape | str, shift) -> float:
    """``sum cos(2 pi k.a) |k|^-p`` outside the cutoff; ``shift = 0`` gives :func:`tail_sum`."""
    if exponent <= 3:
        raise DivergentSumError(f"tail of |k|^-{exponent} diverges in three dimensions; need exponent >= 4")
    if int(M) != M or M < 1:
        raise InvalidCutoffError(f"cutoff must be a positive integer, got {M!r}")
    return phased_lattice_zeta(exponent, shift) - inner_sum(int(M), exponent, shape, shift)


def tail_asymptote(exponent: float, shape: Shape | str) -> float:
    """Limit of ``M^(p-3) * tail_sum(M, p)``: the integral of ``|x|^-p`` outside the unit ball/cube."""
    shape = Shape.parse(shape)
    p = exponent
    if shape is Shape.SPHERICAL:
        return 4.0 * np.pi / (p - 3.0)
    if p == 6:
        return CUBIC_A
    # 6 faces x (1/(p-3)) * integral over the face [-1,1]^2 of (1+u^2+v^2)^(-p/2 + ... )
    from scipy import integrate

    val, _ = integrate.dblquad(lambda v, u: (1 + u * u + v * v) ** (-0.5 * p), -1, 1, -1, 1)
    return 6.0 * val / (p - 3.0)


CUBIC_A = 1.0 / 3.0 + 2.5 * math.sqrt(2.0) * math.atan(1.0 / math.sqrt(2.0))
