"""Lowest eigenpairs of the Galerkin problem on a cutoff basis.

The iterative path is a locally optimal block preconditioned conjugate
gradient (LOBPCG) iteration that stays in the real vector space of
Hermitian-symmetric coefficient vectors (real-valued functions): every
Rayleigh-Ritz step combines trial vectors with *real* coefficients, so the
Ritz vectors remain real functions and need no phase fixing beyond a sign.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .errors import AnchorError, ConvergenceError, DimensionError
from .lattice import FourierField
from .operator import HamiltonianOperator

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverOptions:
    n_eigenpairs: int = 1
    block_size: int | None = None
    residual_tol: float = 1e-8
    max_iterations: int = 400
    shift: float | None = None
    seed: int = 0
    method: str = "auto"  # "auto" | "lobpcg" | "dense"
    dense_limit: int = 2000

    def __post_init__(self):
        if self.n_eigenpairs < 1:
            raise ValueError("n_eigenpairs must be >= 1")
        if self.block_size is not None and self.block_size < self.n_eigenpairs:
            raise ValueError("block_size must be >= n_eigenpairs")
        if not self.residual_tol > 0:
            raise ValueError("residual_tol must be positive")
        if self.shift is not None and not self.shift > 0:
            raise ValueError("preconditioner shift must be positive")
        if self.method not in ("auto", "lobpcg", "dense"):
            raise ValueError(f"unknown method {self.method!r}")

    @property
    def block(self) -> int:
        return self.block_size if self.block_size is not None else self.n_eigenpairs + 2


@dataclass
class EigenSolution:
    eigenvalues: np.ndarray
    eigenvectors: list
    residuals: np.ndarray
    iterations: int
    method: str = "lobpcg"
    shift: float | None = None
    history: list = field(default_factory=list, repr=False)
    config: object = field(default=None, repr=False)
    smooth: object = field(default=None, repr=False)

    @property
    def basis(self):
        return self.eigenvectors[0].basis

    @property
    def ground_energy(self) -> float:
        return float(self.eigenvalues[0])

    def gram(self) -> np.ndarray:
        C = np.stack([v.coeffs for v in self.eigenvectors], axis=1)
        return C.conj().T @ C


def _real_gram(A, B):
    return (A.conj().T @ B).real


def _orthonormalize(V, AV=None, drop=1e-10):
    """SVQB orthonormalization with real coefficients; drops near-dependent directions."""
    G = _real_gram(V, V)
    G = 0.5 * (G + G.T)
    d = np.sqrt(np.clip(np.diag(G), np.finfo(float).tiny, None))
    Gs = G / np.outer(d, d)
    w, U = np.linalg.eigh(Gs)
    keep = w > drop * w.max()
    T = (U[:, keep] / np.sqrt(w[keep])) / d[:, None]
    return (V @ T, None if AV is None else AV @ T)


def _project_out(V, AV, Q, AQ):
    for _ in range(2):
        C = _real_gram(Q, V)
        V = V - Q @ C
        if AV is not None:
            AV = AV - AQ @ C
    return V, AV


def _initial_block(op: HamiltonianOperator, b: int, seed: int) -> np.ndarray:
    basis = op.basis
    rng = np.random.default_rng(seed)
    X = np.empty((basis.size, b), dtype=complex)
    X[:, 0] = 0.0
    X[basis.size // 2, 0] = 1.0  # constant function
    for j in range(1, b):
        c = rng.standard_normal(basis.size) + 1j * rng.standard_normal(basis.size)
        c /= 1.0 + basis.k2
        X[:, j] = 0.5 * (c + np.conj(c[::-1]))
    return X


def lanczos_estimate(op: HamiltonianOperator, steps: int = 3) -> float:
    """Lowest Ritz value after a few Lanczos steps from the constant function."""
    n = op.basis.size
    q = np.zeros(n, dtype=complex)
    q[n // 2] = 1.0
    alphas, betas = [], []
    q_prev = np.zeros_like(q)
    beta = 0.0
    for _ in range(min(steps, n)):
        w = op.apply(q, hermitian=True)
        alpha = np.vdot(q, w).real
        w = w - alpha * q - beta * q_prev
        alphas.append(alpha)
        beta = np.linalg.norm(w)
        if beta < 1e-14:
            break
        betas.append(beta)
        q_prev, q = q, w / beta
    k = len(alphas)
    T = np.diag(alphas) + np.diag(betas[: k - 1], 1) + np.diag(betas[: k - 1], -1)
    return float(np.linalg.eigvalsh(T)[0])


def _lobpcg(op: HamiltonianOperator, opts: SolverOptions, shift: float) -> EigenSolution:
    n, b = opts.n_eigenpairs, min(opts.block, op.basis.size)
    precond = 1.0 / (op.kinetic + shift)
    X = _initial_block(op, b, opts.seed)
    X, _ = _orthonormalize(X)
    X = X[:, :b]
    AX = op.apply(X, hermitian=True)
    P = AP = None
    lam = np.zeros(X.shape[1])
    history = []
    rn = np.full(X.shape[1], np.inf)

    for it in range(opts.max_iterations + 1):
        Hs = _real_gram(X, AX)
        lam, C = np.linalg.eigh(0.5 * (Hs + Hs.T))
        X, AX = X @ C, AX @ C
        R = AX - X * lam
        rn = np.linalg.norm(R, axis=0)
        history.append(rn[:n].max())
        if np.all(rn[:n] <= opts.residual_tol):
            # guard against drift of the recurrence-updated AX
            AX = op.apply(X, hermitian=True)
            R = AX - X * lam
            rn = np.linalg.norm(R, axis=0)
            if np.all(rn[:n] <= opts.residual_tol):
                break
        if it == opts.max_iterations:
            break

        active = rn > 0.1 * opts.residual_tol
        W = precond[:, None] * R[:, active]
        W, _ = _project_out(W, None, X, None)
        W, _ = _orthonormalize(W)
        blocks = [X, W]
        AW = op.apply(W, hermitian=True)
        ablocks = [AX, AW]
        if P is not None:
            P, AP = _project_out(P, AP, X, AX)
            P, AP = _project_out(P, AP, W, AW)
            P, AP = _orthonormalize(P, AP)
            if P.shape[1]:
                blocks.append(P)
                ablocks.append(AP)
        S = np.concatenate(blocks, axis=1)
        AS = np.concatenate(ablocks, axis=1)
        G = _real_gram(S, S)
        Hs = _real_gram(S, AS)
        try:
            mu, V = scipy.linalg.eigh(0.5 * (Hs + Hs.T), 0.5 * (G + G.T))
        except np.linalg.LinAlgError:
            S, AS = _orthonormalize(S, AS)
            Hs = _real_gram(S, AS)
            mu, V = np.linalg.eigh(0.5 * (Hs + Hs.T))
        V = V[:, :b]
        X = S @ V
        AX = AS @ V
        Vp = V.copy()
        Vp[:b] = 0.0
        P = S @ Vp
        AP = AS @ Vp
        log.debug("lobpcg it=%d lam=%s res=%s", it, lam[:n], rn[:n])

    vecs = [FourierField(op.basis, 0.5 * (X[:, j] + np.conj(X[::-1, j])), True) for j in range(n)]
    sol = EigenSolution(
        eigenvalues=lam[:n].copy(),
        eigenvectors=vecs,
        residuals=rn[:n].copy(),
        iterations=it,
        method="lobpcg",
        shift=shift,
        history=history,
    )
    if not np.all(rn[:n] <= opts.residual_tol):
        raise ConvergenceError(
            f"LOBPCG did not reach residual {opts.residual_tol:g} in {opts.max_iterations} iterations "
            f"(best residuals {rn[:n]})",
            residuals=rn[:n].copy(),
            iterations=it,
            solution=sol,
        )
    return sol


def _real_function_basis_matrix(H: np.ndarray) -> np.ndarray:
    """``H`` expressed in the real orthonormal basis {1, sqrt2 cos K.x, sqrt2 sin K.x}."""
    n = H.shape[0]
    h = n // 2
    Pp = np.arange(n - 1, h, -1)  # positive half, paired with Nn = mirror
    Nn = np.arange(h)
    HPP, HPN = H[np.ix_(Pp, Pp)], H[np.ix_(Pp, Nn)]
    HNP, HNN = H[np.ix_(Nn, Pp)], H[np.ix_(Nn, Nn)]
    cc = 0.5 * (HPP + HPN + HNP + HNN)
    cs = 0.5j * (HPP - HPN + HNP - HNN)
    ss = 0.5 * (HPP - HPN - HNP + HNN)
    z = h
    zc = (H[z, Pp] + H[z, Nn]) / np.sqrt(2.0)
    zs = 1j * (H[z, Pp] - H[z, Nn]) / np.sqrt(2.0)
    Hr = np.empty((n, n))
    Hr[0, 0] = H[z, z].real
    Hr[0, 1:h + 1] = zc.real
    Hr[0, h + 1:] = zs.real
    Hr[1:h + 1, 0] = zc.real
    Hr[h + 1:, 0] = zs.real
    Hr[1:h + 1, 1:h + 1] = cc.real
    Hr[1:h + 1, h + 1:] = cs.real
    Hr[h + 1:, 1:h + 1] = cs.real.T
    Hr[h + 1:, h + 1:] = ss.real
    return Hr


def _from_real_basis(a: np.ndarray, n: int) -> np.ndarray:
    h = n // 2
    c = np.empty(n, dtype=complex)
    c[h] = a[0]
    ac, as_ = a[1:h + 1], a[h + 1:]
    c[np.arange(n - 1, h, -1)] = (ac + 1j * as_) / np.sqrt(2.0)
    c[np.arange(h)] = (ac - 1j * as_) / np.sqrt(2.0)
    return c


def dense_solve(op: HamiltonianOperator, n_eigenpairs: int = 1) -> EigenSolution:
    H = op.dense_matrix()
    n = H.shape[0]
    k = min(n_eigenpairs, n)
    Hr = _real_function_basis_matrix(H)
    w, V = scipy.linalg.eigh(Hr, subset_by_index=[0, k - 1])
    vecs = [FourierField(op.basis, _from_real_basis(V[:, j], n), True) for j in range(k)]
    res = np.array([np.linalg.norm(H @ v.coeffs - w[j] * v.coeffs) for j, v in enumerate(vecs)])
    return EigenSolution(w, vecs, res, iterations=0, method="dense")


def solve_lowest(op: HamiltonianOperator, options: SolverOptions | None = None) -> EigenSolution:
    """Lowest ``n_eigenpairs`` eigenpairs, ascending, with orthonormal real eigenvectors."""
    opts = options or SolverOptions()
    if opts.n_eigenpairs > op.basis.size:
        raise DimensionError(f"asked for {opts.n_eigenpairs} eigenpairs of a {op.basis.size}-dimensional problem")
    use_dense = opts.method == "dense" or (opts.method == "auto" and op.basis.size <= opts.dense_limit)
    if use_dense:
        sol = dense_solve(op, opts.n_eigenpairs)
    else:
        shift = opts.shift
        if shift is None:
            shift = max(1.0, abs(lanczos_estimate(op)))
        try:
            sol = _lobpcg(op, opts, shift)
        except ConvergenceError as exc:
            exc.solution.config, exc.solution.smooth = op.config, op.smooth
            raise
    sol.config, sol.smooth = op.config, op.smooth
    return sol


def phase_normalize(solution: EigenSolution, anchor) -> EigenSolution:
    """Rotate every eigenvector so that its value at ``anchor`` is real and positive."""
    anchor = np.asarray(anchor, dtype=float).reshape(3)
    out = []
    for v in solution.eigenvectors:
        val = v.evaluate_at_points(anchor[None, :])[0]
        if abs(val) <= 1e-8:
            raise AnchorError(f"eigenfunction nearly vanishes at anchor {tuple(anchor)} (|psi|={abs(val):.2e})")
        rotated = FourierField(v.basis, v.coeffs * (np.conj(val) / abs(val)), True)
        out.append(rotated.symmetrized())
    return replace(solution, eigenvectors=out)
