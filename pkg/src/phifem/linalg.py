"""Sparse direct solves and a 2-norm condition number estimator."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SolverError(RuntimeError):
    pass


class SingularMatrixError(SolverError):
    pass


class ConvergenceError(SolverError):
    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


@dataclass
class SolveReport:
    x: np.ndarray
    residual: float
    stats: dict = field(default_factory=dict)


def as_csr(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A, dtype=float)
    A.sum_duplicates()
    A.sort_indices()
    if not np.all(np.isfinite(A.data)):
        raise ValueError("matrix has non-finite entries")
    return A


def factorize(A):
    """Sparse LU with partial pivoting and a COLAMD column ordering."""
    A = as_csr(A)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got {A.shape}")
    try:
        return spla.splu(A.tocsc(), permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SingularMatrixError(f"LU factorization failed: {exc}") from exc


def solve(A, b, tol: float = 1e-10, lu=None, max_refine: int = 3) -> SolveReport:
    """Solve ``A x = b``; raise unless ``|Ax - b| <= tol |b|``.

    A few steps of iterative refinement are applied when the first
    back-substitution misses the tolerance.
    """
    if not 0 < tol <= 1e-6:
        raise ValueError("tol must lie in (0, 1e-6]")
    A = as_csr(A)
    b = np.asarray(b, dtype=float)
    if A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
        raise ValueError("dimension mismatch")
    if lu is None:
        lu = factorize(A)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return SolveReport(np.zeros_like(b), 0.0, {"refinements": 0})
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise SingularMatrixError("numerically singular matrix (non-finite solution)")
    res = np.linalg.norm(A @ x - b) / bnorm
    steps = 0
    while res > tol and steps < max_refine:
        x = x + lu.solve(b - A @ x)
        res = np.linalg.norm(A @ x - b) / bnorm
        steps += 1
    stats = {"refinements": steps, "nnz_L": int(lu.L.nnz), "nnz_U": int(lu.U.nnz)}
    if res > tol:
        raise SolverError(f"relative residual {res:.3e} above tolerance {tol:.1e}")
    return SolveReport(x, float(res), stats)


def _power(apply, n, tol, max_iter, seed, what):
    """Largest eigenvalue of a symmetric positive semi-definite operator.

    Stops once the eigen-residual ``|B v - lam v|`` falls below
    ``tol * lam``, which bounds the eigenvalue error by the same amount.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = float("nan")
    for it in range(1, max_iter + 1):
        w = apply(v)
        lam = float(np.dot(v, w))
        nw = np.linalg.norm(w)
        if nw == 0 or not np.isfinite(nw):
            raise SingularMatrixError(f"{what}: iteration broke down")
        if np.linalg.norm(w - lam * v) <= tol * abs(lam):
            return lam, it
        v = w / nw
    raise ConvergenceError(f"{what}: no convergence after {max_iter} iterations", estimate=lam)


def extreme_singular_values(A, tol: float = 1e-4, max_iter: int = 10_000, lu=None, seed: int = 0):
    """``(sigma_max, sigma_min)`` by power / inverse power iteration on ``A^T A``.

    Each eigenvalue of ``A^T A`` is resolved to relative accuracy ``tol``,
    so the singular values carry about ``tol / 2``.
    """
    A = as_csr(A)
    n = A.shape[0]
    AT = A.T.tocsr()
    if lu is None:
        lu = factorize(A)
    lam_max, it1 = _power(lambda v: AT @ (A @ v), n, tol, max_iter, seed, "sigma_max")
    mu_max, it2 = _power(lambda v: lu.solve(lu.solve(v, trans="T")), n, tol, max_iter, seed + 1, "sigma_min")
    return np.sqrt(lam_max), 1.0 / np.sqrt(mu_max), {"iterations_max": it1, "iterations_min": it2}


def condition_number_2(A, tol: float = 1e-4, max_iter: int = 10_000, lu=None) -> float:
    """Estimate ``kappa_2(A) = |A|_2 |A^{-1}|_2``."""
    try:
        smax, smin, _ = extreme_singular_values(A, tol=tol, max_iter=max_iter, lu=lu)
    except ConvergenceError as exc:
        raise ConvergenceError(f"condition estimate did not converge: {exc}", estimate=exc.estimate) from exc
    return float(smax / smin)
