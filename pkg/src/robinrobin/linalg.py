"""Sparse symmetric linear algebra.

Matrices are ``scipy.sparse.csr_matrix`` with sorted indices. The iterative
solver is a Jacobi-preconditioned conjugate gradient written out explicitly so
that its iteration order is fixed; the dense path goes through LAPACK's
symmetric-indefinite (Bunch-Kaufman LDL^T) driver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

DEFAULT_TOL = 1e-12


class SolverError(RuntimeError):
    """Raised when a linear solve fails to converge or hits a singular system."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    relative_residual: float


def as_csr(A) -> sp.csr_matrix:
    """Convert to CSR with summed duplicates and sorted column indices."""
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    A.sort_indices()
    return A


def symmetry_defect(A) -> float:
    """Relative Frobenius-norm asymmetry ``||A - A^T|| / ||A||``."""
    A = sp.csr_matrix(A)
    norm = sp.linalg.norm(A)
    if norm == 0.0:
        return 0.0
    return float(sp.linalg.norm(A - A.T) / norm)


def cg_solve(A, b, tol=DEFAULT_TOL, maxit=None, x0=None):
    """Solve the SPD system ``A x = b`` by Jacobi-preconditioned CG.

    Stops when ``||b - A x||_2 <= tol * ||b||_2``. Raises :class:`SolverError`
    after ``maxit`` iterations (default ``20 * n``) without convergence.

    Returns
    -------
    x : ndarray
    report : SolveReport
    """
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if tol <= 0:
        raise ValueError("tol must be positive")
    if maxit is None:
        maxit = 20 * max(n, 1)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), SolveReport(0, 0.0)

    diag = A.diagonal()
    if np.any(diag <= 0):
        raise SolverError("non-positive diagonal entry; matrix is not SPD")
    inv_diag = 1.0 / diag

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x if x0 is not None else b.copy()
    target = tol * bnorm
    rnorm = np.linalg.norm(r)
    if rnorm <= target:
        return x, SolveReport(0, rnorm / bnorm)
    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    # the recursive residual drifts from the true one near the rounding floor;
    # on a miss, restart from the true residual with a tighter recursive target
    inner = target
    best = rnorm
    misses = 0
    for k in range(1, maxit + 1):
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise SolverError("non-positive curvature; matrix is not SPD", rnorm / bnorm)
        step = rz / pAp
        x += step * p
        r -= step * Ap
        rnorm = np.linalg.norm(r)
        if rnorm <= inner:
            r = b - A @ x
            true_r = np.linalg.norm(r)
            if true_r <= target:
                return x, SolveReport(k, true_r / bnorm)
            misses = misses + 1 if true_r >= 0.5 * best else 0
            if misses >= 3:
                raise SolverError(f"CG stagnated at relative residual {true_r / bnorm:.3e} "
                                  f"(tol {tol:.1e}); tolerance is below rounding level",
                                  true_r / bnorm)
            best = min(best, true_r)
            inner *= 0.5
            rnorm = true_r
            z = inv_diag * r
            p = z.copy()
            rz = r @ z
            continue
        z = inv_diag * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(
        f"CG did not converge in {maxit} iterations (relative residual {rnorm / bnorm:.3e})",
        rnorm / bnorm,
    )


def dense_solve(A, b):
    """Solve a square (possibly symmetric-indefinite) system densely.

    Symmetric matrices use LDL^T with symmetric pivoting, others LU.
    """
    if sp.issparse(A):
        A = A.toarray()
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    symmetric = np.allclose(A, A.T, rtol=0.0, atol=1e-13 * max(np.abs(A).max(), 1.0))
    try:
        x = scipy.linalg.solve(A, b, assume_a="sym" if symmetric else "gen")
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"dense solve failed: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SolverError("dense solve produced non-finite values")
    return x
