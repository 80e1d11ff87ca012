"""Dense linear-algebra kernel shared by the other modules.

Thin wrappers around LAPACK (via numpy) that pin down the error
behaviour the rest of the package relies on: an SPD solve that rejects
indefinite matrices, a full-rank least-squares solve, and a symmetric
eigendecomposition with eigenvalues sorted descending.
"""

from __future__ import annotations

import numpy as np

from .errors import NoConvergence, NotPositiveDefinite, RankDeficient
from .validation import as_matrix, as_vector, check_symmetric

PIVOT_TOL = 1e-12
RANK_TOL = 1e-10


def cholesky_factor(a: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive definite matrix."""
    m = check_symmetric(a, "A")
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    if m.size and np.min(np.diag(chol)) ** 2 <= PIVOT_TOL:
        raise NotPositiveDefinite(
            f"pivot {np.min(np.diag(chol))**2:.3e} below {PIVOT_TOL}"
        )
    return chol


def cholesky_solve(a: np.ndarray, b) -> np.ndarray:
    """Solve A x = b for symmetric positive definite A."""
    chol = cholesky_factor(a)
    rhs = np.asarray(b, dtype=float)
    y = np.linalg.solve(chol, rhs)
    return np.linalg.solve(chol.T, y)


def least_squares(a: np.ndarray, b) -> np.ndarray:
    """Minimum of ||A x - b||_2 for A with full column rank (m >= n)."""
    m = as_matrix(a, "A")
    rhs = as_vector(b, "b", size=m.shape[0])
    if m.shape[0] < m.shape[1]:
        raise RankDeficient(f"A is {m.shape[0]}x{m.shape[1]}, need rows >= cols")
    x, _, rank, sv = np.linalg.lstsq(m, rhs, rcond=RANK_TOL)
    if rank < m.shape[1]:
        raise RankDeficient(
            f"column rank {rank} < {m.shape[1]} (smallest singular value {sv[-1]:.3e})"
        )
    return x


def sym_eig(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and orthonormal eigenvector columns of symmetric A."""
    m = check_symmetric(a, "A")
    try:
        vals, vecs = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NoConvergence(str(exc)) from exc
    order = np.argsort(vals)[::-1]
    return vals[order], vecs[:, order]
