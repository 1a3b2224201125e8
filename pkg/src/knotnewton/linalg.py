"""Small dense symmetric solves used by the block Newton steps."""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

__all__ = ["FactorizationError", "spd_solve", "indefinite_solve", "symmetrize"]


class FactorizationError(np.linalg.LinAlgError):
    def __init__(self, message: str, pivot: int | None = None):
        super().__init__(message if pivot is None else f"{message} (pivot {pivot})")
        self.pivot = pivot


def symmetrize(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def spd_solve(A: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Cholesky solve; falls back to the indefinite solver when Cholesky fails."""
    if A.size == 0:
        return np.zeros_like(rhs, dtype=float)
    try:
        factor = sla.cho_factor(A, lower=True, check_finite=True)
    except np.linalg.LinAlgError:
        return indefinite_solve(A, rhs)
    return sla.cho_solve(factor, rhs)


def indefinite_solve(A: np.ndarray, rhs: np.ndarray, rel_tol: float = 1e-14,
                     require_positive: bool = False) -> np.ndarray:
    """Solve ``A x = rhs`` through a Bunch-Kaufman ``L D L^T`` factorization.

    Raises :class:`FactorizationError` naming the first pivot block that is
    numerically singular (``|eig| <= rel_tol * ||A||``), or, with
    ``require_positive``, that has a non-positive eigenvalue.
    """
    A = np.asarray(A, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if A.size == 0:
        return np.zeros_like(rhs)
    if not np.all(np.isfinite(A)) or not np.all(np.isfinite(rhs)):
        raise FactorizationError("non-finite entries in linear system")
    # symmetric diagonal equilibration; H22 = D(c) M D(c) is badly scaled by c
    diag = np.abs(np.diag(A))
    s = np.where(diag > 0, 1.0 / np.sqrt(np.where(diag > 0, diag, 1.0)), 1.0)
    As = s[:, None] * A * s[None, :]
    lu, d, perm = sla.ldl(As, lower=True)
    scale = max(np.max(np.abs(As)), np.finfo(float).tiny)
    m = A.shape[0]
    i = 0
    while i < m:
        size = 2 if i + 1 < m and d[i + 1, i] != 0.0 else 1
        block = d[i:i + size, i:i + size]
        eig = np.linalg.eigvalsh(block)
        # lu[perm] is triangular, so pivot i belongs to original index perm[i]
        where = int(perm[i])
        if np.min(np.abs(eig)) <= rel_tol * scale:
            raise FactorizationError("singular pivot", where)
        if require_positive and np.min(eig) <= 0:
            raise FactorizationError("non-positive pivot", where)
        i += size
    # lu is permuted-triangular: As = lu @ d @ lu.T
    y = np.linalg.solve(lu, s * rhs)
    z = np.linalg.solve(d, y)
    return s * np.linalg.solve(lu.T, z)
