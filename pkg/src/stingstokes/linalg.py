"""Sparse direct solves and small dense least squares."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

__all__ = ["SolverError", "LstsqResult", "chol_solve", "sym_indef_solve", "min_norm_lstsq", "relative_residual"]

TRUNCATION = 1e-12


class SolverError(RuntimeError):
    pass


def relative_residual(A, x, b) -> float:
    r = A @ x - b
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(r) / nb) if nb > 0 else float(np.linalg.norm(r))


def _as_csc(A):
    A = sp.csc_matrix(A, dtype=float)
    if A.shape[0] != A.shape[1]:
        raise SolverError("matrix is not square")
    return A


def chol_solve(A, b, *, tol: float = 1e-10, return_residual: bool = False):
    """Solve an SPD system.

    Uses a symmetric-mode sparse LU (no off-diagonal pivoting, fill-reducing
    ordering on ``A + A^T``), which for SPD input is an ``LDL^T`` factorization
    in disguise; a non-positive pivot in ``U`` reports loss of definiteness.
    """
    A = _as_csc(A)
    b = np.asarray(b, dtype=float)
    try:
        lu = splu(
            A,
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options=dict(SymmetricMode=True),
        )
    except RuntimeError as exc:
        raise SolverError(f"factorization failed: {exc}") from exc
    piv = lu.U.diagonal()
    if np.any(piv <= 0):
        raise SolverError(f"matrix is not positive definite ({int(np.sum(piv <= 0))} non-positive pivots)")
    x = lu.solve(b)
    res = relative_residual(A, x, b)
    if res > tol:
        raise SolverError(f"relative residual {res:.3e} exceeds {tol:.1e}")
    return (x, res) if return_residual else x


def sym_indef_solve(A, b, *, tol: float = 1e-10, return_residual: bool = False):
    """Solve a symmetric indefinite (saddle point) system with a pivoting sparse LU."""
    A = _as_csc(A)
    b = np.asarray(b, dtype=float)
    try:
        lu = splu(A, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SolverError(f"factorization failed: {exc}") from exc
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise SolverError("solution is not finite (singular system?)")
    res = relative_residual(A, x, b)
    if res > tol:
        # one step of iterative refinement before giving up
        x = x + lu.solve(b - A @ x)
        res = relative_residual(A, x, b)
        if res > tol:
            raise SolverError(f"relative residual {res:.3e} exceeds {tol:.1e}")
    return (x, res) if return_residual else x


@dataclass
class LstsqResult:
    x: np.ndarray
    singular_values: np.ndarray
    rank: int
    residual: float

    @property
    def smallest_singular_value(self) -> float:
        return float(self.singular_values[-1]) if len(self.singular_values) else 0.0


def min_norm_lstsq(M, rhs, truncation: float = TRUNCATION) -> LstsqResult:
    """Minimum-norm least-squares solution by SVD with relative truncation."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    rhs = np.asarray(rhs, dtype=float)
    if M.shape[0] < 1:
        raise ValueError("least squares needs at least one row")
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    keep = s > truncation * s[0] if s.size and s[0] > 0 else np.zeros_like(s, dtype=bool)
    coef = (U[:, keep].T @ rhs) / s[keep]
    x = Vt[keep].T @ coef
    # an underdetermined system has n - m further zero singular values
    sv = np.concatenate([s, np.zeros(max(M.shape[1] - len(s), 0))])
    return LstsqResult(x, sv, int(keep.sum()), float(np.linalg.norm(M @ x - rhs)))
