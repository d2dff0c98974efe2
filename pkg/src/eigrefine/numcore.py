"""Dense matrix kernels and the three evaluation metrics.

Matrices are plain numpy arrays.  They are complex in meaning but may be
stored as ``float64`` when every entry is real; products and solves then run
in real BLAS/LAPACK, which is several times faster and mathematically the
same operation.  Nothing below ever computes in less than binary64.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import kernels
from .errors import DimensionError, SingularMatrixError

__all__ = ["MetricRecord", "as_matrix", "as_diagonal", "compact", "matmul",
           "solve", "inverse", "fro_norm", "sep", "metrics",
           "is_binary32_exact", "UNIT_ROUNDOFF"]

UNIT_ROUNDOFF = np.finfo(np.float64).eps / 2


@dataclass(frozen=True)
class MetricRecord:
    rel_residual: float
    biorth_error: float = float("nan")
    eig_consistency: float = float("nan")

    def is_finite(self, left=True):
        vals = [self.rel_residual]
        if left:
            vals += [self.biorth_error, self.eig_consistency]
        return all(np.isfinite(v) for v in vals)


def compact(x):
    """Drop an all-zero imaginary part so later kernels run in real arithmetic."""
    x = np.asarray(x)
    if np.iscomplexobj(x):
        if not np.any(x.imag):
            return np.ascontiguousarray(x.real, dtype=np.float64)
        return np.asarray(x, dtype=np.complex128)
    return np.asarray(x, dtype=np.float64)


def as_matrix(x, name="matrix"):
    x = compact(x)
    if x.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {x.shape}")
    return x


def as_diagonal(d, name="diagonal"):
    d = compact(d)
    if d.ndim == 2:
        if d.shape[0] != d.shape[1]:
            raise DimensionError(f"{name} must be square, got {d.shape}")
        d = np.ascontiguousarray(np.diagonal(d))
    if d.ndim != 1:
        raise DimensionError(f"{name} must be a vector of entries")
    return d


def is_binary32_exact(x):
    """True when every real and imaginary part is representable in binary32."""
    x = np.asarray(x)
    parts = (x.real, x.imag) if np.iscomplexobj(x) else (x,)
    return all(np.array_equal(p.astype(np.float32).astype(np.float64), p)
               for p in parts)


def matmul(A, B):
    A = np.asarray(A)
    B = np.asarray(B)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[0]:
        raise DimensionError(f"cannot multiply {A.shape} by {B.shape}")
    return A @ B


def _lu(A):
    A = as_matrix(A, "A")
    n, m = A.shape
    if n != m:
        raise DimensionError(f"square matrix required, got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise SingularMatrixError("matrix has non-finite entries")
    with warnings.catch_warnings():
        # exact zero pivots are reported below as SingularMatrixError
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
    amax = np.max(np.abs(A)) if A.size else 0.0
    # partial-pivot singularity test |u_kk| <= n u max|a_ij|
    if n and np.min(np.abs(np.diagonal(lu))) <= n * UNIT_ROUNDOFF * amax:
        raise SingularMatrixError(
            "matrix is singular to working precision "
            f"(min |u_kk| = {np.min(np.abs(np.diagonal(lu))):.3e})")
    return lu, piv


def solve(A, B):
    """Solve ``A X = B`` by partially pivoted LU."""
    B = np.asarray(B)
    if B.ndim not in (1, 2) or np.shape(A)[0] != B.shape[0]:
        raise DimensionError(f"rhs shape {B.shape} does not match {np.shape(A)}")
    lu_piv = _lu(A)
    if np.iscomplexobj(B) and not np.iscomplexobj(lu_piv[0]):
        return (scipy.linalg.lu_solve(lu_piv, B.real, check_finite=False)
                + 1j * scipy.linalg.lu_solve(lu_piv, B.imag, check_finite=False))
    return scipy.linalg.lu_solve(lu_piv, B, check_finite=False)


def inverse(A):
    lu_piv = _lu(A)
    n = lu_piv[0].shape[0]
    return scipy.linalg.lu_solve(lu_piv, np.eye(n), check_finite=False)


def fro_norm(A):
    return float(np.linalg.norm(np.ravel(A)))


def sep(d):
    """Minimum pairwise distance of the diagonal entries."""
    d = as_diagonal(d)
    if d.shape[0] < 2:
        raise DimensionError("sep needs at least two entries")
    return kernels.min_pairwise_gap(d)


def _left_diag(W, AV):
    # diag(W^H A V) without forming the full product
    return np.einsum("ij,ij->j", W.conj(), AV)


def metrics(A, V, W, d):
    """Relative residual, biorthogonality error and eigenvalue consistency.

    With ``W=None`` only the residual is computed; the two left-dependent
    fields are nan.
    """
    A = np.asarray(A)
    V = np.asarray(V)
    d = as_diagonal(d)
    n = A.shape[0]
    if A.shape != (n, n) or V.shape != (n, n) or d.shape != (n,):
        raise DimensionError(
            f"metrics: shapes A{A.shape} V{V.shape} d{d.shape} disagree")
    normA = fro_norm(A)
    AV = A @ V
    res = fro_norm(AV - V * d) / normA
    if W is None:
        return MetricRecord(res)
    W = np.asarray(W)
    if W.shape != (n, n):
        raise DimensionError(f"metrics: W shape {W.shape} != {(n, n)}")
    G = W.conj().T @ V
    G[np.diag_indices(n)] -= 1
    biorth = fro_norm(G)
    cons = float(np.linalg.norm(_left_diag(W, AV) - d)) / normA
    return MetricRecord(res, biorth, cons)
