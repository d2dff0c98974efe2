"""Cluster-aware stabilization.

Eigenvalues closer than ``delta`` (single-linkage chaining in the complex
plane) are grouped.  For each group ``J`` the projected block
``B_J = W_J^H A V_J`` is diagonalized, ``B_J = S Theta S^{-1}``, and the
cluster basis is rotated, ``V_J <- V_J S``, ``W_J <- W_J S^{-H}``.  The
componentwise correction is then applied only between different clusters.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import kernels
from .errors import SingularMatrixError, StabilizationError
from .numcore import as_diagonal, compact, fro_norm, inverse, matmul, sep
from .refine import (EigenTriple, StepArtifacts, _check_conformable,
                     _left_right_update, _require_finite, _update,
                     biorthogonalize_exact, correction_E, driving_w, residual)

__all__ = ["ClusterPartition", "ClusterBlock", "detect_clusters",
           "cluster_block", "rediag_cluster", "cluster_aware_step",
           "small_eig", "qr_eig", "QR_EIG_MAX"]

QR_EIG_MAX = 64


@dataclass(frozen=True)
class ClusterPartition:
    groups: tuple
    n: int

    @property
    def labels(self):
        lab = np.empty(self.n, dtype=np.int64)
        for g, J in enumerate(self.groups):
            lab[list(J)] = g
        return lab

    @property
    def non_singletons(self):
        return tuple(J for J in self.groups if len(J) > 1)

    @classmethod
    def from_labels(cls, labels):
        labels = np.asarray(labels)
        groups = {}
        for i, g in enumerate(labels.tolist()):
            groups.setdefault(g, []).append(i)
        ordered = sorted((tuple(v) for v in groups.values()), key=lambda J: J[0])
        return cls(tuple(ordered), len(labels))


@dataclass(frozen=True)
class ClusterBlock:
    B: np.ndarray
    S: np.ndarray
    Theta: np.ndarray


def detect_clusters(d, delta):
    """Partition indices by chaining eigenvalues at distance ``< delta``."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    d = as_diagonal(d)
    return ClusterPartition.from_labels(kernels.chain_labels(d, float(delta)))


# --------------------------------------------------------------------------
# small dense eigensolver


def _givens(a, b):
    # unitary G with G @ [a, b] = [r, 0]; G = [[c, s], [-conj(s), c]]
    if b == 0:
        return 1.0, 0.0
    if a == 0:
        return 0.0, 1.0
    r = np.hypot(abs(a), abs(b))
    c = abs(a) / r
    s = (a / abs(a)) * np.conj(b) / r
    return c, s


def _schur_qr(H, Q, maxit):
    n = H.shape[0]
    eps = np.finfo(float).eps
    hi = n - 1
    its = 0
    total = 0
    while hi > 0:
        l = hi
        while l > 0:
            if abs(H[l, l - 1]) <= eps * (abs(H[l, l]) + abs(H[l - 1, l - 1])):
                H[l, l - 1] = 0
                break
            l -= 1
        if l == hi:
            hi -= 1
            its = 0
            continue
        its += 1
        total += 1
        if total > maxit:
            raise StabilizationError("QR iteration did not converge")
        a, b = H[hi - 1, hi - 1], H[hi - 1, hi]
        c, dd = H[hi, hi - 1], H[hi, hi]
        if its % 11 == 10:
            mu = dd + abs(c)
        else:
            half = (a - dd) / 2
            root = np.sqrt(half * half + b * c)
            m1, m2 = dd + half + root, dd + half - root
            mu = m1 if abs(m1 - dd) < abs(m2 - dd) else m2
        rots = []
        for j in range(l, hi + 1):
            H[j, j] -= mu
        for j in range(l, hi):
            cs, sn = _givens(H[j, j], H[j + 1, j])
            rows = H[j:j + 2, j:].copy()
            H[j, j:] = cs * rows[0] + sn * rows[1]
            H[j + 1, j:] = -np.conj(sn) * rows[0] + cs * rows[1]
            rots.append((j, cs, sn))
        for j, cs, sn in rots:
            top = min(j + 2, hi) + 1
            cols = H[:top, j:j + 2].copy()
            # right-multiply by G^H
            H[:top, j] = cs * cols[:, 0] + np.conj(sn) * cols[:, 1]
            H[:top, j + 1] = -sn * cols[:, 0] + cs * cols[:, 1]
            qc = Q[:, j:j + 2].copy()
            Q[:, j] = cs * qc[:, 0] + np.conj(sn) * qc[:, 1]
            Q[:, j + 1] = -sn * qc[:, 0] + cs * qc[:, 1]
        for j in range(l, hi + 1):
            H[j, j] += mu
    return H, Q


def _triangular_eigvecs(T):
    n = T.shape[0]
    scale = max(np.max(np.abs(T)), np.finfo(float).tiny)
    smin = np.finfo(float).eps * scale
    Y = np.zeros((n, n), dtype=complex)
    for i in range(n):
        Y[i, i] = 1.0
        lam = T[i, i]
        for r in range(i - 1, -1, -1):
            den = T[r, r] - lam
            if abs(den) < smin:
                den = smin
            Y[r, i] = -np.dot(T[r, r + 1:i + 1], Y[r + 1:i + 1, i]) / den
    return Y


def qr_eig(B, maxit=None):
    """Eigenvalues and unit eigenvectors by shifted QR on the Hessenberg form.

    Intended for the small projected cluster blocks (``n <= QR_EIG_MAX``);
    eigenvectors come from back-substitution on the Schur triangle.
    """
    B = np.asarray(B, dtype=complex)
    n = B.shape[0]
    if n > QR_EIG_MAX:
        raise ValueError(f"qr_eig is limited to n <= {QR_EIG_MAX}")
    if n == 1:
        return B[0].copy(), np.ones((1, 1), dtype=complex)
    H, Q = scipy.linalg.hessenberg(B, calc_q=True)
    H = np.array(H, dtype=complex)
    Q = np.array(Q, dtype=complex)
    H, Q = _schur_qr(H, Q, maxit or 60 * n)
    T = np.triu(H)
    X = Q @ _triangular_eigvecs(T)
    X /= np.linalg.norm(X, axis=0)
    return np.diagonal(T).copy(), X


def small_eig(B, method="lapack"):
    """Diagonalize a small dense block; ``method`` is ``"lapack"`` or ``"qr"``."""
    if method == "lapack":
        theta, S = np.linalg.eig(B)
    elif method == "qr":
        theta, S = qr_eig(B)
    else:
        raise ValueError(f"unknown small eigensolver {method!r}")
    return theta, S


# --------------------------------------------------------------------------
# re-diagonalization and the cluster-aware step


def cluster_block(A, T, J, method="lapack"):
    """Projected block ``B_J`` with its unit-column eigenvector factor."""
    if T.W is None:
        raise ValueError("cluster re-diagonalization requires W")
    J = list(J)
    VJ = T.V[:, J]
    WJ = T.W[:, J]
    B = matmul(WJ.conj().T, matmul(A, VJ))
    if not np.all(np.isfinite(B)):
        raise StabilizationError("projected block is not finite")
    theta, S = small_eig(B, method)
    S = S / np.linalg.norm(S, axis=0)
    return ClusterBlock(B, S, theta)


def rediag_cluster(A, T, J, method="lapack"):
    """Rotate the basis of cluster ``J`` so that ``W_J^H A V_J`` is diagonal."""
    J = list(J)
    if len(J) < 2:
        return T
    blk = cluster_block(A, T, J, method)
    try:
        S_inv = inverse(blk.S)
    except SingularMatrixError as exc:
        raise StabilizationError(
            f"projected block of cluster {J} is defective to working precision"
        ) from exc
    V = np.array(T.V, dtype=np.result_type(T.V, blk.S))
    W = np.array(T.W, dtype=np.result_type(T.W, S_inv))
    d = np.array(T.d, dtype=np.result_type(T.d, blk.Theta))
    V[:, J] = matmul(T.V[:, J], blk.S)
    W[:, J] = matmul(T.W[:, J], S_inv.conj().T)
    d[J] = blk.Theta
    return T.replace(V=compact(V), W=compact(W), d=compact(d))


def cluster_aware_step(A, T, config, method="lapack"):
    """One refinement step that handles close eigenvalues through subspaces.

    Clusters are detected on the shifted diagonal ``d + diag(W^H R)`` with
    threshold ``config.cluster_delta``.  Each non-singleton cluster is
    re-diagonalized, the driving matrix is recomputed, and the correction is
    applied only across clusters.  In the left-right regime the step ends
    with an exact biorthogonalization.  A right-only triple is handled with
    the temporary left factor ``W = V^{-H}``.
    """
    A = _check_conformable(A, T)
    right_only = T.W is None
    work = T
    if right_only:
        work = EigenTriple(T.V, T.d, inverse(T.V).conj().T, "left-right",
                           T.precision)
    Y = driving_w(A, work, R=residual(A, work))
    part = detect_clusters(work.d + np.diagonal(Y), config.cluster_delta)
    clusters = part.non_singletons
    for J in clusters:
        work = rediag_cluster(A, work, J, method)
    if clusters:
        Y = driving_w(A, work, R=residual(A, work))
    d_new = compact(as_diagonal(work.d) + np.diagonal(Y))
    labels = part.labels
    s = sep(d_new) if d_new.size > 1 else np.inf
    if right_only:
        E = correction_E(Y, d_new, labels)
        V_new = _update(work.V, E)
        _require_finite(V_new, d_new)
        T_new = T.replace(V=V_new, d=d_new)
        F = None
    else:
        T_new, E, F = _left_right_update(work, Y, d_new, labels)
        T_new = biorthogonalize_exact(T_new)
    arts = StepArtifacts(Y, E, d_new, s, bool(clusters), F, clusters)
    return T_new, arts


def projector(X):
    """Orthogonal projector onto ``range(X)``."""
    Q, _ = np.linalg.qr(X)
    return Q @ Q.conj().T


def span_change(X_old, X_new):
    return fro_norm(projector(X_old) - projector(X_new))
