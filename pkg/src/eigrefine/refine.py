"""Matrix-multiplication-based refinement of approximate eigendecompositions.

Two regimes are supported:

* right-only -- only ``V`` and the eigenvalues are known; the driving matrix
  ``Y = V^{-1} R`` is realized by a direct solve, a fixed approximate inverse,
  or an approximate inverse updated as ``M <- (I - E) M``;
* left-right (the W-method) -- ``W`` is also known and ``Y = W^H R`` is used
  instead, with a Newton-Schulz-type left update ``F^H = I - W^H V - E``.

Every step returns a new :class:`EigenTriple`; nothing is modified in place.
"""

import dataclasses
import time
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import kernels
from .errors import (DimensionError, DivisionHazardError, NonFiniteError,
                     SingularMatrixError, StabilizationError)
from .numcore import (MetricRecord, as_diagonal, as_matrix, compact, inverse,
                      matmul, metrics, sep, solve)

__all__ = ["EigenTriple", "RefineConfig", "StepArtifacts", "IterationReport",
           "RefineResult", "residual", "driving_right", "driving_w",
           "shift_and_sep", "correction_E", "right_step",
           "left_correction_F", "w_step", "biorthogonalize_exact",
           "biorthogonalize_first_order", "refine_loop", "REGIMES",
           "DRIVING_MODES"]

REGIMES = ("right-only", "left-right")
DRIVING_MODES = ("direct-solve", "fixed-inverse", "updated-inverse", "w-method")
PREPROCESS = ("none", "exact", "first-order")
CLUSTER_HANDLING = ("escalate", "naive", "aware")


@dataclass(frozen=True)
class EigenTriple:
    """Approximate eigendecomposition ``A V ~ V diag(d)``, optionally with ``W``.

    ``regime`` is derived from the presence of ``W`` when not given.
    ``precision`` records where the data came from (``"binary64"`` or
    ``"binary32-rounded"``); arithmetic is always binary64.
    """

    V: np.ndarray
    d: np.ndarray
    W: Optional[np.ndarray] = None
    regime: Optional[str] = None
    precision: str = "binary64"

    def __post_init__(self):
        V = as_matrix(self.V, "V")
        d = as_diagonal(self.d, "d")
        n = V.shape[0]
        if V.shape != (n, n) or d.shape != (n,):
            raise DimensionError(f"V{V.shape} and d{d.shape} disagree")
        W = None if self.W is None else as_matrix(self.W, "W")
        if W is not None and W.shape != (n, n):
            raise DimensionError(f"W{W.shape} does not match V{V.shape}")
        regime = self.regime or ("left-right" if W is not None else "right-only")
        if regime not in REGIMES:
            raise ValueError(f"unknown regime {regime!r}")
        if regime == "left-right" and W is None:
            raise ValueError("left-right regime requires W")
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "regime", regime)

    @property
    def n(self):
        return self.V.shape[0]

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def right_only(self):
        return EigenTriple(self.V, self.d, None, "right-only", self.precision)

    def is_finite(self):
        w_ok = self.W is None or bool(np.all(np.isfinite(self.W)))
        return bool(np.all(np.isfinite(self.V)) and np.all(np.isfinite(self.d))
                    and w_ok)


@dataclass(frozen=True)
class RefineConfig:
    """Refinement settings.

    ``sep_threshold=None`` means a relative trigger ``relative_sep *
    max|d_new|``.  ``cluster_delta`` is absolute.  ``cluster_handling``
    selects what happens when the shifted eigenvalues are too close:
    ``"escalate"`` reroutes the step through the cluster path, ``"naive"``
    applies the componentwise update regardless, and ``"aware"`` uses the
    cluster path on every iteration.  ``biortho_preprocess=None`` resolves
    to ``"exact"`` for the left-right regime and ``"none"`` otherwise.
    """

    regime: str = "left-right"
    driving_mode: Optional[str] = None
    sep_threshold: Optional[float] = None
    relative_sep: float = 1e-6
    cluster_delta: float = 1e-6
    max_iters: int = 5
    stop_rel_residual: float = 0.0
    biortho_preprocess: Optional[str] = None
    rebiorthogonalize: bool = False
    cluster_handling: str = "escalate"

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        mode = self.driving_mode
        if mode is None:
            mode = "w-method" if self.regime == "left-right" else "direct-solve"
            object.__setattr__(self, "driving_mode", mode)
        if mode not in DRIVING_MODES:
            raise ValueError(f"unknown driving mode {mode!r}")
        if (mode == "w-method") != (self.regime == "left-right"):
            raise ValueError(
                f"driving mode {mode!r} is incompatible with regime {self.regime!r}")
        pre = self.biortho_preprocess
        if pre is None:
            pre = "exact" if self.regime == "left-right" else "none"
            object.__setattr__(self, "biortho_preprocess", pre)
        if pre not in PREPROCESS:
            raise ValueError(f"unknown preprocessing {pre!r}")
        if pre != "none" and self.regime == "right-only":
            raise ValueError("biorthogonalization needs the left-right regime")
        if self.cluster_handling not in CLUSTER_HANDLING:
            raise ValueError(f"unknown cluster handling {self.cluster_handling!r}")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if self.sep_threshold is not None and self.sep_threshold <= 0:
            raise ValueError("sep_threshold must be positive")
        if self.cluster_delta <= 0:
            raise ValueError("cluster_delta must be positive")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class StepArtifacts:
    Y: np.ndarray
    E: Optional[np.ndarray]
    d_new: np.ndarray
    sep_value: float
    cluster_triggered: bool
    F: Optional[np.ndarray] = None
    clusters: tuple = ()


@dataclass(frozen=True)
class IterationReport:
    iteration: int
    metrics: MetricRecord
    cluster_triggered: bool = False
    wall_time: Optional[float] = None

    @property
    def rel_residual(self):
        return self.metrics.rel_residual


class RefineResult(NamedTuple):
    triple: EigenTriple
    reports: list
    status: str

    @property
    def history(self):
        return [r.rel_residual for r in self.reports]

    @property
    def steps(self):
        return len(self.reports) - 1


# --------------------------------------------------------------------------
# components


def _check_conformable(A, T):
    A = as_matrix(A, "A")
    if A.shape != (T.n, T.n):
        raise DimensionError(f"A{A.shape} does not match V{T.V.shape}")
    return A


def residual(A, T):
    """Right residual ``A V - V diag(d)``."""
    A = _check_conformable(A, T)
    return matmul(A, T.V) - T.V * T.d


def driving_right(A, T, mode="direct-solve", M_state=None, R=None):
    """Driving matrix ``V^{-1} R`` for the right-only regime.

    Returns ``(Y, M_state)``.  The inverse modes only read ``M_state``; the
    ``(I - E) M`` update of the updated-inverse mode happens in
    :func:`right_step` once ``E`` is known.
    """
    if R is None:
        R = residual(A, T)
    if mode == "direct-solve":
        return solve(T.V, R), M_state
    if mode in ("fixed-inverse", "updated-inverse"):
        if M_state is None:
            raise ValueError(f"{mode} needs an approximate inverse M_state")
        return matmul(M_state, R), M_state
    raise ValueError(f"driving mode {mode!r} is not a right-only mode")


def driving_w(A, T, R=None):
    """Implementable driving matrix ``W^H R``."""
    if T.W is None:
        raise ValueError("driving_w requires left eigenvectors W")
    if R is None:
        R = residual(A, T)
    return matmul(T.W.conj().T, R)


def default_sep_threshold(d_new, relative=1e-6):
    return relative * float(np.max(np.abs(d_new))) if d_new.size else 0.0


def shift_and_sep(d, Y, sep_threshold=None, relative=1e-6):
    """Shift eigenvalues by ``diag(Y)`` and test their separation.

    Returns ``(d_new, sep_value, cluster_triggered)``.
    """
    d = as_diagonal(d)
    d_new = compact(d + np.diagonal(Y))
    s = sep(d_new) if d_new.size > 1 else np.inf
    thr = default_sep_threshold(d_new, relative) if sep_threshold is None \
        else sep_threshold
    return d_new, s, bool(s < thr)


def correction_E(Y, d_new, labels=None):
    """Componentwise correction ``e_ij = y_ij / (d_j - d_i)`` with zero diagonal.

    Entries whose row and column share a label in ``labels`` are set to
    zero (this is how intracluster corrections are suppressed).
    """
    Y = np.asarray(Y)
    d_new = as_diagonal(d_new)
    n = d_new.shape[0]
    if Y.shape != (n, n):
        raise DimensionError(f"Y{Y.shape} does not match {n} eigenvalues")
    if labels is None:
        labels = np.arange(n, dtype=np.int64)
    dtype = np.result_type(Y.dtype, d_new.dtype)
    E, hazard = kernels.correction_matrix(
        np.ascontiguousarray(Y, dtype=dtype),
        np.ascontiguousarray(d_new, dtype=dtype),
        np.ascontiguousarray(labels, dtype=np.int64))
    if hazard:
        raise DivisionHazardError(
            "coincident shifted eigenvalues; route through the cluster path")
    return compact(E)


def _update(X, C):
    # X (I + C)
    return X + matmul(X, C)


def _require_finite(*arrays):
    for a in arrays:
        if a is not None and not np.all(np.isfinite(a)):
            raise NonFiniteError("refinement produced non-finite values")


def right_step(A, T, config, M_state=None):
    """One step in the right-only regime.

    Returns ``(T_new, artifacts, M_state_new)``.  When the separation test
    fires (and ``config.cluster_handling`` is not ``"naive"``) the input
    triple is returned unchanged with ``cluster_triggered`` set.
    """
    A = _check_conformable(A, T)
    R = residual(A, T)
    Y, M_state = driving_right(A, T, config.driving_mode, M_state, R=R)
    d_new, s, trig = shift_and_sep(T.d, Y, config.sep_threshold,
                                   config.relative_sep)
    if trig and config.cluster_handling != "naive":
        return T, StepArtifacts(Y, None, d_new, s, True), M_state
    E = correction_E(Y, d_new)
    V_new = _update(T.V, E)
    _require_finite(V_new, d_new)
    if config.driving_mode == "updated-inverse":
        M_state = M_state - matmul(E, M_state)
    arts = StepArtifacts(Y, E, d_new, s, trig)
    return T.replace(V=V_new, d=d_new), arts, M_state


def left_correction_F(delta_plus_E):
    """Left correction from ``Delta + E``: ``F = -(Delta + E)^H``."""
    return -np.asarray(delta_plus_E).conj().T


def biorth_defect(T):
    """``W^H V - I``."""
    G = matmul(T.W.conj().T, T.V)
    G[np.diag_indices(T.n)] -= 1
    return G


def _left_right_update(T, Y, d_new, labels=None):
    E = correction_E(Y, d_new, labels)
    delta = biorth_defect(T)
    F = left_correction_F(delta + E)
    V_new = _update(T.V, E)
    W_new = _update(T.W, F)
    _require_finite(V_new, W_new, d_new)
    return T.replace(V=V_new, W=W_new, d=d_new), E, F


def w_step(A, T, config):
    """One W-method step (left-right regime).

    Returns ``(T_new, artifacts)``; on a separation trigger (unless
    ``cluster_handling="naive"``) ``T`` is returned unchanged.
    """
    if T.W is None:
        raise ValueError("w_step requires left eigenvectors W")
    A = _check_conformable(A, T)
    R = residual(A, T)
    Y = driving_w(A, T, R=R)
    d_new, s, trig = shift_and_sep(T.d, Y, config.sep_threshold,
                                   config.relative_sep)
    if trig and config.cluster_handling != "naive":
        return T, StepArtifacts(Y, None, d_new, s, True)
    T_new, E, F = _left_right_update(T, Y, d_new)
    return T_new, StepArtifacts(Y, E, d_new, s, trig, F)


def biorthogonalize_exact(T):
    """Rescale ``W <- W S^{-H}`` with ``S = W^H V`` so that ``W^H V = I``."""
    if T.W is None:
        raise ValueError("biorthogonalization requires W")
    S = matmul(T.W.conj().T, T.V)
    # W S^{-H} = (S^{-1} W^H)^H
    W_new = solve(S, T.W.conj().T).conj().T
    return T.replace(W=compact(W_new))


def biorthogonalize_first_order(T):
    """First-order rescaling ``W <- W Sigma^{-H} (I - G^H Sigma^{-H})``.

    Here ``W^H V = Sigma + G`` with ``Sigma`` its diagonal part. The new
    defect is ``-Sigma^{-1} G Sigma^{-1} G``.
    """
    if T.W is None:
        raise ValueError("biorthogonalization requires W")
    S = matmul(T.W.conj().T, T.V)
    sigma = np.diagonal(S).copy()
    if np.any(sigma == 0):
        raise SingularMatrixError("W^H V has a zero diagonal entry")
    G = S - np.diag(sigma)
    inv_sh = 1.0 / sigma.conj()
    C = np.eye(T.n) - G.conj().T * inv_sh[None, :]
    W_new = matmul(T.W * inv_sh, C)
    return T.replace(W=compact(W_new))


# --------------------------------------------------------------------------
# driver


_RECOVERABLE = (NonFiniteError, SingularMatrixError, DivisionHazardError,
                StabilizationError, FloatingPointError)


def _report(k, A, T, triggered=False, wall=None):
    m = metrics(A, T.V, T.W, T.d)
    return IterationReport(k, m, triggered, wall)


def refine_loop(A, T, config):
    """Iterate refinement steps and record metrics after each one.

    Iteration 0 is the input triple before any preprocessing.  The loop
    stops when ``rel_residual <= config.stop_rel_residual``, after
    ``config.max_iters`` steps, or when a non-finite value appears.

    Returns a :class:`RefineResult` ``(triple, reports, status)`` where
    ``status`` is ``"tolerance"``, ``"max-iters"`` or ``"nonfinite"``.
    """
    from .cluster import cluster_aware_step

    A = _check_conformable(A, T)
    if config.regime != T.regime:
        if config.regime == "right-only":
            T = T.right_only()
        else:
            raise ValueError("left-right refinement needs W in the triple")
    left = T.regime == "left-right"

    reports = [_report(0, A, T)]
    if not reports[0].metrics.is_finite(left):
        return RefineResult(T, reports, "nonfinite")
    if reports[0].rel_residual <= config.stop_rel_residual:
        return RefineResult(T, reports, "tolerance")

    try:
        if config.biortho_preprocess == "exact":
            T = biorthogonalize_exact(T)
        elif config.biortho_preprocess == "first-order":
            T = biorthogonalize_first_order(T)
        M_state = None
        if config.driving_mode in ("fixed-inverse", "updated-inverse"):
            M_state = inverse(T.V)
    except _RECOVERABLE:
        return RefineResult(T, reports, "nonfinite")

    status = "max-iters"
    for k in range(1, config.max_iters + 1):
        t0 = time.perf_counter()
        try:
            if config.cluster_handling == "aware":
                T_new, arts = cluster_aware_step(A, T, config)
                clustered = True
            elif left:
                T_new, arts = w_step(A, T, config)
                clustered = False
            else:
                T_new, arts, M_state = right_step(A, T, config, M_state)
                clustered = False
            if arts.cluster_triggered and arts.E is None:
                T_new, arts = cluster_aware_step(A, T, config)
                clustered = True
            if clustered and M_state is not None:
                M_state = inverse(T_new.V)
            if left and config.rebiorthogonalize and not clustered:
                T_new = biorthogonalize_exact(T_new)
        except _RECOVERABLE:
            status = "nonfinite"
            break
        wall = time.perf_counter() - t0
        T = T_new
        rep = _report(k, A, T, arts.cluster_triggered, wall)
        reports.append(rep)
        if not rep.metrics.is_finite(left):
            status = "nonfinite"
            break
        if rep.rel_residual <= config.stop_rel_residual:
            status = "tolerance"
            break
    return RefineResult(T, reports, status)
