"""Deterministic test families with known eigendecompositions.

Random entries come from xoshiro256** (seeded through splitmix64) with a
Box-Muller transform, so the matrices are reproducible bit for bit from the
seed alone.  See the README for the exact recipe.
"""

import dataclasses
from dataclasses import dataclass
from typing import Optional

import mpmath
import numpy as np

from . import kernels
from .errors import SingularMatrixError
from .numcore import compact, fro_norm, inverse, solve
from .refine import EigenTriple

__all__ = ["Xoshiro256", "FamilySpec", "GroundTruth", "gen_simple",
           "gen_clustered", "generate", "cluster_basis",
           "frobenius_condition", "cluster_condition", "round_binary32", "make_initial",
           "clustered_spectrum"]

KINDS = ("simple-real", "simple-complex", "clustered")
MAX_RETRIES = 8


class Xoshiro256:
    """xoshiro256** stream producing standard normals in row-major order."""

    def __init__(self, seed):
        self.seed = int(seed)
        self.state = kernels.splitmix64_seed(self.seed)

    def normal(self, shape):
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        count = int(np.prod(shape))
        return kernels.xoshiro_normals(self.state, count).reshape(shape)


@dataclass(frozen=True)
class FamilySpec:
    kind: str = "simple-real"
    n: int = 200
    alpha: float = 0.05
    k: int = 6
    mu: float = 0.25
    h: float = 3e-7
    rho: float = 2e-3
    eta: float = 1e-3
    seed: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown family kind {self.kind!r}")
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.kind == "clustered" and not 1 <= self.k <= self.n:
            raise ValueError("clustered family needs 1 <= k <= n")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_text(self):
        """Flat ``key=value`` block, one pair per line."""
        return "\n".join(f"{f.name}={getattr(self, f.name)!r}"
                         if isinstance(getattr(self, f.name), str)
                         else f"{f.name}={getattr(self, f.name)}"
                         for f in dataclasses.fields(self))


@dataclass(frozen=True)
class GroundTruth:
    A: np.ndarray
    V: np.ndarray
    W: np.ndarray
    d: np.ndarray
    spec: FamilySpec
    seed_used: int
    X_condition: Optional[float] = None

    def triple(self, regime="left-right"):
        W = self.W if regime == "left-right" else None
        return EigenTriple(self.V, self.d, W, regime)


def _truth(X, d, spec, seed):
    X = compact(X)
    d = compact(d)
    # A = X D X^{-1}, assembled as the solution of X^T A^T = (X D)^T
    A = compact(solve(X.T, (X * d).T).T)
    M = inverse(X)
    M = M + M @ (np.eye(X.shape[0]) - X @ M)
    return GroundTruth(A, X, compact(M.conj().T), d, spec, seed,
                       float(np.linalg.cond(X)))


def simple_spectrum(kind, n):
    i = np.arange(n)
    if kind == "simple-real":
        return -1.0 + 2.0 * i / (n - 1)
    return np.exp(2j * np.pi * i / n)


def gen_simple(spec):
    """``A = X diag(lambda) X^{-1}`` with ``X = I + alpha N``."""
    if spec.kind not in ("simple-real", "simple-complex"):
        raise ValueError("gen_simple needs a simple-* family")
    d = simple_spectrum(spec.kind, spec.n)
    for attempt in range(MAX_RETRIES):
        seed = spec.seed + attempt
        N = Xoshiro256(seed).normal((spec.n, spec.n))
        X = np.eye(spec.n) + spec.alpha * N
        try:
            return _truth(X, d, spec, seed)
        except SingularMatrixError:
            continue
    raise SingularMatrixError(f"no nonsingular X after {MAX_RETRIES} seeds")


def cluster_basis(k, rho):
    """Vandermonde-type block ``B_ij = (1 + rho (i-1))^(j-1)``."""
    nodes = 1.0 + rho * np.arange(k)
    return nodes[:, None] ** np.arange(k)[None, :]


def _mp_fro_condition(M):
    Minv = M ** -1
    nb = mpmath.sqrt(sum(abs(x) ** 2 for x in M))
    ni = mpmath.sqrt(sum(abs(x) ** 2 for x in Minv))
    return float(nb * ni)


def frobenius_condition(B, dps=60):
    """``||B||_F ||B^{-1}||_F`` of a given matrix, in extended precision."""
    with mpmath.workdps(dps):
        return _mp_fro_condition(mpmath.matrix(np.asarray(B).tolist()))


def cluster_condition(k, rho, dps=80):
    """Frobenius condition number of the exact cluster basis.

    The basis entries are formed in extended precision, so the result is
    not limited by the binary64 rounding of ``B`` itself.
    """
    with mpmath.workdps(dps):
        nodes = [1 + mpmath.mpf(rho) * i for i in range(k)]
        M = mpmath.matrix([[x ** j for j in range(k)] for x in nodes])
        return _mp_fro_condition(M)


def clustered_spectrum(n, k, mu, h):
    """Cluster ``mu + (j - (k-1)/2) h`` plus ``n-k`` values spread over [-1, 1].

    The outer values are equally spaced along [-1, 1] with a guard interval
    of width ``10 k h`` around ``mu`` removed.
    """
    cluster = mu + (np.arange(k) - (k - 1) / 2) * h
    m = n - k
    if m == 0:
        return cluster
    guard = 10 * k * h
    lo, hi = mu - guard / 2, mu + guard / 2
    length = 2.0 - guard
    t = -1.0 + (np.arange(m) * (length / (m - 1)) if m > 1 else np.zeros(1))
    rest = np.where(t > lo, t + guard, t)
    rest = np.clip(rest, -1.0, 1.0)
    if np.any((rest > lo) & (rest < hi)):
        raise ValueError("guard interval does not fit inside [-1, 1]")
    return np.concatenate([cluster, rest])


def gen_clustered(spec):
    """Clustered family ``X = blockdiag(B, I) + eta G``, ``A = X D X^{-1}``."""
    if spec.kind != "clustered":
        raise ValueError("gen_clustered needs the clustered family")
    n, k = spec.n, spec.k
    nodes = 1.0 + spec.rho * np.arange(k)
    if len(np.unique(nodes)) < k:
        raise SingularMatrixError("cluster basis has repeated nodes (rho = 0)")
    B = cluster_basis(k, spec.rho)
    d = clustered_spectrum(n, k, spec.mu, spec.h)
    for attempt in range(MAX_RETRIES):
        seed = spec.seed + attempt
        G = Xoshiro256(seed).normal((n, n))
        X = np.eye(n)
        X[:k, :k] = B
        X = X + spec.eta * G
        try:
            return _truth(X, d, spec, seed)
        except SingularMatrixError:
            continue
    raise SingularMatrixError(f"no nonsingular X after {MAX_RETRIES} seeds")


def generate(spec):
    return gen_clustered(spec) if spec.kind == "clustered" else gen_simple(spec)


def round_binary32(M):
    """Round real and imaginary parts to binary32, then widen again."""
    M = np.asarray(M)
    with np.errstate(over="ignore"):
        if np.iscomplexobj(M):
            out = (M.real.astype(np.float32).astype(np.float64)
                   + 1j * M.imag.astype(np.float32).astype(np.float64))
        else:
            out = M.astype(np.float32).astype(np.float64)
    if np.any(np.isinf(out) & np.isfinite(M)):
        raise OverflowError("value out of binary32 range")
    return compact(out)


def make_initial(gt, regime="left-right"):
    """Binary32-rounded copy of the ground truth as a starting triple."""
    W = round_binary32(gt.W) if regime == "left-right" else None
    T = EigenTriple(round_binary32(gt.V), round_binary32(gt.d), W, regime,
                    "binary32-rounded")
    return T


def construction_residual(gt):
    return fro_norm(gt.A @ gt.V - gt.V * gt.d) / fro_norm(gt.A)
