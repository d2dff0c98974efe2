"""Hot inner loops, each with a numba kernel and a pure-numpy twin.

The backend is chosen once at import time.  Set ``EIGREFINE_DISABLE_NUMBA=1``
to force the numpy path (useful when numba is unavailable or when comparing
the two; see ``benchmarks/bench_kernels.py``).  Both paths are always
importable as ``<name>_numba`` / ``<name>_numpy`` so tests can cross-check
them regardless of the active backend.
"""

import math
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

DISABLE_ENV = "EIGREFINE_DISABLE_NUMBA"

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and os.environ.get(DISABLE_ENV, "").lower() not in (
    "1", "true", "yes", "on")

__all__ = ["backend", "correction_matrix", "min_pairwise_gap",
           "chain_labels", "xoshiro_normals", "splitmix64_seed",
           "USE_NUMBA", "HAVE_NUMBA", "DISABLE_ENV"]


def _njit(**opts):
    if HAVE_NUMBA:
        return numba.njit(cache=True, **opts)

    def deco(f):
        return f
    return deco


def backend():
    """Name of the active kernel backend."""
    return "numba" if USE_NUMBA else "numpy"


# --------------------------------------------------------------------------
# componentwise correction  e_ij = y_ij / (d_j - d_i), suppressed on blocks

@_njit()
def _correction_nb(Y, d, labels):
    n = Y.shape[0]
    E = np.zeros_like(Y)
    hazard = False
    for i in range(n):
        li = labels[i]
        di = d[i]
        for j in range(n):
            if labels[j] == li:
                continue
            den = d[j] - di
            if den == 0:
                hazard = True
                continue
            E[i, j] = Y[i, j] / den
    return E, hazard


def correction_matrix_numba(Y, d, labels):
    return _correction_nb(Y, d, labels)


def correction_matrix_numpy(Y, d, labels):
    same = labels[:, None] == labels[None, :]
    den = d[None, :] - d[:, None]
    zero = den == 0
    hazard = bool(np.any(zero & ~same))
    skip = same | zero
    E = Y / np.where(skip, 1, den)
    E[skip] = 0
    return E, hazard


# --------------------------------------------------------------------------
# minimum pairwise distance  min_{i != j} |d_i - d_j|

@_njit()
def _min_gap_nb(d):
    n = d.shape[0]
    best = np.inf
    for i in range(n):
        for j in range(i + 1, n):
            g = abs(d[i] - d[j])
            if g < best:
                best = g
    return best


def min_pairwise_gap_numba(d):
    return float(_min_gap_nb(d))


def min_pairwise_gap_numpy(d, chunk=512):
    if not np.iscomplexobj(d):
        return float(np.min(np.diff(np.sort(d))))
    best = np.inf
    n = d.shape[0]
    for start in range(0, n, chunk):
        block = np.abs(d[start:start + chunk, None] - d[None, :])
        rows = np.arange(start, min(start + chunk, n)) - start
        block[rows, rows + start] = np.inf
        best = min(best, float(block.min()))
    return best


# --------------------------------------------------------------------------
# single-linkage chaining with strict threshold

@_njit()
def _find(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


@_njit()
def _chain_nb(d, delta):
    n = d.shape[0]
    parent = np.arange(n)
    for i in range(n):
        for j in range(i + 1, n):
            if abs(d[i] - d[j]) < delta:
                ri = _find(parent, i)
                rj = _find(parent, j)
                if ri != rj:
                    if ri < rj:
                        parent[rj] = ri
                    else:
                        parent[ri] = rj
    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        labels[i] = _find(parent, i)
    return labels


def _canonical(roots):
    # relabel 0, 1, 2, ... in order of first appearance
    _, first, inv = np.unique(roots, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inv].astype(np.int64)


def chain_labels_numba(d, delta):
    return _canonical(_chain_nb(d, float(delta)))


def chain_labels_numpy(d, delta):
    n = d.shape[0]
    if not np.iscomplexobj(d):
        order = np.argsort(d, kind="stable")
        breaks = np.diff(d[order]) >= delta
        group = np.concatenate(([0], np.cumsum(breaks)))
        roots = np.empty(n, dtype=np.int64)
        roots[order] = group
        return _canonical(roots)
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import connected_components
    adj = np.abs(d[:, None] - d[None, :]) < delta
    _, roots = connected_components(csr_matrix(adj), directed=False)
    return _canonical(roots)


# --------------------------------------------------------------------------
# xoshiro256** + Box-Muller standard normals

_MASK = (1 << 64) - 1


def splitmix64_seed(seed):
    """Expand a 64-bit seed into a xoshiro256 state via splitmix64."""
    x = seed & _MASK
    state = []
    for _ in range(4):
        x = (x + 0x9E3779B97F4A7C15) & _MASK
        z = x
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        state.append(z ^ (z >> 31))
    if not any(state):
        state[0] = 1
    return np.array(state, dtype=np.uint64)


@_njit()
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@_njit()
def _normals_nb(s, count):
    out = np.empty(count, dtype=np.float64)
    s0, s1, s2, s3 = s[0], s[1], s[2], s[3]
    scale = 1.0 / 9007199254740992.0
    two_pi = 2.0 * math.pi
    i = 0
    while i < count:
        r = _rotl(s1 * np.uint64(5), 7) * np.uint64(9)
        t = s1 << np.uint64(17)
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        u1 = (float(r >> np.uint64(11)) + 1.0) * scale
        r = _rotl(s1 * np.uint64(5), 7) * np.uint64(9)
        t = s1 << np.uint64(17)
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        u2 = float(r >> np.uint64(11)) * scale
        rad = math.sqrt(-2.0 * math.log(u1))
        out[i] = rad * math.cos(two_pi * u2)
        if i + 1 < count:
            out[i + 1] = rad * math.sin(two_pi * u2)
        i += 2
    s[0], s[1], s[2], s[3] = s0, s1, s2, s3
    return out


def xoshiro_normals_numba(state, count):
    return _normals_nb(state, int(count))


def xoshiro_normals_numpy(state, count):
    s0, s1, s2, s3 = (int(v) for v in state)
    m = _MASK
    scale = 1.0 / 9007199254740992.0
    two_pi = 2.0 * math.pi
    out = np.empty(count, dtype=np.float64)

    def rotl(x, k):
        return ((x << k) | (x >> (64 - k))) & m

    i = 0
    while i < count:
        r = (rotl((s1 * 5) & m, 7) * 9) & m
        t = (s1 << 17) & m
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = rotl(s3, 45)
        u1 = ((r >> 11) + 1.0) * scale
        r = (rotl((s1 * 5) & m, 7) * 9) & m
        t = (s1 << 17) & m
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = rotl(s3, 45)
        u2 = (r >> 11) * scale
        rad = math.sqrt(-2.0 * math.log(u1))
        out[i] = rad * math.cos(two_pi * u2)
        if i + 1 < count:
            out[i + 1] = rad * math.sin(two_pi * u2)
        i += 2
    state[:] = np.array([s0, s1, s2, s3], dtype=np.uint64)
    return out


if USE_NUMBA:
    correction_matrix = correction_matrix_numba
    min_pairwise_gap = min_pairwise_gap_numba
    chain_labels = chain_labels_numba
    xoshiro_normals = xoshiro_normals_numba
else:
    correction_matrix = correction_matrix_numpy
    min_pairwise_gap = min_pairwise_gap_numpy
    chain_labels = chain_labels_numpy
    xoshiro_normals = xoshiro_normals_numpy
