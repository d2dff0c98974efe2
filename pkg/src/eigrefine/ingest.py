"""Matrix Market input and initial eigendecomposition adapters."""

import io
import os
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.linalg

from .errors import InitializationError, MatrixMarketError
from .genmat import make_initial, round_binary32
from .numcore import as_matrix, compact, inverse
from .refine import EigenTriple

__all__ = ["MtxHeader", "parse_header", "read_mtx", "write_mtx",
           "SolverAdapter", "LapackAdapter", "BuiltinQRAdapter",
           "GroundTruthAdapter", "get_adapter", "ADAPTERS",
           "initial_decomposition", "eig_match_error"]

FORMATS = ("coordinate", "array")
FIELDS = ("real", "complex", "integer", "pattern")
SYMMETRIES = ("general", "symmetric", "skew-symmetric", "hermitian")


@dataclass(frozen=True)
class MtxHeader:
    object: str
    format: str
    field: str
    symmetry: str
    rows: int
    cols: int
    entries: int


def parse_header(text):
    """Parse the banner and size line of a Matrix Market document."""
    lines = iter(text.splitlines())
    banner = next(lines, "")
    parts = banner.split()
    if len(parts) != 5 or parts[0] != "%%MatrixMarket":
        raise MatrixMarketError(f"malformed banner: {banner!r}")
    obj, fmt, fld, sym = (p.lower() for p in parts[1:])
    if obj != "matrix":
        raise MatrixMarketError(f"unsupported object {obj!r}")
    if fmt not in FORMATS:
        raise MatrixMarketError(f"unsupported format {fmt!r}")
    if fld not in FIELDS:
        raise MatrixMarketError(f"unsupported field {fld!r}")
    if sym not in SYMMETRIES:
        raise MatrixMarketError(f"unsupported symmetry {sym!r}")
    if fmt == "array" and fld == "pattern":
        raise MatrixMarketError("pattern field requires coordinate format")
    if sym == "hermitian" and fld != "complex":
        raise MatrixMarketError("hermitian symmetry requires a complex field")
    for line in lines:
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        try:
            size = [int(v) for v in s.split()]
        except ValueError:
            raise MatrixMarketError(f"malformed size line: {s!r}") from None
        want = 3 if fmt == "coordinate" else 2
        if len(size) != want or min(size) < 0:
            raise MatrixMarketError(f"malformed size line: {s!r}")
        rows, cols = size[:2]
        entries = size[2] if fmt == "coordinate" else rows * cols
        if sym != "general" and rows != cols:
            raise MatrixMarketError(f"{sym} matrix must be square")
        return MtxHeader(obj, fmt, fld, sym, rows, cols, entries)
    raise MatrixMarketError("missing size line")


def read_mtx(path, with_header=False):
    """Dense binary64 matrix from a Matrix Market file.

    Symmetric, skew-symmetric and hermitian storage is expanded, pattern
    entries become 1 and duplicate coordinates are summed.
    """
    with open(path, "r") as fh:
        text = fh.read()
    header = parse_header(text)
    try:
        M = scipy.io.mmread(io.StringIO(text))
    except (ValueError, IndexError) as exc:
        raise MatrixMarketError(f"{os.fspath(path)}: {exc}") from exc
    M = M.toarray() if hasattr(M, "toarray") else np.asarray(M)
    A = compact(np.asarray(M, dtype=np.complex128 if np.iscomplexobj(M)
                           else np.float64))
    if A.shape != (header.rows, header.cols):
        raise MatrixMarketError(f"read shape {A.shape} disagrees with header")
    return (A, header) if with_header else A


def write_mtx(path, A):
    """Write a dense matrix in array format with round-trip exact digits."""
    A = np.asarray(A)
    if A.ndim != 2:
        raise ValueError("write_mtx needs a 2-D array")
    cplx = np.iscomplexobj(A)
    out = [f"%%MatrixMarket matrix array {'complex' if cplx else 'real'} general",
           f"{A.shape[0]} {A.shape[1]}"]
    for v in A.ravel(order="F"):
        out.append(f"{float(v.real)!r} {float(v.imag)!r}" if cplx
                   else repr(float(v)))
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def nnz(A):
    return int(np.count_nonzero(A))


# --------------------------------------------------------------------------
# adapters


class SolverAdapter:
    """Something that returns an initial ``(V, d, W?)`` for a dense matrix."""

    name = "adapter"
    capability = "left-right"
    precision = "binary64"
    max_n = None

    def supports(self, regime):
        return regime == "right-only" or self.capability == "left-right"

    def decompose(self, A, want_left):
        raise NotImplementedError


class LapackAdapter(SolverAdapter):
    """Dense ``geev`` from LAPACK in binary64 or binary32.

    With ``complexify`` set, a real matrix is cast to complex before the
    call so that ``cgeev``/``zgeev`` is used instead of the real driver.
    """

    def __init__(self, precision="binary64", complexify=False):
        if precision not in ("binary64", "binary32"):
            raise ValueError(f"unknown precision {precision!r}")
        self.precision = precision
        self.complexify = complexify
        self.name = ("lapack64" if precision == "binary64" else "lapack32") \
            + ("-complex" if complexify else "")

    def working_dtype(self, A):
        cplx = np.iscomplexobj(A) or self.complexify
        if self.precision == "binary32":
            return np.complex64 if cplx else np.float32
        return np.complex128 if cplx else np.float64

    def decompose(self, A, want_left):
        Aw = np.asarray(A).astype(self.working_dtype(A))
        out = scipy.linalg.eig(Aw, left=want_left, right=True,
                               check_finite=False, overwrite_a=True)
        if want_left:
            d, WL, VR = out
        else:
            (d, VR), WL = out, None
        return VR, d, WL


class BuiltinQRAdapter(SolverAdapter):
    """Shifted QR from the cluster module; small matrices only."""

    name = "builtin-qr"
    max_n = None

    def __init__(self):
        from .cluster import QR_EIG_MAX
        self.max_n = QR_EIG_MAX

    def decompose(self, A, want_left):
        from .cluster import qr_eig
        d, V = qr_eig(A)
        W = inverse(V).conj().T if want_left else None
        return V, d, W


class GroundTruthAdapter(SolverAdapter):
    """Binary32-rounded known decomposition of a generated family."""

    name = "ground-truth"
    precision = "binary32-rounded"

    def __init__(self, gt):
        self.gt = gt

    def decompose(self, A, want_left):
        T = make_initial(self.gt, "left-right" if want_left else "right-only")
        return T.V, T.d, T.W


ADAPTERS = {
    "lapack64": lambda: LapackAdapter("binary64"),
    "lapack32": lambda: LapackAdapter("binary32"),
    "lapack64-complex": lambda: LapackAdapter("binary64", complexify=True),
    "lapack32-complex": lambda: LapackAdapter("binary32", complexify=True),
    "builtin-qr": BuiltinQRAdapter,
}


def get_adapter(name):
    if isinstance(name, SolverAdapter):
        return name
    try:
        return ADAPTERS[name]()
    except KeyError:
        raise ValueError(f"unknown adapter {name!r}; choose from "
                         f"{sorted(ADAPTERS)}") from None


def initial_decomposition(A, adapter="lapack32", regime="left-right"):
    """Initial :class:`EigenTriple` from an adapter.

    Any failure of the underlying solver is raised as
    :class:`InitializationError`; the result is never partial.
    """
    adapter = get_adapter(adapter)
    A = as_matrix(A, "A")
    if not adapter.supports(regime):
        raise InitializationError(f"{adapter.name} cannot provide W")
    if adapter.max_n is not None and A.shape[0] > adapter.max_n:
        raise InitializationError(
            f"{adapter.name} is limited to n <= {adapter.max_n}")
    want_left = regime == "left-right"
    try:
        V, d, W = adapter.decompose(A, want_left)
    except (np.linalg.LinAlgError, ValueError, ArithmeticError) as exc:
        raise InitializationError(f"{adapter.name} failed: {exc}") from exc
    tag = adapter.precision
    if tag == "binary32":
        V, d = round_binary32(V), round_binary32(d)
        W = round_binary32(W) if W is not None else None
        tag = "binary32-rounded"
    V, d = compact(V), compact(d)
    W = compact(W) if W is not None else None
    try:
        T = EigenTriple(V, d, W, regime, tag)
    except ValueError as exc:
        raise InitializationError(str(exc)) from exc
    if not T.is_finite():
        raise InitializationError(f"{adapter.name} returned non-finite values")
    return T


# --------------------------------------------------------------------------
# eigenvector comparison


def _unit_columns(V):
    V = np.asarray(V, dtype=complex)
    norms = np.linalg.norm(V, axis=0)
    norms[norms == 0] = 1.0
    return V / norms


def match_eigenvalues(d_a, d_b):
    """One-to-one greedy matching, closest pairs first.  Returns ``perm``
    with ``d_b[perm[i]]`` matched to ``d_a[i]``."""
    d_a = np.asarray(d_a, dtype=complex)
    d_b = np.asarray(d_b, dtype=complex)
    n = d_a.shape[0]
    dist = np.abs(d_a[:, None] - d_b[None, :])
    order = np.argsort(dist, axis=None, kind="stable")
    perm = np.full(n, -1, dtype=np.int64)
    used_a = np.zeros(n, dtype=bool)
    used_b = np.zeros(n, dtype=bool)
    left = n
    for flat in order:
        i, j = divmod(int(flat), n)
        if used_a[i] or used_b[j]:
            continue
        perm[i] = j
        used_a[i] = used_b[j] = True
        left -= 1
        if left == 0:
            break
    return perm


def eig_match_error(V_a, d_a, V_b, d_b):
    """Relative Frobenius error between matched, optimally scaled eigenvectors."""
    V_a = _unit_columns(V_a)
    V_b = _unit_columns(V_b)
    if V_a.shape != V_b.shape or len(d_a) != len(d_b):
        raise ValueError("eig_match_error needs equal sizes")
    perm = match_eigenvalues(d_a, d_b)
    Vb = V_b[:, perm]
    # least-squares scale c minimizing ||c a - b||
    c = np.einsum("ij,ij->j", V_a.conj(), Vb)
    diff = V_a * c - Vb
    return float(np.linalg.norm(diff) / np.linalg.norm(Vb))
