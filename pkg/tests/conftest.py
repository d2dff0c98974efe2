import numpy as np
import pytest

from eigrefine.refine import EigenTriple


def random_instance(seed, n, perturb=0.03, delta_size=0.05, complex_=True):
    """Nearby approximate triple for a diagonalizable ``A`` with sep about 1.

    Returns ``(A, T, V_true, d_true)``; ``W^H V - I`` has Frobenius norm
    ``delta_size``.
    """
    rng = np.random.default_rng(seed)

    def noise(*shape):
        z = rng.standard_normal(shape)
        if complex_:
            z = z + 1j * rng.standard_normal(shape)
        return z

    lam = np.arange(n, dtype=float) + rng.uniform(-0.1, 0.1, n)
    if complex_:
        lam = lam + 1j * rng.uniform(-0.1, 0.1, n)
    X = np.eye(n) + 0.2 * noise(n, n) / np.sqrt(n)
    A = np.linalg.solve(X.T, (X * lam).T).T
    P = noise(n, n)
    V = X @ (np.eye(n) + perturb * P / np.linalg.norm(P))
    d = lam + perturb * noise(n) / np.sqrt(n)
    G = noise(n, n)
    G *= delta_size / np.linalg.norm(G)
    WH = (np.eye(n) + G) @ np.linalg.inv(V)
    return A, EigenTriple(V, d, WH.conj().T), X, lam


@pytest.fixture
def instance():
    return random_instance


def rel_fro(a, b, scale=None):
    diff = np.linalg.norm(np.asarray(a) - np.asarray(b))
    base = np.linalg.norm(b) if scale is None else scale
    return diff / base
