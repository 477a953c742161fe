import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def kron_chain(mats):
    """Kronecker product, first factor most significant."""
    out = np.eye(1, dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


def embed_on_qubits(mat, qubits, n):
    """Embed a gate matrix (bit j of its index = qubits[j]) into n qubits,
    with basis index bit q = qubit q."""
    dim = 2 ** n
    out = np.zeros((dim, dim), dtype=complex)
    rest = [q for q in range(n) if q not in qubits]
    k = len(qubits)
    for col in range(dim):
        loc = sum(((col >> q) & 1) << j for j, q in enumerate(qubits))
        for row_loc in range(2 ** k):
            amp = mat[row_loc, loc]
            if amp == 0:
                continue
            row = col
            for j, q in enumerate(qubits):
                bit = (row_loc >> j) & 1
                row = (row & ~(1 << q)) | (bit << q)
            out[row, col] += amp
    assert rest is not None
    return out


def random_state(n_qubits, rng):
    v = rng.normal(size=2 ** n_qubits) + 1j * rng.normal(size=2 ** n_qubits)
    return v / np.linalg.norm(v)


def haar_unitary(dim, rng):
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))
