"""Exact references for coupled two-level-atom / bosonic-mode models.

Everything here lives in a truncated Fock space and acts as the numerical
oracle for the encoded (qubit-register) implementations: Hamiltonians,
groundstates and joint Wigner functions.

Basis ordering (single source of truth, shared by all modules)
--------------------------------------------------------------
The composite basis index is ``I = a * prod(mode_dims) + f`` with the atom
group in the most-significant position:

* atom group: ``a = sum_i b_i 2^i`` where bit ``b_i = 0`` for the atomic
  groundstate ``|g>`` of atom ``i`` and ``b_i = 1`` for ``|e>`` (atom 0 is
  the least-significant bit of the group),
* mode group: ``f = n_0 + dim_0 * (n_1 + dim_1 * (n_2 + ...))`` so mode 0
  is the least-significant digit, with ``dim_k = n_k^max + 1``.

For the single-atom, single-mode case this orders the basis as
``|g,0>, |g,1>, ..., |e,0>, |e,1>, ...``.

Atom operators use the physical convention ``sigma_z |g> = -|g>``,
``sigma_z |e> = +|e>``, i.e. ``sigma_z = diag(-1, +1)`` in the ``(g, e)``
ordering above.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh, expm
from scipy.sparse.linalg import eigsh

from .errors import ResourceLimitError, TruncationError

# Dense symmetric eigensolver below this dimension, Lanczos above.
DENSE_EIG_LIMIT = 4096
# Default cap on the dense Hamiltonian dimension.
DEFAULT_DENSE_CAP = 16384

SIGMA = {
    "0": np.eye(2, dtype=complex),
    "x": np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    "y": np.array([[0.0, 1.0j], [-1.0j, 0.0]], dtype=complex),
    "z": np.array([[-1.0, 0.0], [0.0, 1.0]], dtype=complex),
}


def _as_float_tuple(values) -> tuple[float, ...]:
    if np.isscalar(values):
        values = [values]
    return tuple(float(v) for v in np.asarray(values, dtype=float).ravel())


@dataclass(frozen=True)
class DickeModel:
    """Physical parameters of N two-level atoms coupled to M bosonic modes.

    Frequencies are angular frequencies in units of a reference frequency;
    ``couplings[i][k]`` couples atom i to mode k.  Coupling signs are a
    gauge choice (a sign flip of any mode column is a unitary), so negative
    entries are accepted.
    """

    n_atoms: int
    n_modes: int
    atom_freqs: tuple[float, ...]
    mode_freqs: tuple[float, ...]
    couplings: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "atom_freqs", _as_float_tuple(self.atom_freqs))
        object.__setattr__(self, "mode_freqs", _as_float_tuple(self.mode_freqs))
        g = np.atleast_2d(np.asarray(self.couplings, dtype=float))
        object.__setattr__(self, "couplings", tuple(tuple(row) for row in g))
        if self.n_atoms < 1 or self.n_modes < 1:
            raise ValueError("need at least one atom and one mode")
        if len(self.atom_freqs) != self.n_atoms:
            raise ValueError("atom_freqs length mismatch")
        if len(self.mode_freqs) != self.n_modes:
            raise ValueError("mode_freqs length mismatch")
        if g.shape != (self.n_atoms, self.n_modes):
            raise ValueError("couplings must have shape (n_atoms, n_modes)")
        if any(w <= 0 for w in self.atom_freqs + self.mode_freqs):
            raise ValueError("frequencies must be strictly positive")
        if not np.all(np.isfinite(g)):
            raise ValueError("couplings must be finite")

    @classmethod
    def resonant(cls, n_atoms: int = 1, n_modes: int = 1, g: float = 0.0,
                 omega: float = 1.0) -> "DickeModel":
        """All frequencies equal to ``omega`` and a uniform coupling ``g``."""
        return cls(
            n_atoms=n_atoms,
            n_modes=n_modes,
            atom_freqs=(omega,) * n_atoms,
            mode_freqs=(omega,) * n_modes,
            couplings=tuple((float(g),) * n_modes for _ in range(n_atoms)),
        )

    @property
    def coupling_matrix(self) -> np.ndarray:
        return np.asarray(self.couplings, dtype=float)


@dataclass(frozen=True)
class FockTruncation:
    """Per-mode maximum photon numbers; mode k keeps ``max_photons[k]+1`` levels."""

    max_photons: tuple[int, ...]

    def __post_init__(self):
        mp = tuple(int(n) for n in np.atleast_1d(np.asarray(self.max_photons)))
        object.__setattr__(self, "max_photons", mp)
        if any(n < 1 for n in mp):
            raise ValueError("max photon numbers must be >= 1")

    @classmethod
    def uniform(cls, n_modes: int, n_max: int) -> "FockTruncation":
        return cls(max_photons=(int(n_max),) * n_modes)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(n + 1 for n in self.max_photons)


class FockBasis:
    """Index bookkeeping for the atoms (x) modes tensor basis described above."""

    def __init__(self, n_atoms: int, max_photons):
        self.n_atoms = int(n_atoms)
        self.mode_dims = tuple(int(n) + 1 for n in max_photons)
        self.n_modes = len(self.mode_dims)
        self.atom_dim = 2 ** self.n_atoms
        self.mode_dim = int(np.prod(self.mode_dims))
        self.dim = self.atom_dim * self.mode_dim

    def index(self, atom_bits, occupations) -> int:
        """Basis index of the product state with given atom excitation bits
        (1 = excited) and mode photon numbers."""
        bits = list(atom_bits)
        occ = list(occupations)
        if len(bits) != self.n_atoms or len(occ) != self.n_modes:
            raise ValueError("atom_bits / occupations length mismatch")
        a = 0
        for i, b in enumerate(bits):
            if b not in (0, 1):
                raise ValueError("atom bits must be 0 or 1")
            a |= int(b) << i
        f = 0
        for k in reversed(range(self.n_modes)):
            if not 0 <= occ[k] < self.mode_dims[k]:
                raise ValueError(f"occupation {occ[k]} out of range for mode {k}")
            f = f * self.mode_dims[k] + int(occ[k])
        return a * self.mode_dim + f

    def tensor_shape(self) -> tuple[int, ...]:
        """Shape that reshapes a basis vector to [atoms, mode_{M-1}, ..., mode_0]."""
        return (self.atom_dim,) + tuple(reversed(self.mode_dims))

    def mode_axis(self, k: int) -> int:
        """Axis of mode k in ``tensor_shape`` ordering."""
        return 1 + (self.n_modes - 1 - k)

    def embed(self, atom_ops: dict[int, np.ndarray] | None = None,
              mode_ops: dict[int, np.ndarray] | None = None) -> np.ndarray:
        """Kronecker-embed per-factor operators, identity elsewhere.

        Factor order (most significant first):
        atom N-1, ..., atom 0, mode M-1, ..., mode 0.
        """
        atom_ops = atom_ops or {}
        mode_ops = mode_ops or {}
        out = np.eye(1, dtype=complex)
        for i in reversed(range(self.n_atoms)):
            out = np.kron(out, atom_ops.get(i, np.eye(2, dtype=complex)))
        for k in reversed(range(self.n_modes)):
            d = self.mode_dims[k]
            out = np.kron(out, mode_ops.get(k, np.eye(d, dtype=complex)))
        return out


@dataclass
class FockOperatorMatrix:
    """Dense operator over the tensor basis, with its basis descriptor."""

    matrix: np.ndarray
    basis: FockBasis

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))


def lowering_operator(dim: int) -> np.ndarray:
    """Truncated annihilation operator: <n|a|n+1> = sqrt(n+1)."""
    a = np.zeros((dim, dim), dtype=complex)
    for n in range(dim - 1):
        a[n, n + 1] = math.sqrt(n + 1)
    return a


def number_operator(dim: int) -> np.ndarray:
    return np.diag(np.arange(dim, dtype=float)).astype(complex)


def parity_operator(dim: int) -> np.ndarray:
    """exp(i*pi*n): diagonal (-1)^n on Fock states."""
    return np.diag((-1.0) ** np.arange(dim)).astype(complex)


def displacement_operator(alpha: complex, dim: int) -> np.ndarray:
    """exp(alpha a^dag - alpha^* a) by matrix exponential in the truncation."""
    a = lowering_operator(dim)
    return expm(alpha * a.conj().T - np.conj(alpha) * a)


def build_fock_hamiltonian(model: DickeModel, trunc: FockTruncation,
                           dense_cap: int = DEFAULT_DENSE_CAP) -> FockOperatorMatrix:
    """Dense H/hbar = sum_i (w_qi/2) sz_i + sum_k w_k n_k + sum_ik g_ik sx_i (a_k + a_k^dag)."""
    if len(trunc.max_photons) != model.n_modes:
        raise ValueError("truncation does not match number of modes")
    basis = FockBasis(model.n_atoms, trunc.max_photons)
    if basis.dim > dense_cap:
        raise ResourceLimitError(
            f"dense Hamiltonian dimension {basis.dim} exceeds cap {dense_cap}")
    h = np.zeros((basis.dim, basis.dim), dtype=complex)
    for i, wq in enumerate(model.atom_freqs):
        h += 0.5 * wq * basis.embed(atom_ops={i: SIGMA["z"]})
    for k, wk in enumerate(model.mode_freqs):
        h += wk * basis.embed(mode_ops={k: number_operator(basis.mode_dims[k])})
    g = model.coupling_matrix
    for i in range(model.n_atoms):
        for k in range(model.n_modes):
            if g[i, k] == 0.0:
                continue
            a = lowering_operator(basis.mode_dims[k])
            h += g[i, k] * basis.embed(atom_ops={i: SIGMA["x"]},
                                       mode_ops={k: a + a.conj().T})
    op = FockOperatorMatrix(matrix=h, basis=basis)
    assert op.hermiticity_defect() < 1e-12
    return op


def sparse_hamiltonian(model: DickeModel, trunc: FockTruncation):
    """CSR version of build_fock_hamiltonian for large reference spaces."""
    from scipy import sparse

    basis = FockBasis(model.n_atoms, trunc.max_photons)
    sz = sparse.diags([-1.0, 1.0])
    sx = sparse.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))

    def embed(atom_ops, mode_ops):
        out = sparse.identity(1, format="csr")
        for i in reversed(range(model.n_atoms)):
            out = sparse.kron(out, atom_ops.get(i, sparse.identity(2)), format="csr")
        for k in reversed(range(model.n_modes)):
            d = basis.mode_dims[k]
            out = sparse.kron(out, mode_ops.get(k, sparse.identity(d)), format="csr")
        return out

    h = sparse.csr_matrix((basis.dim, basis.dim))
    for i, wq in enumerate(model.atom_freqs):
        h = h + 0.5 * wq * embed({i: sz}, {})
    for k, wk in enumerate(model.mode_freqs):
        h = h + wk * embed({}, {k: sparse.diags(np.arange(basis.mode_dims[k],
                                                          dtype=float))})
    g = model.coupling_matrix
    for i in range(model.n_atoms):
        for k in range(model.n_modes):
            if g[i, k] == 0.0:
                continue
            a = sparse.csr_matrix(lowering_operator(basis.mode_dims[k]).real)
            h = h + g[i, k] * embed({i: sx}, {k: a + a.T})
    return h


def energy_lower_bound(model: DickeModel) -> float:
    """Completing the square mode by mode: H >= -sum w_q/2 - sum_k G_k^2/w_k
    with G_k the worst-case aligned coupling."""
    g = np.abs(model.coupling_matrix)
    bound = -0.5 * sum(model.atom_freqs)
    for k, wk in enumerate(model.mode_freqs):
        bound -= float(g[:, k].sum()) ** 2 / wk
    return bound


def groundstate_energy_large(model: DickeModel, trunc: FockTruncation) -> float:
    """Lowest eigenvalue via sparse shift-invert Lanczos; used for reference
    truncations (the ground doublet is nearly degenerate at strong coupling,
    which stalls plain Lanczos)."""
    basis = FockBasis(model.n_atoms, trunc.max_photons)
    if basis.dim <= 1024:
        energy, _ = exact_groundstate(build_fock_hamiltonian(model, trunc,
                                                             dense_cap=basis.dim))
        return energy
    h = sparse_hamiltonian(model, trunc).tocsc()
    v0 = np.full(basis.dim, 1.0 / math.sqrt(basis.dim))
    sigma = energy_lower_bound(model) - 0.1
    vals = eigsh(h, k=1, sigma=sigma, which="LM", v0=v0, tol=1e-12,
                 return_eigenvectors=False)
    return float(vals[0])


def exact_groundstate(hamiltonian) -> tuple[float, np.ndarray]:
    """Lowest eigenpair of a Hermitian operator.

    Accepts a FockOperatorMatrix or a plain ndarray.  The eigenvector is
    normalized and its overall phase fixed so its largest-magnitude entry
    is real positive.
    """
    h = hamiltonian.matrix if isinstance(hamiltonian, FockOperatorMatrix) else np.asarray(hamiltonian)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError("hamiltonian must be a square matrix")
    scale = max(1.0, float(np.max(np.abs(h))))
    if np.max(np.abs(h - h.conj().T)) > 1e-10 * scale:
        raise ValueError("hamiltonian is not Hermitian")
    dim = h.shape[0]
    if dim <= DENSE_EIG_LIMIT:
        vals, vecs = eigh(h, subset_by_index=[0, 0])
        energy, vec = float(vals[0]), vecs[:, 0]
    else:
        # deterministic start vector keeps runs byte-reproducible
        v0 = np.full(dim, 1.0 / math.sqrt(dim))
        vals, vecs = eigsh(h, k=1, which="SA", v0=v0, tol=1e-12)
        energy, vec = float(vals[0]), vecs[:, 0]
    vec = vec / np.linalg.norm(vec)
    pivot = int(np.argmax(np.abs(vec)))
    phase = vec[pivot] / abs(vec[pivot])
    vec = vec / phase
    residual = np.linalg.norm(h @ vec - energy * vec)
    if residual > 1e-9 * scale * dim:
        raise ValueError(f"eigenpair residual {residual:.3e} too large")
    return energy, vec


def pad_state(state: np.ndarray, basis: FockBasis, pad: int) -> tuple[np.ndarray, FockBasis]:
    """Embed a state into a Fock space with ``pad`` extra levels per mode."""
    if pad == 0:
        return state.copy(), basis
    big = FockBasis(basis.n_atoms, [d - 1 + pad for d in basis.mode_dims])
    t = state.reshape(basis.tensor_shape())
    widths = [(0, 0)] + [(0, pad)] * basis.n_modes
    return np.pad(t, widths).reshape(-1), big


def exact_wigner(state: np.ndarray, trunc: FockTruncation, pauli_labels: str,
                 alphas, *, pad: int = 8, leak_tol: float | None = 1e-6) -> float:
    """Joint Wigner value W_l(alpha) = <psi| sigma^l (2/pi)^M D Pi D^dag |psi>.

    ``pauli_labels`` is one character per atom from ``0xyz`` (``0`` traces the
    atom out).  ``alphas`` is one complex displacement per mode.  Displacements
    are built by matrix exponential in a space padded by ``pad`` levels per
    mode; if the displaced state puts more than ``leak_tol`` of its norm above
    the original truncation, a TruncationError is raised (``leak_tol=None``
    skips the check and the padding).
    """
    alphas = np.atleast_1d(np.asarray(alphas, dtype=complex))
    basis = FockBasis(_infer_n_atoms(state, trunc), trunc.max_photons)
    if len(state) != basis.dim:
        raise ValueError("state length inconsistent with truncation")
    if len(alphas) != basis.n_modes:
        raise ValueError("need one displacement per mode")
    if len(pauli_labels) != basis.n_atoms:
        raise ValueError("need one atom label per atom")

    work_basis = basis
    psi = np.asarray(state, dtype=complex)
    if leak_tol is not None:
        psi, work_basis = pad_state(psi, basis, pad)
    t = psi.reshape(work_basis.tensor_shape())

    # Displace: phi = prod_k D_k(alpha_k)^dag |psi>, applied axis-wise.
    for k in range(work_basis.n_modes):
        d_k = displacement_operator(alphas[k], work_basis.mode_dims[k])
        t = np.moveaxis(np.tensordot(d_k.conj().T, t, axes=([1], [work_basis.mode_axis(k)])),
                        0, work_basis.mode_axis(k))
    if leak_tol is not None:
        keep = (slice(None),) + tuple(slice(0, basis.mode_dims[k])
                                      for k in range(basis.n_modes - 1, -1, -1))
        leak = 1.0 - float(np.sum(np.abs(t[keep]) ** 2)) / float(np.sum(np.abs(t) ** 2))
        if leak > leak_tol:
            raise TruncationError(
                f"displacement leaks {leak:.2e} of the norm above the truncation; "
                f"increase max_photons (currently {trunc.max_photons})")

    # <phi| sigma^l (x) Pi |phi>
    w = t.copy()
    for k in range(work_basis.n_modes):
        par = (-1.0) ** np.arange(work_basis.mode_dims[k])
        shape = [1] * w.ndim
        shape[work_basis.mode_axis(k)] = len(par)
        w = w * par.reshape(shape)
    atom_op = np.eye(1, dtype=complex)
    for i in reversed(range(work_basis.n_atoms)):
        atom_op = np.kron(atom_op, SIGMA[pauli_labels[i]])
    w = np.tensordot(atom_op, w, axes=([1], [0]))
    value = complex(np.vdot(t, w)) * (2.0 / math.pi) ** work_basis.n_modes
    assert abs(value.imag) < 1e-10
    return float(value.real)


def _infer_n_atoms(state, trunc: FockTruncation) -> int:
    mode_dim = int(np.prod([n + 1 for n in trunc.max_photons]))
    atom_dim, rem = divmod(len(state), mode_dim)
    n = atom_dim.bit_length() - 1
    if rem != 0 or atom_dim != 2 ** n:
        raise ValueError("state length inconsistent with truncation")
    return n


def default_reference_truncation(n_modes: int) -> FockTruncation:
    """Truncation used for 'numerically exact' reference energies."""
    return FockTruncation.uniform(n_modes, 60 if n_modes == 1 else 30)
