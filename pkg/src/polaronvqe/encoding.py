"""One-hot (single-excitation-subspace) qubit encoding of bosonic modes,
plus a small Pauli-string operator algebra.

Qubit layout and sign conventions
---------------------------------
Qubits are numbered 0..n-1 and qubit q is bit q of a basis-state index
(little endian, qubit 0 least significant).  Bitstrings are always written
with qubit 0 as the leftmost character.

* Atom i lives on qubit i.  The computational states carry the standard
  Pauli-Z signs, ``Z|0> = +|0>``, ``Z|1> = -|1>``; the atomic groundstate
  ``|g>`` (the -1 eigenstate of the physical sigma_z) is therefore encoded
  as qubit state ``|1>`` and ``|e>`` as ``|0>``.  With this choice every
  physical atom Pauli maps to the identically-labeled qubit Pauli.
* Mode k occupies the contiguous register returned by ``mode_register(k)``;
  register slot p (qubit ``register[p]``) one-hot encodes photon number p,
  i.e. ``|n> -> |0...010...0>`` with the 1 at slot n.  Slot qubits use the
  occupation convention: slot in ``|1>`` means "this photon number".

The encoded noninteracting vacuum has every atom qubit in ``|1>`` and every
register one-hot at slot 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import DickeModel, FockBasis, FockTruncation

COEFF_PRUNE = 1e-14

_PAULI_MATS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# (A, B) -> (phase, C) with A.B = phase * C for single-qubit Paulis.
_PAULI_PROD = {
    ("X", "X"): (1, "I"), ("Y", "Y"): (1, "I"), ("Z", "Z"): (1, "I"),
    ("X", "Y"): (1j, "Z"), ("Y", "X"): (-1j, "Z"),
    ("Y", "Z"): (1j, "X"), ("Z", "Y"): (-1j, "X"),
    ("Z", "X"): (1j, "Y"), ("X", "Z"): (-1j, "Y"),
}


@dataclass(frozen=True)
class QubitLayout:
    """Mapping of atoms and one-hot mode registers onto a line of qubits."""

    n_atoms: int
    max_photons: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "max_photons",
                           tuple(int(n) for n in np.atleast_1d(self.max_photons)))
        if self.n_atoms < 1 or any(n < 1 for n in self.max_photons):
            raise ValueError("need n_atoms >= 1 and max photon numbers >= 1")

    @classmethod
    def for_model(cls, model: DickeModel, trunc: FockTruncation) -> "QubitLayout":
        if len(trunc.max_photons) != model.n_modes:
            raise ValueError("truncation does not match number of modes")
        return cls(n_atoms=model.n_atoms, max_photons=trunc.max_photons)

    @property
    def n_modes(self) -> int:
        return len(self.max_photons)

    @property
    def total_qubits(self) -> int:
        return self.n_atoms + sum(n + 1 for n in self.max_photons)

    def atom_qubit(self, i: int) -> int:
        if not 0 <= i < self.n_atoms:
            raise IndexError("atom index out of range")
        return i

    def mode_register(self, k: int) -> range:
        if not 0 <= k < self.n_modes:
            raise IndexError("mode index out of range")
        start = self.n_atoms + sum(n + 1 for n in self.max_photons[:k])
        return range(start, start + self.max_photons[k] + 1)

    def vacuum_index(self) -> int:
        """Basis index of the encoded noninteracting vacuum."""
        return encode_state([0] * self.n_modes, [0] * self.n_atoms, self)


class PauliTermSum:
    """Weighted sum of multi-qubit Pauli strings in a canonical sparse form.

    Terms are keyed by a tuple of (qubit, label) pairs sorted by qubit; the
    empty key is the identity.  Instances should be treated as immutable;
    algebra returns new objects.
    """

    __slots__ = ("_terms",)

    def __init__(self, terms: dict | None = None):
        self._terms: dict[tuple[tuple[int, str], ...], complex] = dict(terms or {})

    @classmethod
    def identity(cls, coeff: complex = 1.0) -> "PauliTermSum":
        return cls({(): complex(coeff)})

    @classmethod
    def single(cls, qubit: int, label: str, coeff: complex = 1.0) -> "PauliTermSum":
        if label == "I":
            return cls.identity(coeff)
        if label not in ("X", "Y", "Z"):
            raise ValueError(f"unknown Pauli label {label!r}")
        return cls({((int(qubit), label),): complex(coeff)})

    @property
    def terms(self) -> list[tuple[tuple[tuple[int, str], ...], complex]]:
        return sorted(self._terms.items())

    @property
    def n_terms(self) -> int:
        return len(self._terms)

    def coefficient(self, key) -> complex:
        return self._terms.get(tuple(key), 0.0 + 0.0j)

    def __add__(self, other: "PauliTermSum") -> "PauliTermSum":
        out = dict(self._terms)
        for key, c in other._terms.items():
            out[key] = out.get(key, 0.0) + c
        return PauliTermSum(out).canonicalize()

    def __sub__(self, other: "PauliTermSum") -> "PauliTermSum":
        return self + (-1.0) * other

    def __rmul__(self, scalar: complex) -> "PauliTermSum":
        return PauliTermSum({k: scalar * c for k, c in self._terms.items()})

    def __mul__(self, other):
        if np.isscalar(other):
            return self.__rmul__(other)
        out: dict = {}
        for ka, ca in self._terms.items():
            da = dict(ka)
            for kb, cb in other._terms.items():
                phase = 1.0 + 0.0j
                merged = dict(da)
                for q, lb in kb:
                    la = merged.pop(q, "I")
                    if la == "I":
                        merged[q] = lb
                    else:
                        ph, lc = _PAULI_PROD[(la, lb)]
                        phase *= ph
                        if lc != "I":
                            merged[q] = lc
                key = tuple(sorted(merged.items()))
                out[key] = out.get(key, 0.0) + ca * cb * phase
        return PauliTermSum(out).canonicalize()

    def adjoint(self) -> "PauliTermSum":
        return PauliTermSum({k: np.conj(c) for k, c in self._terms.items()})

    def canonicalize(self, prune: float = COEFF_PRUNE) -> "PauliTermSum":
        out = {}
        for key, c in self._terms.items():
            c = complex(c)
            if abs(c) >= prune:
                out[tuple(sorted(key))] = c
        return PauliTermSum(out)

    def is_hermitian(self, tol: float = 1e-10) -> bool:
        return all(abs(c.imag) <= tol for c in self._terms.values())

    @property
    def max_weight(self) -> int:
        return max((len(k) for k in self._terms), default=0)

    def support(self) -> set[int]:
        return {q for key in self._terms for q, _ in key}

    def to_matrix(self, n_qubits: int) -> np.ndarray:
        """Dense matrix; basis index bit q is qubit q (little endian)."""
        if n_qubits > 14:
            raise ValueError("dense conversion capped at 14 qubits")
        dim = 2 ** n_qubits
        out = np.zeros((dim, dim), dtype=complex)
        for key, c in self._terms.items():
            labels = dict(key)
            term = np.eye(1, dtype=complex)
            for q in reversed(range(n_qubits)):
                term = np.kron(term, _PAULI_MATS[labels.get(q, "I")])
            out += c * term
        return out

    def strings(self, n_qubits: int) -> list[tuple[complex, str]]:
        """(coefficient, label-string) pairs; character q is qubit q."""
        out = []
        for key, c in self.terms:
            labels = dict(key)
            out.append((c, "".join(labels.get(q, "I") for q in range(n_qubits))))
        return out

    def to_lines(self, layout: QubitLayout) -> list[str]:
        """Line format ``coeff_re coeff_im <blocks>`` with the atom block and
        each mode register separated by single spaces."""
        blocks = [list(range(layout.n_atoms))] + [list(layout.mode_register(k))
                                                  for k in range(layout.n_modes)]
        lines = []
        for c, s in sorted(self.strings(layout.total_qubits), key=lambda t: t[1]):
            text = " ".join("".join(s[q] for q in block) for block in blocks)
            lines.append(f"{c.real:.16g} {c.imag:.16g} {text}")
        return lines

    def __repr__(self):
        return f"PauliTermSum({self.n_terms} terms)"


def sigma_plus(qubit: int) -> PauliTermSum:
    """|1><0| = (X - iY)/2 on one qubit (raises a register slot 0 -> 1)."""
    return 0.5 * PauliTermSum.single(qubit, "X") + (-0.5j) * PauliTermSum.single(qubit, "Y")


def sigma_minus(qubit: int) -> PauliTermSum:
    """|0><1| = (X + iY)/2 on one qubit."""
    return 0.5 * PauliTermSum.single(qubit, "X") + 0.5j * PauliTermSum.single(qubit, "Y")


def slot_occupation(qubit: int) -> PauliTermSum:
    """|1><1| = (I - Z)/2 on one qubit."""
    return PauliTermSum.identity(0.5) + (-0.5) * PauliTermSum.single(qubit, "Z")


def encode_annihilation(k: int, layout: QubitLayout) -> PauliTermSum:
    """Encoded annihilation operator of mode k:
    sum_n sqrt(n+1) sp(slot n) sm(slot n+1), expanded into Pauli strings."""
    reg = list(layout.mode_register(k))
    out = PauliTermSum()
    for n in range(len(reg) - 1):
        bond = sigma_plus(reg[n]) * sigma_minus(reg[n + 1])
        out = out + math.sqrt(n + 1) * bond
    return out


def encode_number(k: int, layout: QubitLayout) -> PauliTermSum:
    """Encoded photon-number operator of mode k: sum_n n (I - Z_slot)/2."""
    reg = list(layout.mode_register(k))
    out = PauliTermSum()
    for n, q in enumerate(reg):
        if n:
            out = out + float(n) * slot_occupation(q)
    return out


def encode_hamiltonian(model: DickeModel, trunc: FockTruncation,
                       layout: QubitLayout | None = None) -> PauliTermSum:
    """Encoded Hamiltonian; every term acts on at most 3 qubits."""
    if layout is None:
        layout = QubitLayout.for_model(model, trunc)
    if (layout.n_atoms, layout.max_photons) != (model.n_atoms, trunc.max_photons):
        raise ValueError("layout inconsistent with model/truncation")
    h = PauliTermSum()
    for i, wq in enumerate(model.atom_freqs):
        h = h + (0.5 * wq) * PauliTermSum.single(layout.atom_qubit(i), "Z")
    for k, wk in enumerate(model.mode_freqs):
        h = h + wk * encode_number(k, layout)
    g = model.coupling_matrix
    for k in range(model.n_modes):
        a = encode_annihilation(k, layout)
        quad = a + a.adjoint()
        for i in range(model.n_atoms):
            if g[i, k] == 0.0:
                continue
            h = h + g[i, k] * (PauliTermSum.single(layout.atom_qubit(i), "X") * quad)
    return h.canonicalize()


def encode_state(fock_occupations, atom_bits, layout: QubitLayout) -> int:
    """Basis-state index of the one-hot encoding of a Fock product state.

    ``atom_bits`` are physical excitation bits (1 = |e>); the returned index
    uses the qubit convention |g> -> |1> described in the module docstring.
    """
    occ = list(fock_occupations)
    bits = list(atom_bits)
    if len(occ) != layout.n_modes or len(bits) != layout.n_atoms:
        raise ValueError("occupations / atom_bits length mismatch")
    index = 0
    for i, b in enumerate(bits):
        if b not in (0, 1):
            raise ValueError("atom bits must be 0 or 1")
        if b == 0:  # |g> encodes as qubit |1>
            index |= 1 << layout.atom_qubit(i)
    for k, n in enumerate(occ):
        reg = list(layout.mode_register(k))
        if not 0 <= n < len(reg):
            raise ValueError(f"occupation {n} out of range for mode {k}")
        index |= 1 << reg[n]
    return index


class SesProjector:
    """Predicate for the single-excitation subspace of every mode register."""

    def __init__(self, layout: QubitLayout):
        self.layout = layout
        self._register_masks = [sum(1 << q for q in layout.mode_register(k))
                                for k in range(layout.n_modes)]

    def contains(self, index: int) -> bool:
        """True iff each mode register holds exactly one excitation."""
        return all((index & m).bit_count() == 1 for m in self._register_masks)

    def mask(self, indices: np.ndarray) -> np.ndarray:
        """Vectorized ``contains`` over an index array."""
        ok = np.ones(len(indices), dtype=bool)
        idx = np.asarray(indices)
        for m in self._register_masks:
            ok &= np.bitwise_count(idx & m) == 1
        return ok

    def bitstring_ok(self, bits: str) -> bool:
        """SES check on a bitstring written with qubit 0 leftmost."""
        for k in range(self.layout.n_modes):
            reg = self.layout.mode_register(k)
            if sum(bits[q] == "1" for q in reg) != 1:
                return False
        return True

    def indices(self) -> np.ndarray:
        """Qubit-space indices of all SES basis states, ordered like FockBasis."""
        basis = FockBasis(self.layout.n_atoms, self.layout.max_photons)
        out = np.empty(basis.dim, dtype=np.int64)
        pos = 0
        for a in range(basis.atom_dim):
            bits = [(a >> i) & 1 for i in range(basis.n_atoms)]
            for f in range(basis.mode_dim):
                occ, rem = [], f
                for k in range(basis.n_modes):
                    occ.append(rem % basis.mode_dims[k])
                    rem //= basis.mode_dims[k]
                out[pos] = encode_state(occ, bits, self.layout)
                pos += 1
        return out


def ses_projector(layout: QubitLayout) -> SesProjector:
    return SesProjector(layout)


def restrict_to_ses(obs: PauliTermSum | np.ndarray, layout: QubitLayout) -> np.ndarray:
    """Dense matrix of an encoded operator restricted to the SES subspace,
    ordered to match the FockBasis index convention (directly comparable to
    the truncated-Fock reference operators)."""
    idx = ses_projector(layout).indices()
    if isinstance(obs, PauliTermSum):
        obs = obs.to_matrix(layout.total_qubits)
    return obs[np.ix_(idx, idx)]
