"""Statevector and density-matrix execution of gate programs.

Amplitude indexing is little endian: qubit q is bit q of the basis index.
Bitstrings are rendered with qubit 0 leftmost.  Explicit gate matrices use
the convention that bit j of the matrix row/column index corresponds to
``qubits[j]`` (so ``qubits[0]`` is the least-significant bit of the gate's
local index).

Bond gates act on the two register slots (lo, hi) = (slot n, slot n+1) of a
one-hot mode register; on the bond subspace {|10>, |01>} they implement

* ``bond_rot(phi)``    = exp(phi (L^dag - L)),  L = |10><01|
                         (|10> -> cos |10> + sin |01>, the real part of an
                         encoded displacement),
* ``bond_phase(phi)``   = exp(i phi (L + L^dag)) (imaginary part),
* ``cbond_rot(theta)``  = exp(theta sx_c (L - L^dag)): in the control-qubit
                          X basis the bond subspace undergoes a Givens
                          rotation whose sign follows the control X
                          eigenvalue.  In the computational basis the
                          amplitude pairs {(c=0,|01>),(c=1,|10>)} and
                          {(c=0,|10>),(c=1,|01>)} each rotate by a real
                          2x2 rotation.

All three conserve the excitation number of the register.  Bond weights
(sqrt(n+1)) are folded into the angles by the circuit builders.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .encoding import PauliTermSum, QubitLayout, SesProjector
from .errors import EstimationError, NumericalError, ResourceLimitError

DM_QUBIT_CAP = 8


# ---------------------------------------------------------------------------
# gates

@dataclass(frozen=True)
class GateOp:
    """One gate: kind in {'unitary', 'bond_rot', 'bond_phase', 'cbond_rot'}.

    'unitary' carries an explicit matrix on up to 3 qubits; the bond kinds
    carry an angle.  cbond_rot qubits are (control, slot_lo, slot_hi).
    """

    kind: str
    qubits: tuple[int, ...]
    angle: float | None = None
    matrix: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        q = tuple(int(x) for x in self.qubits)
        object.__setattr__(self, "qubits", q)
        if len(set(q)) != len(q):
            raise ValueError("gate qubits must be distinct")
        if self.kind == "unitary":
            m = np.asarray(self.matrix, dtype=complex)
            k = len(q)
            if k > 3 or m.shape != (2 ** k, 2 ** k):
                raise ValueError("unitary gates support at most 3 qubits")
            if np.max(np.abs(m @ m.conj().T - np.eye(2 ** k))) > 1e-12:
                raise ValueError("matrix is not unitary to 1e-12")
            object.__setattr__(self, "matrix", m)
        elif self.kind in ("bond_rot", "bond_phase"):
            if len(q) != 2:
                raise ValueError(f"{self.kind} acts on 2 qubits")
        elif self.kind == "cbond_rot":
            if len(q) != 3:
                raise ValueError("cbond_rot acts on (control, lo, hi)")
        else:
            raise ValueError(f"unknown gate kind {self.kind!r}")

    def inverse(self) -> "GateOp":
        if self.kind == "unitary":
            return GateOp("unitary", self.qubits, matrix=self.matrix.conj().T)
        return GateOp(self.kind, self.qubits, angle=-self.angle)


def unitary_gate(matrix, qubits) -> GateOp:
    return GateOp("unitary", tuple(qubits), matrix=np.asarray(matrix, dtype=complex))


def x_gate(q: int) -> GateOp:
    return unitary_gate([[0, 1], [1, 0]], (q,))


def ry_gate(theta: float, q: int) -> GateOp:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return unitary_gate([[c, -s], [s, c]], (q,))


def h_gate(q: int) -> GateOp:
    return unitary_gate(np.array([[1, 1], [1, -1]]) / np.sqrt(2), (q,))


def basis_change_gate(label: str, q: int) -> GateOp | None:
    """Rotation mapping the X/Y eigenbasis to the computational basis."""
    if label in ("I", "Z"):
        return None
    if label == "X":
        return h_gate(q)
    if label == "Y":
        # H S^dag maps |+i>, |-i> to |0>, |1>
        return unitary_gate(np.array([[1, -1j], [1, 1j]]) / np.sqrt(2), (q,))
    raise ValueError(f"unknown Pauli label {label!r}")


def cz_excited_gate(q1: int, q2: int) -> GateOp:
    """Controlled phase on the doubly-excited atom component |ee> = |00>."""
    return unitary_gate(np.diag([-1.0, 1.0, 1.0, 1.0]), (q1, q2))


# ---------------------------------------------------------------------------
# statevector

class StateVector:
    """2^n complex amplitudes; owned by one execution context at a time."""

    __slots__ = ("n_qubits", "amps")

    def __init__(self, n_qubits: int, amps: np.ndarray | None = None,
                 basis_index: int = 0):
        self.n_qubits = int(n_qubits)
        if amps is None:
            amps = np.zeros(2 ** self.n_qubits, dtype=complex)
            amps[basis_index] = 1.0
        else:
            amps = np.asarray(amps, dtype=complex)
            if amps.shape != (2 ** self.n_qubits,):
                raise ValueError("amplitude array has wrong length")
        self.amps = amps

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amps.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amps) ** 2

    def fidelity(self, other: "StateVector") -> float:
        return float(abs(np.vdot(self.amps, other.amps)) ** 2)


def _apply_matrix(amps: np.ndarray, mat: np.ndarray, targets: tuple[int, ...],
                  n: int) -> np.ndarray:
    k = len(targets)
    src = [n - 1 - q for q in reversed(targets)]
    t = np.moveaxis(amps.reshape([2] * n), src, range(k))
    shape = t.shape
    out = (mat @ t.reshape(2 ** k, -1)).reshape(shape)
    out = np.moveaxis(out, range(k), src)
    return np.ascontiguousarray(out).reshape(-1)


_BOND_CACHE: dict[tuple, tuple] = {}


def _bond_indices(n: int, lo: int, hi: int) -> np.ndarray:
    key = (n, lo, hi)
    hit = _BOND_CACHE.get(key)
    if hit is None:
        idx = np.arange(2 ** n)
        base = idx[(idx & ((1 << lo) | (1 << hi))) == 0]
        hit = np.stack([base | (1 << lo), base | (1 << hi)])  # |10>, |01>
        _BOND_CACHE[key] = hit
    return hit


def _cbond_indices(n: int, c: int, lo: int, hi: int) -> np.ndarray:
    key = (n, c, lo, hi)
    hit = _BOND_CACHE.get(key)
    if hit is None:
        idx = np.arange(2 ** n)
        base = idx[(idx & ((1 << c) | (1 << lo) | (1 << hi))) == 0]
        hit = np.stack([base | (1 << hi),              # (c=0, |01>)
                        base | (1 << c) | (1 << lo),   # (c=1, |10>)
                        base | (1 << lo),              # (c=0, |10>)
                        base | (1 << c) | (1 << hi)])  # (c=1, |01>)
        _BOND_CACHE[key] = hit
    return hit


def apply_bond_rot(amps: np.ndarray, n: int, lo: int, hi: int, angle: float) -> None:
    idx = _bond_indices(n, lo, hi)
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    amps[idx] = rot @ amps[idx]


def apply_bond_phase(amps: np.ndarray, n: int, lo: int, hi: int, angle: float) -> None:
    idx = _bond_indices(n, lo, hi)
    c, s = np.cos(angle), 1j * np.sin(angle)
    rot = np.array([[c, s], [s, c]])
    amps[idx] = rot @ amps[idx]


def apply_cbond_rot(amps: np.ndarray, n: int, cq: int, lo: int, hi: int,
                    angle: float) -> None:
    idx = _cbond_indices(n, cq, lo, hi)
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -s, 0, 0], [s, c, 0, 0],
                    [0, 0, c, s], [0, 0, -s, c]])
    amps[idx] = rot @ amps[idx]


def apply_gate(state: StateVector, gate: GateOp) -> StateVector:
    """In-place gate application; returns the same StateVector."""
    n = state.n_qubits
    if any(q >= n for q in gate.qubits):
        raise IndexError("gate qubit out of range")
    if gate.kind == "unitary":
        state.amps = _apply_matrix(state.amps, gate.matrix, gate.qubits, n)
    elif gate.kind == "bond_rot":
        apply_bond_rot(state.amps, n, *gate.qubits, gate.angle)
    elif gate.kind == "bond_phase":
        apply_bond_phase(state.amps, n, *gate.qubits, gate.angle)
    elif gate.kind == "cbond_rot":
        apply_cbond_rot(state.amps, n, *gate.qubits, gate.angle)
    else:  # pragma: no cover - kinds validated at construction
        raise ValueError(gate.kind)
    return state


def apply_circuit(state: StateVector, gates) -> StateVector:
    for g in gates:
        apply_gate(state, g)
    return state


def prepare(n_qubits: int, basis_index: int = 0) -> StateVector:
    return StateVector(n_qubits, basis_index=basis_index)


# ---------------------------------------------------------------------------
# Pauli expectation values

class PauliPlan:
    """Precomputed sparse matrix for fast repeated expectation values.

    A weight-w Pauli string has one nonzero per column, so the stacked
    observable is a CSR matrix with n_terms nonzeros per column.
    """

    def __init__(self, obs: PauliTermSum, n_qubits: int):
        from scipy.sparse import coo_matrix

        obs = obs.canonicalize()
        if not obs.is_hermitian():
            raise ValueError("observable must be Hermitian (real coefficients)")
        self.n_qubits = n_qubits
        dim = 2 ** n_qubits
        idx = np.arange(dim)
        self.const = 0.0
        self.rows = []
        rows, cols, data = [], [], []
        for key, c in obs.terms:
            if not key:
                self.const += c.real
                continue
            if any(q >= n_qubits for q, _ in key):
                raise IndexError("observable qubit out of range")
            mask_xy = sum(1 << q for q, p in key if p in ("X", "Y"))
            mask_yz = sum(1 << q for q, p in key if p in ("Y", "Z"))
            n_y = sum(1 for _, p in key if p == "Y")
            phase = (1j) ** n_y * (-1.0) ** np.bitwise_count(idx & mask_yz)
            self.rows.append((c.real, idx ^ mask_xy, phase))
            rows.append(idx ^ mask_xy)
            cols.append(idx)
            data.append(c.real * phase)
        if rows:
            self._matrix = coo_matrix(
                (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                shape=(dim, dim)).tocsr()
        else:
            self._matrix = None

    def expectation(self, state: StateVector) -> float:
        psi = state.amps
        total = self.const + 0.0j
        if self._matrix is not None:
            total += np.vdot(psi, self._matrix @ psi)
        assert abs(total.imag) < 1e-10
        return float(total.real)

    def expectation_dm(self, rho: np.ndarray) -> float:
        idx = np.arange(rho.shape[0])
        total = self.const + 0.0j
        for coeff, perm, phase in self.rows:
            total += coeff * np.sum(phase * rho[idx, perm])
        assert abs(total.imag) < 1e-8
        return float(total.real)


def expectation(state: StateVector, obs: PauliTermSum) -> float:
    """<psi|O|psi> for a Hermitian Pauli sum; exact to floating point."""
    return PauliPlan(obs, state.n_qubits).expectation(state)


# ---------------------------------------------------------------------------
# sampling

def bitstring(index: int, n_qubits: int) -> str:
    """Qubit 0 is the leftmost character."""
    return "".join("1" if (index >> q) & 1 else "0" for q in range(n_qubits))


def bitstring_index(bits: str) -> int:
    return sum(1 << q for q, b in enumerate(bits) if b == "1")


def sample_counts(state: StateVector, basis_gates, shots: int,
                  seed_or_rng) -> dict[str, int]:
    """Multinomial draw from the measurement distribution after optional
    basis-change gates; deterministic for a given seed."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    rng = np.random.default_rng(seed_or_rng) if not isinstance(
        seed_or_rng, np.random.Generator) else seed_or_rng
    work = state.copy()
    apply_circuit(work, basis_gates or [])
    p = work.probabilities()
    p = p / p.sum()
    counts = rng.multinomial(shots, p)
    n = state.n_qubits
    return {bitstring(i, n): int(c) for i, c in enumerate(counts) if c}


# ---------------------------------------------------------------------------
# noise and density matrices

@dataclass(frozen=True)
class NoiseModel:
    """Per-qubit error probabilities, all multiplied by ``scale``.

    depolarizing / amp_damping apply to every qubit touched by a gate, after
    the gate (depolarizing first, then amplitude damping; the order is fixed
    so results are reproducible).  Readout flips are applied at sampling
    time: p01 = p(read 1 | prepared 0), p10 = p(read 0 | prepared 1).
    """

    depolarizing: float = 0.0
    amp_damping: float = 0.0
    readout_p01: float = 0.0
    readout_p10: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.scale < 0:
            raise ValueError("scale must be >= 0")

    def scaled(self, name: str) -> float:
        p = getattr(self, name) * self.scale
        if p > 1.0:
            warnings.warn(f"{name} probability clamped to 1 (was {p:.3g})")
            p = 1.0
        return p

    def with_scale(self, scale: float) -> "NoiseModel":
        return NoiseModel(self.depolarizing, self.amp_damping,
                          self.readout_p01, self.readout_p10, scale)

    def readout_matrix(self) -> np.ndarray:
        """Single-qubit confusion matrix C[measured, prepared]."""
        p01, p10 = self.scaled("readout_p01"), self.scaled("readout_p10")
        return np.array([[1 - p01, p10], [p01, 1 - p10]])


def depolarizing_kraus(p: float) -> list[np.ndarray]:
    # p = 1 maps any state to the maximally mixed state.
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    y = np.array([[0, -1j], [1j, 0]], dtype=complex)
    z = np.array([[1, 0], [0, -1]], dtype=complex)
    return [np.sqrt(1 - 0.75 * p) * np.eye(2, dtype=complex),
            np.sqrt(p / 4) * x, np.sqrt(p / 4) * y, np.sqrt(p / 4) * z]


def amp_damping_kraus(p: float) -> list[np.ndarray]:
    k0 = np.array([[1, 0], [0, np.sqrt(1 - p)]], dtype=complex)
    k1 = np.array([[0, np.sqrt(p)], [0, 0]], dtype=complex)
    return [k0, k1]


class DensityMatrix:
    __slots__ = ("n_qubits", "rho")

    def __init__(self, n_qubits: int, rho: np.ndarray | None = None,
                 basis_index: int = 0):
        self.n_qubits = int(n_qubits)
        dim = 2 ** self.n_qubits
        if rho is None:
            rho = np.zeros((dim, dim), dtype=complex)
            rho[basis_index, basis_index] = 1.0
        else:
            rho = np.asarray(rho, dtype=complex)
            if rho.shape != (dim, dim):
                raise ValueError("density matrix has wrong shape")
        self.rho = rho

    def copy(self) -> "DensityMatrix":
        return DensityMatrix(self.n_qubits, self.rho.copy())

    def trace(self) -> float:
        return float(np.trace(self.rho).real)

    def probabilities(self) -> np.ndarray:
        return np.clip(np.diag(self.rho).real, 0.0, None)

    def fidelity_pure(self, state: StateVector) -> float:
        return float(np.vdot(state.amps, self.rho @ state.amps).real)


def _apply_rows(rho: np.ndarray, mat: np.ndarray, targets, n: int) -> np.ndarray:
    """mat (x) I applied to the ket index of rho (batched over columns)."""
    k = len(targets)
    src = [n - 1 - q for q in reversed(targets)]
    t = np.moveaxis(rho.reshape([2] * n + [rho.shape[1]]), src, range(k))
    shape = t.shape
    out = (mat @ t.reshape(2 ** k, -1)).reshape(shape)
    out = np.moveaxis(out, range(k), src)
    return np.ascontiguousarray(out).reshape(rho.shape)


def dm_unitary(dm: DensityMatrix, mat: np.ndarray, targets) -> None:
    """rho <- U rho U^dag in place."""
    n = dm.n_qubits
    half = _apply_rows(dm.rho, mat, targets, n)
    dm.rho = _apply_rows(half.conj().T, mat, targets, n).conj().T


def dm_kraus(dm: DensityMatrix, kraus: list[np.ndarray], targets) -> None:
    n = dm.n_qubits
    out = np.zeros_like(dm.rho)
    for k in kraus:
        half = _apply_rows(dm.rho, k, targets, n)
        out += _apply_rows(half.conj().T, k, targets, n).conj().T
    dm.rho = out


def _gate_matrix(gate: GateOp) -> np.ndarray:
    if gate.kind == "unitary":
        return gate.matrix
    th = gate.angle
    c, s = np.cos(th), np.sin(th)
    if gate.kind == "bond_rot":
        m = np.eye(4, dtype=complex)
        # local index bits: qubits[0]=lo is bit0 -> |10> = 1, |01> = 2
        m[1, 1], m[1, 2], m[2, 1], m[2, 2] = c, -s, s, c
        return m
    if gate.kind == "bond_phase":
        m = np.eye(4, dtype=complex)
        m[1, 1], m[1, 2], m[2, 1], m[2, 2] = c, 1j * s, 1j * s, c
        return m
    # cbond_rot: qubits (control, lo, hi) -> control bit0, lo bit1, hi bit2
    m = np.eye(8, dtype=complex)
    i001, i110, i010, i101 = 4, 3, 2, 5  # (c,lo,hi) bit patterns
    m[i001, i001], m[i001, i110] = c, -s
    m[i110, i001], m[i110, i110] = s, c
    m[i010, i010], m[i010, i101] = c, s
    m[i101, i010], m[i101, i101] = -s, c
    return m


def run_noisy(gates, noise: NoiseModel, n_qubits: int, *,
              initial_index: int = 0, qubit_cap: int = DM_QUBIT_CAP) -> DensityMatrix:
    """Density-matrix simulation: each gate as a unitary channel followed by
    scaled depolarizing then amplitude-damping on the touched qubits."""
    if n_qubits > qubit_cap:
        raise ResourceLimitError(
            f"density-matrix simulation capped at {qubit_cap} qubits "
            f"(requested {n_qubits}); use trajectory mode instead")
    dm = DensityMatrix(n_qubits, basis_index=initial_index)
    p_dep = noise.scaled("depolarizing")
    p_amp = noise.scaled("amp_damping")
    dep = depolarizing_kraus(p_dep) if p_dep > 0 else None
    amp = amp_damping_kraus(p_amp) if p_amp > 0 else None
    for g in gates:
        dm_unitary(dm, _gate_matrix(g), g.qubits)
        for q in g.qubits:
            if dep is not None:
                dm_kraus(dm, dep, (q,))
            if amp is not None:
                dm_kraus(dm, amp, (q,))
    assert abs(dm.trace() - 1.0) < 1e-10
    return dm


def sample_trajectory(gates, noise: NoiseModel, n_qubits: int,
                      rng: np.random.Generator, *, initial_index: int = 0) -> StateVector:
    """One stochastic unraveling of run_noisy (pure-state trajectory)."""
    state = StateVector(n_qubits, basis_index=initial_index)
    p_dep = noise.scaled("depolarizing")
    p_amp = noise.scaled("amp_damping")
    dep = depolarizing_kraus(p_dep) if p_dep > 0 else None
    amp = amp_damping_kraus(p_amp) if p_amp > 0 else None
    for g in gates:
        apply_gate(state, g)
        for q in g.qubits:
            for kraus in (dep, amp):
                if kraus is None:
                    continue
                branches = [_apply_matrix(state.amps, k, (q,), n_qubits) for k in kraus]
                weights = np.array([np.linalg.norm(b) ** 2 for b in branches])
                pick = rng.choice(len(branches), p=weights / weights.sum())
                state.amps = branches[pick] / np.linalg.norm(branches[pick])
    return state


# ---------------------------------------------------------------------------
# readout errors

def _per_qubit_confusions(noise_or_mats, n_qubits: int) -> list[np.ndarray]:
    if isinstance(noise_or_mats, NoiseModel):
        return [noise_or_mats.readout_matrix()] * n_qubits
    mats = [np.asarray(m, dtype=float) for m in noise_or_mats]
    if len(mats) != n_qubits:
        raise ValueError("need one confusion matrix per qubit")
    return mats


def _confusion_tensor_apply(vec: np.ndarray, mats: list[np.ndarray]) -> np.ndarray:
    n = len(mats)
    t = vec.reshape([2] * n)
    for q, m in enumerate(mats):
        axis = n - 1 - q
        t = np.moveaxis(np.tensordot(m, t, axes=([1], [axis])), 0, axis)
    return t.reshape(-1)


def apply_readout_error(probs: np.ndarray, noise_or_mats, n_qubits: int) -> np.ndarray:
    """Corrupt an outcome distribution with the tensor-product confusion map."""
    return _confusion_tensor_apply(np.asarray(probs, dtype=float),
                                   _per_qubit_confusions(noise_or_mats, n_qubits))


def mitigate_readout(probs: np.ndarray, noise_or_mats, n_qubits: int) -> np.ndarray:
    """Least-squares readout mitigation constrained to the probability simplex.

    The tensored inverse is exact when it already lands on the simplex; else
    a constrained solve (SLSQP) is run from the clipped inverse.
    """
    mats = _per_qubit_confusions(noise_or_mats, n_qubits)
    for m in mats:
        if m[1, 0] >= 0.5 or m[0, 1] >= 0.5 or abs(np.linalg.det(m)) < 1e-9:
            raise NumericalError("readout flip probabilities must stay below "
                                 "0.5 for an invertible confusion matrix")
    y = np.asarray(probs, dtype=float)
    total = y.sum()
    if total <= 0:
        raise EstimationError("empty distribution")
    y = y / total
    x0 = _confusion_tensor_apply(y, [np.linalg.inv(m) for m in mats])
    if x0.min() >= -1e-10:
        x0 = np.clip(x0, 0.0, None)
        return total * x0 / x0.sum()
    dim = len(y)
    if dim > 1024:
        raise ResourceLimitError("constrained mitigation capped at 10 qubits")
    start = np.clip(x0, 0.0, None)
    start = start / start.sum()

    def objective(x):
        r = _confusion_tensor_apply(x, mats) - y
        return float(r @ r)

    res = minimize(objective, start, method="SLSQP",
                   bounds=[(0.0, 1.0)] * dim,
                   constraints=[{"type": "eq", "fun": lambda x: x.sum() - 1.0}],
                   options={"maxiter": 200, "ftol": 1e-14})
    if not res.success:
        raise NumericalError(f"readout mitigation failed: {res.message}")
    x = np.clip(res.x, 0.0, None)
    return total * x / x.sum()


def counts_to_probs(counts: dict[str, int], n_qubits: int) -> np.ndarray:
    vec = np.zeros(2 ** n_qubits)
    for bits, c in counts.items():
        vec[bitstring_index(bits)] = c
    return vec / vec.sum()


def probs_to_counts(probs: np.ndarray, n_qubits: int) -> dict[str, float]:
    return {bitstring(i, n_qubits): float(p) for i, p in enumerate(probs) if p != 0.0}


# ---------------------------------------------------------------------------
# state dump

def dump_state(state: StateVector, path) -> None:
    """Binary dump: one text header line 'qubits=<n>' then little-endian
    float64 (re, im) pairs."""
    with open(path, "wb") as fh:
        fh.write(f"qubits={state.n_qubits}\n".encode("ascii"))
        inter = np.empty(2 * len(state.amps), dtype="<f8")
        inter[0::2] = state.amps.real
        inter[1::2] = state.amps.imag
        fh.write(inter.tobytes())


def load_state(path) -> StateVector:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").strip()
        if not header.startswith("qubits="):
            raise ValueError("bad state-dump header")
        n = int(header.split("=", 1)[1])
        raw = np.frombuffer(fh.read(), dtype="<f8")
    return StateVector(n, raw[0::2] + 1j * raw[1::2])
