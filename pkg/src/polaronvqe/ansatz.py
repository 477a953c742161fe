"""Trotterized polaron variational circuits.

The circuit implements, per atom i, mode k and Trotter step s, the pair of
blocks exp((f/d) sx_i Xe_k) exp((f/d) sx_i Xo_k), where Xe/Xo collect the
even-site and odd-site bonds of the encoded anti-Hermitian quadrature
(a_k - a_k^dag).  Each bond (n, n+1) factorizes into one controlled bond
rotation of angle f * sqrt(n+1) / d.  Bonds inside one block act on disjoint
qubit pairs, so each block factorizes exactly.

For several atoms the per-step blocks are alternated over the atom index,
and the circuit is prefixed by a short entangling layer on the atom qubits
(Ry on each atom, a chain of controlled-phase entanglers, Ry again), which
turns the initial product vacuum into an entangled atom state.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import engine
from .encoding import QubitLayout
from .engine import GateOp, StateVector, cz_excited_gate, ry_gate
from .model import DickeModel, FockTruncation


@dataclass(frozen=True)
class AnsatzSpec:
    """Variational-form settings for one model + truncation.

    ``trotter_depths`` may be an int (uniform) or an N x M array d_ik.
    ``per_photon_parameters`` gives every bond of a block its own parameter.
    ``atom_layer`` defaults to on for more than one atom (where it is
    required) and off for a single atom.
    """

    model: DickeModel
    trunc: FockTruncation
    trotter_depths: object = 1
    per_photon_parameters: bool = False
    atom_layer: bool | None = None

    def __post_init__(self):
        d = np.asarray(self.trotter_depths, dtype=int)
        if d.ndim == 0:
            d = np.full((self.model.n_atoms, self.model.n_modes), int(d))
        if d.shape != (self.model.n_atoms, self.model.n_modes):
            raise ValueError("trotter_depths must be scalar or N x M")
        if np.any(d < 1):
            raise ValueError("trotter depths must be >= 1")
        object.__setattr__(self, "trotter_depths", tuple(tuple(int(x) for x in row)
                                                         for row in d))
        layer = self.atom_layer
        if layer is None:
            layer = self.model.n_atoms > 1
        if self.model.n_atoms > 1 and not layer:
            raise ValueError("the atom entangling layer is required for n_atoms > 1")
        object.__setattr__(self, "atom_layer", bool(layer))

    @property
    def depth_matrix(self) -> np.ndarray:
        return np.asarray(self.trotter_depths, dtype=int)

    def layout(self) -> QubitLayout:
        return QubitLayout.for_model(self.model, self.trunc)


@dataclass(frozen=True)
class ParamSlot:
    name: str
    kind: str                      # 'atom_ry' or 'bond'
    detail: tuple = ()


@dataclass
class AnsatzCircuit:
    """Gate template plus the slot table mapping parameters to gate angles.

    ``template`` entries are either ('fixed', GateOp), ('ry', slot, qubit) or
    ('cbond', slot, (control, lo, hi), weight) where weight folds in the
    bond factor sqrt(n+1) and the 1/d Trotter scaling.
    """

    spec: AnsatzSpec
    layout: QubitLayout
    slots: list[ParamSlot]
    template: list[tuple]
    prep_gates: list[GateOp]
    initial_label: str             # 'vac' or 'vac_prime'
    n_polaron_params: int

    @property
    def n_params(self) -> int:
        return len(self.slots)

    @property
    def n_qubits(self) -> int:
        return self.layout.total_qubits

    @property
    def controlled_gate_count(self) -> int:
        return sum(1 for entry in self.template if entry[0] == "cbond")

    def bind(self, theta, include_prep: bool = True) -> list[GateOp]:
        """Executable gate program (vacuum preparation gates included by
        default; they matter under noise)."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {theta.shape}")
        gates = list(self.prep_gates) if include_prep else []
        for entry in self.template:
            if entry[0] == "fixed":
                gates.append(entry[1])
            elif entry[0] == "ry":
                _, slot, qubit = entry
                gates.append(ry_gate(theta[slot], qubit))
            else:
                _, slot, qubits, weight = entry
                gates.append(GateOp("cbond_rot", qubits, angle=theta[slot] * weight))
        return gates

    def prepare(self, theta) -> StateVector:
        # starting from the vacuum basis state is exactly the X-preparation
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {theta.shape}")
        state = StateVector(self.n_qubits, basis_index=self.layout.vacuum_index())
        n = state.n_qubits
        for entry in self.template:
            if entry[0] == "cbond":
                _, slot, qubits, weight = entry
                engine.apply_cbond_rot(state.amps, n, *qubits,
                                       theta[slot] * weight)
            elif entry[0] == "ry":
                _, slot, qubit = entry
                engine.apply_gate(state, ry_gate(theta[slot], qubit))
            else:
                engine.apply_gate(state, entry[1])
        return state


def build_atom_layer(n_atoms: int, layout: QubitLayout,
                     slot_offset: int = 0) -> tuple[list[tuple], list[ParamSlot]]:
    """Ry / entangler-chain / Ry layer on the atom qubits (2 N parameters).

    The entangler phases the doubly-excited component of neighboring atoms,
    so with all angles zero the layer leaves |g...g> exactly unchanged.
    """
    if n_atoms < 2:
        raise ValueError("atom layer needs at least two atoms")
    template: list[tuple] = []
    slots: list[ParamSlot] = []
    for i in range(n_atoms):
        slots.append(ParamSlot(f"ry_a[{i}]", "atom_ry", (0, i)))
        template.append(("ry", slot_offset + i, layout.atom_qubit(i)))
    for i in range(n_atoms - 1):
        template.append(("fixed", cz_excited_gate(layout.atom_qubit(i),
                                                  layout.atom_qubit(i + 1))))
    for i in range(n_atoms):
        slots.append(ParamSlot(f"ry_b[{i}]", "atom_ry", (1, i)))
        template.append(("ry", slot_offset + n_atoms + i, layout.atom_qubit(i)))
    return template, slots


def build_ansatz(spec: AnsatzSpec) -> AnsatzCircuit:
    layout = spec.layout()
    model, trunc = spec.model, spec.trunc
    depths = spec.depth_matrix

    prep = [engine.x_gate(layout.atom_qubit(i)) for i in range(model.n_atoms)]
    prep += [engine.x_gate(layout.mode_register(k)[0]) for k in range(model.n_modes)]

    template: list[tuple] = []
    slots: list[ParamSlot] = []
    if spec.atom_layer:
        template, slots = build_atom_layer(model.n_atoms, layout)

    # slot table for the polaron parameters, ordered by (i, k, s[, n])
    bond_slot: dict[tuple, int] = {}
    for i in range(model.n_atoms):
        for k in range(model.n_modes):
            for s in range(depths[i, k]):
                if spec.per_photon_parameters:
                    for n in range(trunc.max_photons[k]):
                        bond_slot[(i, k, s, n)] = len(slots)
                        slots.append(ParamSlot(f"f[i={i},k={k},s={s + 1},n={n}]",
                                               "bond", (i, k, s, n)))
                else:
                    bond_slot[(i, k, s)] = len(slots)
                    slots.append(ParamSlot(f"f[i={i},k={k},s={s + 1}]",
                                           "bond", (i, k, s)))
    n_polaron = len([sl for sl in slots if sl.kind == "bond"])

    # emission: steps outermost, atoms alternated, modes in parallel layers
    max_depth = int(depths.max())
    for s in range(max_depth):
        for i in range(model.n_atoms):
            control = layout.atom_qubit(i)
            for k in range(model.n_modes):
                d = depths[i, k]
                if s >= d:
                    continue
                reg = list(layout.mode_register(k))
                n_max = trunc.max_photons[k]
                for parity in (0, 1):  # even bonds then odd bonds
                    for n in range(parity, n_max, 2):
                        key = (i, k, s, n) if spec.per_photon_parameters else (i, k, s)
                        weight = math.sqrt(n + 1) / d
                        template.append(("cbond", bond_slot[key],
                                         (control, reg[n], reg[n + 1]), weight))

    return AnsatzCircuit(
        spec=spec,
        layout=layout,
        slots=slots,
        template=template,
        prep_gates=prep,
        initial_label="vac_prime" if spec.atom_layer else "vac",
        n_polaron_params=n_polaron,
    )


def bind_parameters(circuit: AnsatzCircuit, theta) -> list[GateOp]:
    return circuit.bind(theta)


_GHZ_LAYER_CACHE: dict[int, np.ndarray] = {}


def ghz_atom_layer_params(n_atoms: int) -> np.ndarray:
    """Atom-layer angles preparing (|g...g> + |e...e>)/sqrt(2) (numerically
    solved once per atom count and cached).

    Useful as an entangled-sector starting point: at strong coupling the
    groundstate carries large doubly-excited atom components which the
    product vacuum start cannot seed.
    """
    cached = _GHZ_LAYER_CACHE.get(n_atoms)
    if cached is not None:
        return cached.copy()
    from scipy.optimize import minimize as _minimize

    model = DickeModel.resonant(n_atoms=n_atoms, g=0.0)
    trunc = FockTruncation.uniform(1, 1)
    spec = AnsatzSpec(model=model, trunc=trunc, trotter_depths=1)
    circuit = build_ansatz(spec)
    from .encoding import encode_state
    target = np.zeros(2 ** circuit.n_qubits, dtype=complex)
    target[encode_state([0], [0] * n_atoms, circuit.layout)] = 1 / math.sqrt(2)
    target[encode_state([0], [1] * n_atoms, circuit.layout)] = 1 / math.sqrt(2)

    def infidelity(angles):
        theta = np.zeros(circuit.n_params)
        theta[:2 * n_atoms] = angles
        state = circuit.prepare(theta)
        return 1.0 - abs(np.vdot(target, state.amps)) ** 2

    best = None
    for start in (np.full(2 * n_atoms, 0.6), np.full(2 * n_atoms, -0.9),
                  np.linspace(0.3, 1.4, 2 * n_atoms)):
        res = _minimize(infidelity, start, method="Nelder-Mead",
                        options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 6000})
        if best is None or res.fun < best.fun:
            best = res
    _GHZ_LAYER_CACHE[n_atoms] = np.asarray(best.x, dtype=float)
    return _GHZ_LAYER_CACHE[n_atoms].copy()


def polaron_frequency_shift(model: DickeModel, atom: int = 0, *,
                            damping: float = 0.5, tol: float = 1e-10,
                            max_iter: int = 500) -> tuple[float, np.ndarray]:
    """Self-consistent renormalized atom frequency and displacement amplitudes.

    Solves w' = w_q exp(-2 sum_k f_k^2) with f_k = g_k / (w_k + w'), by a
    damped fixed-point iteration.  Falls back to w' = w_q (one bare step)
    with a warning if the iteration does not converge.
    """
    wq = model.atom_freqs[atom]
    wk = np.asarray(model.mode_freqs)
    g = model.coupling_matrix[atom]
    w = wq
    for _ in range(max_iter):
        f = g / (wk + w)
        w_new = wq * math.exp(-2.0 * float(np.sum(f ** 2)))
        if abs(w_new - w) < tol:
            f = g / (wk + w_new)
            return float(w_new), f
        w = damping * w + (1 - damping) * w_new
    warnings.warn("polaron frequency fixed point did not converge; "
                  "falling back to the bare atom frequency")
    return float(wq), g / (wk + wq)


def polaron_displacement_params(model: DickeModel, trunc: FockTruncation,
                                spec: AnsatzSpec | None = None, *,
                                self_consistent: bool = True) -> np.ndarray:
    """Warm-start parameter vector: every Trotter step of pair (i, k) takes
    f_ik = g_ik / (w_k + w'_qi), atom-layer angles start at zero.

    For several atoms the shift is computed per atom with the other atoms
    ignored (heuristic).  ``self_consistent=False`` uses w' = w_q directly.
    """
    if spec is None:
        spec = AnsatzSpec(model=model, trunc=trunc)
    f_rows = []
    for i in range(model.n_atoms):
        if self_consistent:
            _, f = polaron_frequency_shift(model, i)
        else:
            f = model.coupling_matrix[i] / (np.asarray(model.mode_freqs)
                                            + model.atom_freqs[i])
        f_rows.append(f)
    theta = np.zeros(_count_params(spec))
    offset = 2 * model.n_atoms if spec.atom_layer else 0
    depths = spec.depth_matrix
    pos = offset
    for i in range(model.n_atoms):
        for k in range(model.n_modes):
            for _s in range(depths[i, k]):
                if spec.per_photon_parameters:
                    for _n in range(trunc.max_photons[k]):
                        theta[pos] = f_rows[i][k]
                        pos += 1
                else:
                    theta[pos] = f_rows[i][k]
                    pos += 1
    assert pos == len(theta)
    return theta


def _count_params(spec: AnsatzSpec) -> int:
    depths = spec.depth_matrix
    if spec.per_photon_parameters:
        n = sum(int(depths[i, k]) * spec.trunc.max_photons[k]
                for i in range(spec.model.n_atoms)
                for k in range(spec.model.n_modes))
    else:
        n = int(depths.sum())
    if spec.atom_layer:
        n += 2 * spec.model.n_atoms
    return n


def pad_parameters(theta_from, spec_from: AnsatzSpec, spec_to: AnsatzSpec) -> np.ndarray:
    """Embed a solution of a shallower circuit into a deeper one.

    Step s of pair (i, k) at depth d reproduces the same gate angles at depth
    d' >= d when rescaled by d'/d, with the extra steps set to zero; the
    deeper family therefore contains every shallower state exactly.
    """
    theta_from = np.asarray(theta_from, dtype=float)
    if spec_from.per_photon_parameters != spec_to.per_photon_parameters:
        raise ValueError("cannot pad across the per-photon-parameter flag")
    if spec_from.atom_layer != spec_to.atom_layer:
        raise ValueError("cannot pad across the atom-layer flag")
    out = np.zeros(_count_params(spec_to))
    n_atom = 2 * spec_from.model.n_atoms if spec_from.atom_layer else 0
    out[:n_atom] = theta_from[:n_atom]
    d_from, d_to = spec_from.depth_matrix, spec_to.depth_matrix
    if np.any(d_to < d_from):
        raise ValueError("target depths must be >= source depths")

    def slot_iter(spec, depths):
        pos = n_atom
        for i in range(spec.model.n_atoms):
            for k in range(spec.model.n_modes):
                for s in range(depths[i, k]):
                    if spec.per_photon_parameters:
                        for n in range(spec.trunc.max_photons[k]):
                            yield (i, k, s, n), pos
                            pos += 1
                    else:
                        yield (i, k, s), pos
                        pos += 1

    src = {key: theta_from[pos] for key, pos in slot_iter(spec_from, d_from)}
    for key, pos in slot_iter(spec_to, d_to):
        i, k, s = key[0], key[1], key[2]
        if s < d_from[i, k]:
            skey = key
            out[pos] = src[skey] * (d_to[i, k] / d_from[i, k])
    return out
