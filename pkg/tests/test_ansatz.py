"""Polaron variational circuits: structure, parameters, warm starts."""

import math

import numpy as np
import pytest
from scipy.linalg import expm
from scipy.optimize import minimize

from polaronvqe import engine
from polaronvqe.ansatz import (AnsatzSpec, build_ansatz, build_atom_layer,
                               pad_parameters, polaron_displacement_params,
                               polaron_frequency_shift)
from polaronvqe.encoding import QubitLayout, encode_state, ses_projector
from polaronvqe.engine import StateVector
from polaronvqe.model import (DickeModel, FockBasis, FockTruncation, SIGMA,
                              lowering_operator)


def make_spec(n_atoms=1, n_modes=1, n_max=3, d=1, g=0.5, **kw):
    model = DickeModel.resonant(n_atoms=n_atoms, n_modes=n_modes, g=g)
    trunc = FockTruncation.uniform(n_modes, n_max)
    return AnsatzSpec(model=model, trunc=trunc, trotter_depths=d, **kw)


def test_minimal_circuit_counts():
    circ = build_ansatz(make_spec(n_max=1, d=1))
    assert circ.controlled_gate_count == 1
    assert circ.n_params == 1


def test_single_mode_counts():
    # n_max=3, d=3: 9 controlled bond gates, 3 variational parameters
    circ = build_ansatz(make_spec(n_max=3, d=3))
    assert circ.controlled_gate_count == 9
    assert circ.n_params == 3


def test_two_atom_two_mode_counts():
    # N=M=2, n_max=4, d=4: 64 controlled gates, 16 polaron parameters
    circ = build_ansatz(make_spec(n_atoms=2, n_modes=2, n_max=4, d=4))
    assert circ.controlled_gate_count == 2 * 2 * 4 * 4
    assert circ.n_polaron_params == 16
    assert circ.n_params == 16 + 4  # plus the Ry/entangler/Ry layer
    assert circ.n_qubits == 12
    assert circ.initial_label == "vac_prime"


def test_gate_count_formula_random_specs(rng):
    for _ in range(8):
        n_atoms = int(rng.integers(1, 3))
        n_modes = int(rng.integers(1, 3))
        n_max = [int(x) for x in rng.integers(1, 5, n_modes)]
        depths = rng.integers(1, 5, (n_atoms, n_modes))
        model = DickeModel.resonant(n_atoms=n_atoms, n_modes=n_modes, g=0.4)
        spec = AnsatzSpec(model=model, trunc=FockTruncation(tuple(n_max)),
                          trotter_depths=depths)
        circ = build_ansatz(spec)
        expected = sum(int(depths[i, k]) * n_max[k]
                       for i in range(n_atoms) for k in range(n_modes))
        assert circ.controlled_gate_count == expected
        assert circ.n_polaron_params == int(depths.sum())


def test_per_photon_parameter_count():
    spec = make_spec(n_max=3, d=2, per_photon_parameters=True)
    circ = build_ansatz(spec)
    assert circ.n_params == 2 * 3
    assert circ.controlled_gate_count == 6


def test_zero_parameters_prepare_exact_vacuum():
    for spec in (make_spec(n_max=2, d=2), make_spec(n_atoms=2, n_max=2, d=1)):
        circ = build_ansatz(spec)
        state = circ.prepare(np.zeros(circ.n_params))
        layout = circ.layout
        vac = np.zeros(2 ** circ.n_qubits, dtype=complex)
        vac[layout.vacuum_index()] = 1.0
        assert np.array_equal(state.amps, vac)


def test_bind_emits_prep_gates():
    circ = build_ansatz(make_spec(n_max=1, d=1))
    gates = circ.bind(np.zeros(1))
    xs = [g for g in gates if g.kind == "unitary"]
    # one X per atom plus one per register (slot 0)
    assert len(xs) == 2
    # running the full program from |0...0> matches prepare()
    sv = StateVector(circ.n_qubits)
    engine.apply_circuit(sv, gates)
    assert np.max(np.abs(sv.amps - circ.prepare(np.zeros(1)).amps)) == 0.0


def test_single_bond_matches_exponential_oracle():
    # n_max=1: the prepared state follows the closed-form rotation of the
    # (|g,0~>, |e,1~>) pair generated by sx (x) (a - a^dag)
    spec = make_spec(n_max=1, d=1)
    circ = build_ansatz(spec)
    layout = circ.layout
    basis = FockBasis(1, (1,))
    a = lowering_operator(2)
    gen = np.kron(SIGMA["x"], a - a.conj().T)   # atom (x) mode, atom leading
    for theta in (0.3, -0.8):
        state = circ.prepare([theta])
        fock_state = expm(theta * gen) @ np.eye(4)[0]
        embedded = np.zeros(2 ** circ.n_qubits, dtype=complex)
        for ab in (0, 1):
            for n in (0, 1):
                embedded[encode_state([n], [ab], layout)] = fock_state[basis.index([ab], [n])]
        assert np.max(np.abs(state.amps - embedded)) < 1e-12


def test_rebind_deterministic(rng):
    circ = build_ansatz(make_spec(n_max=3, d=2))
    theta = rng.normal(size=circ.n_params)
    a = [(g.kind, g.qubits, g.angle) for g in circ.bind(theta) if g.kind == "cbond_rot"]
    b = [(g.kind, g.qubits, g.angle) for g in circ.bind(theta) if g.kind == "cbond_rot"]
    assert a == b


def test_excitation_conservation(rng):
    for spec in (make_spec(n_max=3, d=2), make_spec(n_atoms=2, n_modes=2, n_max=2, d=2)):
        circ = build_ansatz(spec)
        proj = ses_projector(circ.layout)
        mask = proj.mask(np.arange(2 ** circ.n_qubits))
        for _ in range(4):
            theta = rng.normal(scale=0.7, size=circ.n_params)
            state = circ.prepare(theta)
            leak = np.sum(np.abs(state.amps[~mask]) ** 2)
            assert leak <= 1e-10


def test_depth_convergence_to_exact_polaron():
    # at the warm-start parameters the Trotterized circuit approaches the
    # directly exponentiated displacement as the depth grows
    model = DickeModel.resonant(g=0.8)
    trunc = FockTruncation.uniform(1, 7)
    basis = FockBasis(1, trunc.max_photons)
    a = lowering_operator(8)
    _, f = polaron_frequency_shift(model)
    gen = float(f[0]) * np.kron(SIGMA["x"], a - a.conj().T)
    target_fock = expm(gen) @ np.eye(basis.dim)[0]
    layout = QubitLayout.for_model(model, trunc)
    target = np.zeros(2 ** layout.total_qubits, dtype=complex)
    for ab in (0, 1):
        for n in range(8):
            target[encode_state([n], [ab], layout)] = target_fock[basis.index([ab], [n])]
    fids = []
    for d in range(1, 9):
        spec = AnsatzSpec(model=model, trunc=trunc, trotter_depths=d)
        circ = build_ansatz(spec)
        theta = polaron_displacement_params(model, trunc, spec)
        state = circ.prepare(theta)
        fids.append(abs(np.vdot(target, state.amps)) ** 2)
    assert all(b >= a - 1e-12 for a, b in zip(fids, fids[1:]))
    assert fids[-1] > 0.999
    # second-order Trotter error: infidelity shrinks ~4x from d=4 to d=8
    ratio = (1 - fids[3]) / (1 - fids[7])
    assert 2.5 < ratio < 6.0


def test_atom_layer_zero_params_identity():
    spec = make_spec(n_atoms=3, n_max=1, d=1)
    circ = build_ansatz(spec)
    state = circ.prepare(np.zeros(circ.n_params))
    assert abs(state.amps[circ.layout.vacuum_index()] - 1.0) < 1e-12


def test_atom_layer_only_touches_atoms():
    layout = QubitLayout(n_atoms=2, max_photons=(2,))
    template, slots = build_atom_layer(2, layout)
    assert len(slots) == 4
    qubits = set()
    for entry in template:
        if entry[0] == "ry":
            qubits.add(entry[2])
        else:
            qubits.update(entry[1].qubits)
    assert qubits == {0, 1}


def test_atom_layer_reaches_bell_state():
    # oracle: numerically decompose (|gg> + |ee>)/sqrt(2) over the layer
    spec = make_spec(n_atoms=2, n_max=1, d=1)
    circ = build_ansatz(spec)
    layout = circ.layout
    target = np.zeros(2 ** circ.n_qubits, dtype=complex)
    target[encode_state([0], [0, 0], layout)] = 1 / math.sqrt(2)
    target[encode_state([0], [1, 1], layout)] = 1 / math.sqrt(2)

    def infidelity(angles):
        theta = np.zeros(circ.n_params)
        theta[:4] = angles
        state = circ.prepare(theta)
        return 1 - abs(np.vdot(target, state.amps)) ** 2

    best = math.inf
    for start in ([0.5, 0.5, 0.5, 0.5], [1.5, -0.5, 1.0, -1.0], [0.2, 1.2, -0.7, 0.4]):
        res = minimize(infidelity, start, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 2000})
        best = min(best, res.fun)
    assert best < 1e-6


def test_atom_layer_required_for_multiple_atoms():
    with pytest.raises(ValueError, match="atom"):
        make_spec(n_atoms=2, atom_layer=False)


def test_depth_validation():
    with pytest.raises(ValueError):
        make_spec(d=0)
    with pytest.raises(ValueError):
        AnsatzSpec(model=DickeModel.resonant(), trunc=FockTruncation.uniform(1, 2),
                   trotter_depths=[[1, 2]])


def test_warm_start_zero_coupling():
    model = DickeModel.resonant(g=0.0)
    trunc = FockTruncation.uniform(1, 2)
    theta = polaron_displacement_params(model, trunc)
    assert np.allclose(theta, 0.0)


def test_warm_start_bare_frequency_formula():
    model = DickeModel.resonant(g=0.5)
    trunc = FockTruncation.uniform(1, 2)
    spec = AnsatzSpec(model=model, trunc=trunc, trotter_depths=1)
    theta = polaron_displacement_params(model, trunc, spec, self_consistent=False)
    assert theta[0] == pytest.approx(0.25)  # g / (w + w_q) = 0.5 / 2


def test_frequency_shift_fixed_point_oracle():
    model = DickeModel.resonant(g=0.8)
    w_pkg, f_pkg = polaron_frequency_shift(model)
    # independent fixed-point iteration
    w = 1.0
    for _ in range(2000):
        f = 0.8 / (1.0 + w)
        w = 1.0 * math.exp(-2 * f * f)
    assert w_pkg == pytest.approx(w, abs=1e-9)
    assert f_pkg[0] == pytest.approx(0.8 / (1.0 + w), abs=1e-9)


def test_warm_start_improves_on_vacuum():
    from polaronvqe.encoding import encode_hamiltonian
    from polaronvqe.vqe import EnergyObjective
    model = DickeModel.resonant(g=0.5)
    trunc = FockTruncation.uniform(1, 3)
    spec = AnsatzSpec(model=model, trunc=trunc, trotter_depths=2)
    circ = build_ansatz(spec)
    obj = EnergyObjective(circ, encode_hamiltonian(model, trunc, circ.layout))
    theta = polaron_displacement_params(model, trunc, spec)
    assert obj(theta) < -0.5 - 0.05


def test_pad_parameters_reproduces_state(rng):
    model = DickeModel.resonant(g=0.7)
    trunc = FockTruncation.uniform(1, 3)
    spec1 = AnsatzSpec(model=model, trunc=trunc, trotter_depths=2)
    spec2 = AnsatzSpec(model=model, trunc=trunc, trotter_depths=5)
    c1, c2 = build_ansatz(spec1), build_ansatz(spec2)
    theta1 = rng.normal(size=c1.n_params)
    theta2 = pad_parameters(theta1, spec1, spec2)
    s1, s2 = c1.prepare(theta1), c2.prepare(theta2)
    assert abs(abs(np.vdot(s1.amps, s2.amps)) - 1.0) < 1e-12
