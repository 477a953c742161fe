"""Objective evaluation, SPSA, refiner, references, metrics, postselection."""

import math

import numpy as np
import pytest

from polaronvqe import engine
from polaronvqe.ansatz import AnsatzSpec, build_ansatz, polaron_displacement_params
from polaronvqe.encoding import QubitLayout, encode_hamiltonian, encode_state
from polaronvqe.engine import NoiseModel
from polaronvqe.errors import EstimationError, NumericalError
from polaronvqe.model import DickeModel, FockTruncation, build_fock_hamiltonian, \
    exact_groundstate
from polaronvqe.vqe import (EnergyObjective, SpsaConfig, coordinate_refine,
                            encoded_groundstate, encoded_groundstate_energy,
                            error_metrics, exact_reference_energy,
                            group_commuting, nested_depth_start,
                            polaron_baseline, postselect, run_vqe, spsa_minimize)


def small_problem(g=0.5, n_max=1, d=1, n_atoms=1, n_modes=1):
    model = DickeModel.resonant(n_atoms=n_atoms, n_modes=n_modes, g=g)
    trunc = FockTruncation.uniform(n_modes, n_max)
    spec = AnsatzSpec(model=model, trunc=trunc, trotter_depths=d)
    circ = build_ansatz(spec)
    ham = encode_hamiltonian(model, trunc, circ.layout)
    return model, trunc, spec, circ, ham


# ---------------------------------------------------------------------------
# objective

def test_objective_at_zero_theta():
    model, trunc, spec, circ, ham = small_problem(n_atoms=2, n_max=2)
    obj = EnergyObjective(circ, ham)
    assert obj(np.zeros(circ.n_params)) == pytest.approx(-1.0, abs=1e-12)


def test_objective_zero_coupling_minimum_at_origin(rng):
    model, trunc, spec, circ, ham = small_problem(g=0.0, n_max=2, d=2)
    obj = EnergyObjective(circ, ham)
    e0 = obj(np.zeros(circ.n_params))
    assert e0 == pytest.approx(-0.5, abs=1e-12)
    for _ in range(10):
        assert obj(rng.normal(scale=0.5, size=circ.n_params)) >= e0 - 1e-12


def test_shot_estimate_within_standard_errors(rng):
    model, trunc, spec, circ, ham = small_problem(g=0.7, n_max=2, d=2)
    exact = EnergyObjective(circ, ham)
    shot = EnergyObjective(circ, ham, shots=100_000, seed=5)
    failures = 0
    for _ in range(8):
        theta = rng.normal(scale=0.4, size=circ.n_params)
        est, err = shot.estimate(theta)
        ref = exact.exact(theta)
        if abs(est - ref) > 4 * max(err, 1e-12):
            failures += 1
    assert failures <= 1


def test_qwc_grouping_covers_all_terms():
    model, trunc, spec, circ, ham = small_problem(g=0.5, n_max=3)
    const, groups = group_commuting(ham, circ.layout)
    n_grouped = sum(len(g.terms) for g in groups)
    n_expected = sum(1 for key, _ in ham.terms if key)
    assert n_grouped == n_expected
    for g in groups:
        for _, mask in g.terms:
            for q in range(circ.n_qubits):
                if (mask >> q) & 1:
                    assert q in g.basis


def test_shot_mode_zero_shots_with_noise_is_deterministic():
    model, trunc, spec, circ, ham = small_problem(g=0.5)
    noise = NoiseModel(depolarizing=0.01, amp_damping=0.01,
                       readout_p01=0.02, readout_p10=0.02)
    obj = EnergyObjective(circ, ham, noise=noise, mitigate=True)
    theta = np.array([0.3])
    assert obj(theta) == obj(theta)


# ---------------------------------------------------------------------------
# SPSA

def test_spsa_quadratic_bowl():
    target = np.array([0.7, -0.3, 1.2])
    theta0 = target + np.array([1.0, -1.0, 0.8])

    def f(theta):
        return float(np.sum((theta - target) ** 2))

    cfg = SpsaConfig(max_trials=200, c=0.05, seed=3)
    res = spsa_minimize(f, theta0, cfg)
    assert np.linalg.norm(res.theta - target) < 0.05 * np.linalg.norm(theta0 - target)


def test_spsa_zero_budget_returns_start():
    cfg = SpsaConfig(max_trials=0)
    res = spsa_minimize(lambda t: float(np.sum(t ** 2)), np.array([1.0, 2.0]), cfg)
    assert np.array_equal(res.theta, [1.0, 2.0])
    assert res.meta["trials"] == 0


def test_spsa_deterministic_traces():
    def f(theta):
        return float(np.sum(theta ** 2) + 0.1 * np.sin(5 * theta[0]))

    cfg = SpsaConfig(max_trials=60, seed=12)
    r1 = spsa_minimize(f, np.array([0.8, -0.4]), cfg)
    r2 = spsa_minimize(f, np.array([0.8, -0.4]), cfg)
    assert np.array_equal(r1.trace, r2.trace)
    assert np.array_equal(r1.theta, r2.theta)


def test_spsa_nan_aborts_with_trace():
    calls = {"n": 0}

    def f(theta):
        calls["n"] += 1
        return math.nan if calls["n"] > 20 else float(np.sum(theta ** 2))

    cfg = SpsaConfig(max_trials=50, a=0.1, seed=1)
    res = spsa_minimize(f, np.array([1.0]), cfg)
    assert res.meta["aborted"]
    assert 0 < len(res.trace) < 50


def test_spsa_best_energy_is_trace_minimum():
    def f(theta):
        return float(np.sum(theta ** 2))

    res = spsa_minimize(f, np.array([1.0, 1.0]), SpsaConfig(max_trials=80, seed=2))
    assert res.energy == pytest.approx(np.min(res.trace))


# ---------------------------------------------------------------------------
# refiner

def test_refiner_converges_single_parameter():
    model, trunc, spec, circ, ham = small_problem(g=0.6)
    obj = EnergyObjective(circ, ham)
    e_en = encoded_groundstate_energy(model, trunc)
    theta0 = polaron_displacement_params(model, trunc, spec)
    theta, energy, steps, trace = coordinate_refine(obj, theta0, max_steps=30)
    # single-bond family reaches the encoded groundstate exactly
    assert energy == pytest.approx(e_en, abs=1e-9)
    assert steps <= 30


def test_refiner_deterministic():
    model, trunc, spec, circ, ham = small_problem(g=0.8, n_max=2, d=2)
    obj = EnergyObjective(circ, ham)
    theta0 = polaron_displacement_params(model, trunc, spec)
    a = coordinate_refine(obj, theta0, max_steps=40)
    b = coordinate_refine(obj, theta0, max_steps=40)
    assert np.array_equal(a[0], b[0])
    assert a[1] == b[1]


# ---------------------------------------------------------------------------
# references and metrics

def test_encoded_energy_zero_coupling():
    model = DickeModel.resonant(n_atoms=2, g=0.0)
    assert encoded_groundstate_energy(model, FockTruncation.uniform(1, 2)) \
        == pytest.approx(-1.0, abs=1e-12)


def test_encoded_energy_small_rabi_hand_checkable():
    # n_max=1, g/w = 0.4: eigenvalue of the explicit 4x4 matrix
    model = DickeModel.resonant(g=0.4)
    trunc = FockTruncation.uniform(1, 1)
    h = np.array([
        [-0.5, 0.0, 0.0, 0.4],
        [0.0, 0.5, 0.4, 0.0],
        [0.0, 0.4, 0.5, 0.0],
        [0.4, 0.0, 0.0, 1.5],
    ])
    expected = np.linalg.eigvalsh(h)[0]
    assert encoded_groundstate_energy(model, trunc) == pytest.approx(expected, abs=1e-12)


def test_encoded_groundstate_vector_is_ses_supported():
    model = DickeModel.resonant(g=0.7)
    trunc = FockTruncation.uniform(1, 2)
    energy, state = encoded_groundstate(model, trunc)
    from polaronvqe.encoding import ses_projector
    lay = QubitLayout.for_model(model, trunc)
    mask = ses_projector(lay).mask(np.arange(2 ** lay.total_qubits))
    assert np.sum(np.abs(state.amps[~mask]) ** 2) == 0.0
    h = encode_hamiltonian(model, trunc, lay)
    assert engine.expectation(state, h) == pytest.approx(energy, abs=1e-10)


def test_polaron_baseline_zero_coupling():
    model = DickeModel.resonant(g=0.0)
    assert polaron_baseline(model, FockTruncation.uniform(1, 2)) \
        == pytest.approx(-0.5, abs=1e-9)


def test_polaron_baseline_above_encoded_energy(rng):
    for _ in range(4):
        g = float(rng.uniform(0.1, 1.0))
        model = DickeModel.resonant(g=g)
        trunc = FockTruncation.uniform(1, 3)
        base = polaron_baseline(model, trunc)
        e_en = encoded_groundstate_energy(model, trunc)
        assert base >= e_en - 1e-9


def test_error_metrics_zero_and_arithmetic():
    assert error_metrics(-1.0, -1.0, -1.0) == (0.0, 0.0)
    d_en, d_ex = error_metrics(-1.0, -1.02, -1.0)
    assert d_en == pytest.approx(0.02 / 1.02)
    assert d_ex == pytest.approx(0.02)
    with pytest.raises(NumericalError):
        error_metrics(0.0, 0.0, 1.0)


# ---------------------------------------------------------------------------
# postselection

def layout_31():
    return QubitLayout(n_atoms=1, max_photons=(3,))


def test_postselect_clean_histogram():
    lay = layout_31()
    vac = engine.bitstring(encode_state([0], [0], lay), lay.total_qubits)
    hist, retention = postselect({vac: 1000}, lay)
    assert retention == 1.0
    assert hist == {vac: 1000}


def test_postselect_drops_damped_register():
    lay = layout_31()
    good = engine.bitstring(encode_state([1], [0], lay), lay.total_qubits)
    damped = good[:1] + "0000"          # register fell to |0...0>
    hist, retention = postselect({good: 600, damped: 400}, lay)
    assert damped not in hist
    assert retention == pytest.approx(0.6)


def test_postselect_zero_retained():
    lay = layout_31()
    with pytest.raises(EstimationError):
        postselect({"0" * lay.total_qubits: 5}, lay)


@pytest.mark.parametrize("scale", [0.1, 0.5, 1.0])
def test_postselection_reduces_noisy_energy_error(scale):
    # infinite-shot limit of the noisy pipeline, with and without
    # postselection, against the noiseless optimum
    model, trunc, spec, circ, ham = small_problem(g=0.6)
    exact_obj = EnergyObjective(circ, ham)
    theta = polaron_displacement_params(model, trunc, spec)
    theta, e_ideal, _, _ = coordinate_refine(exact_obj, theta, max_steps=20)
    noise = NoiseModel(depolarizing=0.01, amp_damping=0.015, scale=scale)
    plain = EnergyObjective(circ, ham, noise=noise)(theta)
    kept = EnergyObjective(circ, ham, noise=noise, postselect=True)(theta)
    assert abs(kept - e_ideal) <= abs(plain - e_ideal) + 1e-12


# ---------------------------------------------------------------------------
# full runs

def test_run_vqe_variational_ordering():
    model = DickeModel.resonant(g=0.8)
    trunc = FockTruncation.uniform(1, 2)
    res = run_vqe(model, trunc, 2, refine_steps=80, seed=1)
    e_en = encoded_groundstate_energy(model, trunc)
    e_ex = exact_reference_energy(model)
    assert res.energy >= e_en - 1e-9
    assert e_en >= e_ex - 1e-9
    assert res.delta_en >= 0 and res.delta_ex >= 0


def test_run_vqe_monotone_in_depth_with_padding():
    model = DickeModel.resonant(g=0.9)
    trunc = FockTruncation.uniform(1, 2)
    energies = []
    prev = None
    for d in (1, 2, 3):
        init = None
        if prev is not None:
            init = nested_depth_start(model, trunc, d - 1, prev, d)
        res = run_vqe(model, trunc, d, theta_init=init, refine_steps=60,
                      seed=0, compute_metrics=False)
        energies.append(res.energy)
        prev = res.theta
    assert energies[1] <= energies[0] + 1e-10
    assert energies[2] <= energies[1] + 1e-10


def test_run_vqe_noisy_shot_mode_runs():
    model = DickeModel.resonant(g=0.5)
    trunc = FockTruncation.uniform(1, 1)
    noise = NoiseModel(depolarizing=0.002, amp_damping=0.002,
                       readout_p01=0.02, readout_p10=0.02, scale=1.0)
    res = run_vqe(model, trunc, 1, shots=256,
                  noise=noise, mitigate=True, postselect_shots=True,
                  spsa=SpsaConfig(max_trials=25, seed=4), restarts=1, seed=4)
    assert np.isfinite(res.energy)
    assert res.meta["trials"] == 25
    assert len(res.trace) == 25


def test_run_vqe_seed_determinism():
    model = DickeModel.resonant(g=0.4)
    trunc = FockTruncation.uniform(1, 1)
    noise = NoiseModel(depolarizing=0.005, readout_p01=0.02, readout_p10=0.03)
    kw = dict(shots=128, noise=noise, spsa=SpsaConfig(max_trials=15, seed=9),
              restarts=1, seed=9, compute_metrics=False)
    r1 = run_vqe(model, trunc, 1, **kw)
    r2 = run_vqe(model, trunc, 1, **kw)
    assert np.array_equal(r1.trace, r2.trace)
    assert np.array_equal(r1.theta, r2.theta)


def test_per_photon_parameters_extend_family():
    model = DickeModel.resonant(g=0.9)
    trunc = FockTruncation.uniform(1, 3)
    plain = run_vqe(model, trunc, 2, refine_steps=120, seed=0,
                    compute_metrics=False)
    rich = run_vqe(model, trunc, 2, per_photon=True, refine_steps=200, seed=0,
                   compute_metrics=False)
    assert rich.energy <= plain.energy + 1e-8
