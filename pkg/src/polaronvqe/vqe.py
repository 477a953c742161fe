"""Variational loop: objective evaluation, SPSA, a deterministic refiner,
reference energies and error metrics.

One SPSA "trial" is one simultaneous-perturbation iteration, i.e. one pair
of objective evaluations; the recorded per-trial energy is the mean of the
two perturbed evaluations.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh, expm
from scipy.optimize import minimize

from . import engine
from .ansatz import AnsatzCircuit, AnsatzSpec, build_ansatz, \
    ghz_atom_layer_params, pad_parameters, polaron_displacement_params
from .encoding import PauliTermSum, QubitLayout, encode_hamiltonian, \
    restrict_to_ses, ses_projector
from .engine import NoiseModel, PauliPlan, StateVector, basis_change_gate
from .errors import EstimationError, NumericalError
from .model import DickeModel, FockBasis, FockTruncation, SIGMA, \
    build_fock_hamiltonian, default_reference_truncation, exact_groundstate, \
    lowering_operator


@dataclass
class SpsaConfig:
    """Gain schedules a_t = a/(t+1+A)^alpha, c_t = c/(t+1)^gamma.

    ``a=None`` calibrates the step size from a small gradient probe (5 extra
    evaluation pairs); ``stability_offset=None`` uses 0.1 * max_trials.
    ``avg_window > 1`` returns the average of the last iterates instead of
    the final one.
    """

    max_trials: int = 150
    a: float | None = None
    c: float = 0.1
    alpha: float = 0.602
    gamma: float = 0.101
    stability_offset: float | None = None
    seed: int = 0
    avg_window: int = 1
    calibration_step: float = 0.1

    def __post_init__(self):
        if self.a is not None and self.a <= 0:
            raise ValueError("a must be positive")
        if self.c <= 0:
            raise ValueError("c must be positive")
        if self.max_trials < 0:
            raise ValueError("max_trials must be >= 0")


@dataclass
class VqeResult:
    theta: np.ndarray
    energy: float
    trace: np.ndarray
    delta_en: float | None = None
    delta_ex: float | None = None
    meta: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# measurement grouping

@dataclass
class MeasurementGroup:
    basis: dict[int, str]                  # qubit -> X/Y/Z
    terms: list[tuple[float, int]]         # (coeff, qubit mask)
    rotations: list
    postselectable: bool


def group_commuting(obs: PauliTermSum, layout: QubitLayout) -> tuple[float, list[MeasurementGroup]]:
    """Greedy qubit-wise-commuting grouping; returns (identity constant, groups)."""
    const = 0.0
    raw: list[tuple[dict, float]] = []
    for key, c in sorted(obs.canonicalize().terms, key=lambda t: -abs(t[1])):
        if not key:
            const += c.real
        else:
            raw.append((dict(key), c.real))
    groups: list[tuple[dict, list]] = []
    for labels, coeff in raw:
        placed = False
        for basis, members in groups:
            if all(basis.get(q, lab) == lab for q, lab in labels.items()):
                basis.update(labels)
                members.append((coeff, labels))
                placed = True
                break
        if not placed:
            groups.append((dict(labels), [(coeff, labels)]))
    register_qubits = {q for k in range(layout.n_modes) for q in layout.mode_register(k)}
    out = []
    for basis, members in groups:
        rotations = [g for q, lab in sorted(basis.items())
                     if (g := basis_change_gate(lab, q)) is not None]
        terms = [(coeff, sum(1 << q for q in labels)) for coeff, labels in members]
        postselectable = all(basis.get(q, "Z") == "Z" for q in register_qubits)
        out.append(MeasurementGroup(basis=basis, terms=terms, rotations=rotations,
                                    postselectable=postselectable))
    return const, out


# ---------------------------------------------------------------------------
# objective

class EnergyObjective:
    """E(theta) for a bound polaron circuit under the encoded Hamiltonian.

    Modes:
    * exact (shots=0, noise=None): statevector expectation value.
    * shot-based: each qubit-wise-commuting group is estimated from its own
      measured histogram (``shots`` per group).
    * noisy: density-matrix simulation with scaled depolarizing + amplitude
      damping; readout corruption, optional mitigation, optional
      postselection.  ``shots=0`` with noise gives the infinite-shot limit
      of the same pipeline.

    Postselection drops outcomes whose mode registers are outside the SES;
    it is applied only to groups measured in the computational basis on all
    register qubits (bond terms measured in X/Y bases carry no one-hot
    signature).  Mitigation runs before postselection.
    """

    def __init__(self, circuit: AnsatzCircuit, hamiltonian: PauliTermSum, *,
                 shots: int = 0, noise: NoiseModel | None = None,
                 mitigate: bool = False, postselect: bool = False, seed: int = 0):
        self.circuit = circuit
        self.layout = circuit.layout
        self.n = circuit.n_qubits
        ham = hamiltonian.canonicalize()
        if not ham.is_hermitian():
            raise ValueError("hamiltonian must be Hermitian")
        self.hamiltonian = ham
        self.shots = int(shots)
        self.noise = noise
        self.mitigate = mitigate
        self.postselect = postselect
        self.rng = np.random.default_rng(seed)
        self.n_evals = 0
        self._plan = PauliPlan(ham, self.n)
        self._exact_mode = self.shots == 0 and noise is None
        if not self._exact_mode:
            self._const, self._groups = group_commuting(ham, self.layout)
            idx = np.arange(2 ** self.n)
            self._sign_cache = {}
            for g in self._groups:
                for coeff, mask in g.terms:
                    if mask not in self._sign_cache:
                        self._sign_cache[mask] = (-1.0) ** np.bitwise_count(idx & mask)
            self._ses_mask = ses_projector(self.layout).mask(idx)
        self.last_retention: float | None = None

    def exact(self, theta) -> float:
        return self._plan.expectation(self.circuit.prepare(theta))

    def __call__(self, theta) -> float:
        self.n_evals += 1
        if self._exact_mode:
            return self.exact(theta)
        return self._estimate(theta)[0]

    def estimate(self, theta) -> tuple[float, float]:
        """(energy, standard error); the error is zero in deterministic modes."""
        self.n_evals += 1
        return self._estimate(theta)

    def _group_probs(self, theta) -> list[np.ndarray]:
        """Outcome distribution per measurement group (before readout)."""
        if self.noise is None:
            state = self.circuit.prepare(theta)
            out = []
            for g in self._groups:
                work = state.copy()
                engine.apply_circuit(work, g.rotations)
                out.append(work.probabilities())
            return out
        dm = engine.run_noisy(self.circuit.bind(theta), self.noise, self.n)
        out = []
        for g in self._groups:
            work = dm.copy()
            for rot in g.rotations:
                engine.dm_unitary(work, rot.matrix, rot.qubits)
            out.append(work.probabilities())
        return out

    def _estimate(self, theta) -> tuple[float, float]:
        energy = self._const
        variance = 0.0
        retentions = []
        for g, probs in zip(self._groups, self._group_probs(theta)):
            p = probs / probs.sum()
            if self.noise is not None:
                p = engine.apply_readout_error(p, self.noise, self.n)
            if self.shots > 0:
                counts = self.rng.multinomial(self.shots, np.clip(p, 0, None) / np.clip(p, 0, None).sum())
                p = counts / self.shots
            if self.mitigate and self.noise is not None:
                p = engine.mitigate_readout(p, self.noise, self.n)
            if self.postselect and g.postselectable:
                kept = np.where(self._ses_mask, p, 0.0)
                retained = kept.sum()
                if retained <= 0:
                    raise EstimationError("no shots retained after postselection")
                retentions.append(retained / p.sum())
                p = kept / retained
            combined = np.zeros_like(p)
            for coeff, mask in g.terms:
                combined = combined + coeff * self._sign_cache[mask]
            mean = float(combined @ p)
            energy += mean
            if self.shots > 0:
                var = float((combined ** 2) @ p) - mean ** 2
                variance += max(var, 0.0) / self.shots
        self.last_retention = float(np.mean(retentions)) if retentions else None
        return energy, math.sqrt(variance)


# ---------------------------------------------------------------------------
# optimizers

def spsa_minimize(objective, theta0, cfg: SpsaConfig) -> VqeResult:
    """Standard simultaneous-perturbation minimization with +/-1 Bernoulli
    perturbations; deterministic for a given config seed."""
    theta = np.asarray(theta0, dtype=float).copy()
    rng = np.random.default_rng(cfg.seed)
    n = len(theta)
    big_a = cfg.stability_offset if cfg.stability_offset is not None \
        else 0.1 * cfg.max_trials
    if cfg.max_trials == 0:
        return VqeResult(theta=theta, energy=float(objective(theta)),
                         trace=np.empty(0), meta={"trials": 0})
    a = cfg.a
    if a is None:
        # probe the gradient magnitude to target a sensible first step
        mags = []
        for _ in range(5):
            delta = rng.choice([-1.0, 1.0], size=n)
            diff = objective(theta + cfg.c * delta) - objective(theta - cfg.c * delta)
            mags.append(abs(diff) / (2 * cfg.c))
        mean_mag = max(float(np.mean(mags)), 1e-12)
        a = cfg.calibration_step / mean_mag * (big_a + 1) ** cfg.alpha

    trace = np.empty(cfg.max_trials)
    thetas = np.empty((cfg.max_trials, n))
    best_energy, best_theta = math.inf, theta.copy()
    trials_done = 0
    aborted = False
    for t in range(cfg.max_trials):
        c_t = cfg.c / (t + 1) ** cfg.gamma
        a_t = a / (t + 1 + big_a) ** cfg.alpha
        delta = rng.choice([-1.0, 1.0], size=n)
        e_plus = objective(theta + c_t * delta)
        e_minus = objective(theta - c_t * delta)
        est = 0.5 * (e_plus + e_minus)
        trace[t] = est
        thetas[t] = theta
        trials_done = t + 1
        if not (np.isfinite(e_plus) and np.isfinite(e_minus)):
            aborted = True
            break
        if est < best_energy:
            best_energy, best_theta = est, theta.copy()
        grad = (e_plus - e_minus) / (2 * c_t) * delta
        theta = theta - a_t * grad
    trace = trace[:trials_done]
    thetas = thetas[:trials_done]
    if cfg.avg_window > 1 and trials_done:
        theta_out = thetas[-cfg.avg_window:].mean(axis=0)
    else:
        theta_out = best_theta
    return VqeResult(theta=theta_out, energy=float(np.min(trace)) if trials_done else math.inf,
                     trace=trace,
                     meta={"trials": trials_done, "aborted": aborted, "a": a,
                           "seed": cfg.seed})


def _golden_section(fun, lo: float, hi: float, tol: float) -> tuple[float, float]:
    """Golden-section minimization on [lo, hi]."""
    invphi = (math.sqrt(5) - 1) / 2
    invphi2 = (3 - math.sqrt(5)) / 2
    h = hi - lo
    x1, x2 = lo + invphi2 * h, lo + invphi * h
    f1, f2 = fun(x1), fun(x2)
    while h > tol:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            h = hi - lo
            x1 = lo + invphi2 * h
            f1 = fun(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            h = hi - lo
            x2 = lo + invphi * h
            f2 = fun(x2)
    return (x1, f1) if f1 <= f2 else (x2, f2)


def coordinate_refine(objective, theta0, *, max_steps: int = 200,
                      span: float = 0.6, xtol: float = 1e-10,
                      ftol: float = 1e-12) -> tuple[np.ndarray, float, int, np.ndarray]:
    """Deterministic coordinate descent with a golden-section line search.

    One step is one line search along one coordinate.  Line searches run to
    a tolerance proportional to the current search span (the span shrinks as
    coordinates settle), with ``xtol`` as the absolute floor.  Returns
    (theta, energy, steps used, per-step energy trace).
    """
    theta = np.asarray(theta0, dtype=float).copy()
    n = len(theta)
    energy = float(objective(theta))
    spans = np.full(n, span)
    trace = []
    steps = 0
    while steps < max_steps:
        cycle_start = energy
        for j in range(n):
            if steps >= max_steps:
                break
            center = theta[j]

            def line(x, j=j):
                theta[j] = x
                val = float(objective(theta))
                theta[j] = center
                return val

            x_best, f_best = _golden_section(line, center - spans[j],
                                             center + spans[j],
                                             max(xtol, 1e-3 * spans[j]))
            if f_best < energy:
                spans[j] = min(max(4 * abs(x_best - center), 1e-4), span)
                theta[j] = x_best
                energy = f_best
            else:
                spans[j] = max(spans[j] * 0.5, 1e-4)
            steps += 1
            trace.append(energy)
        if cycle_start - energy < ftol:
            break
    return theta, energy, steps, np.asarray(trace)


# ---------------------------------------------------------------------------
# references and metrics

def encoded_groundstate_energy(model: DickeModel, trunc: FockTruncation) -> float:
    """Lowest eigenvalue of the truncated-Fock Hamiltonian, cross-checked
    against the SES-restricted encoded Hamiltonian spectrum."""
    fock = build_fock_hamiltonian(model, trunc)
    e_fock, _ = exact_groundstate(fock)
    layout = QubitLayout.for_model(model, trunc)
    restricted = restrict_to_ses(encode_hamiltonian(model, trunc, layout), layout)
    e_enc = float(eigh(restricted, eigvals_only=True, subset_by_index=[0, 0])[0])
    if abs(e_fock - e_enc) > 1e-10 * max(1.0, abs(e_fock)):
        raise NumericalError(
            f"encoded and Fock spectra disagree: {e_enc!r} vs {e_fock!r}")
    return e_fock


def encoded_groundstate(model: DickeModel, trunc: FockTruncation) -> tuple[float, StateVector]:
    """Exact encoded groundstate embedded in the full qubit register."""
    layout = QubitLayout.for_model(model, trunc)
    restricted = restrict_to_ses(encode_hamiltonian(model, trunc, layout), layout)
    energy, vec = exact_groundstate(restricted)
    amps = np.zeros(2 ** layout.total_qubits, dtype=complex)
    amps[ses_projector(layout).indices()] = vec
    return energy, StateVector(layout.total_qubits, amps)


def exact_reference_energy(model: DickeModel,
                           trunc: FockTruncation | None = None) -> float:
    """'Numerically exact' groundstate energy at a large reference truncation."""
    if trunc is None:
        trunc = default_reference_truncation(model.n_modes)
    from .model import groundstate_energy_large
    return groundstate_energy_large(model, trunc)


def polaron_baseline(model: DickeModel, trunc: FockTruncation, *,
                     return_params: bool = False):
    """<vac| P(f)^dag H P(f) |vac> in the truncated Fock space, with the
    displacement amplitudes f minimized variationally.

    P(f) = prod_i exp(sum_k f_ik sx_i (a_k - a_k^dag)) built by matrix
    exponential.  For several atoms this product form is a heuristic; it is
    exact for one atom.
    """
    fock = build_fock_hamiltonian(model, trunc)
    basis = fock.basis
    h = fock.matrix
    vac = np.zeros(basis.dim, dtype=complex)
    vac[0] = 1.0

    # Per-atom generators factorize over modes, so P applies as a sequence of
    # small (atom group x single mode) exponentials instead of one full-space
    # expm.  sx_i embedded in the atom group:
    sx_group = []
    for i in range(model.n_atoms):
        m2 = np.eye(1, dtype=complex)
        for j in reversed(range(model.n_atoms)):
            m2 = np.kron(m2, SIGMA["x"] if j == i else np.eye(2, dtype=complex))
        sx_group.append(m2)
    quad = []
    for k in range(model.n_modes):
        a = lowering_operator(basis.mode_dims[k])
        quad.append(a - a.conj().T)

    def _apply_pair(tensor, mat, mode_axis):
        t = np.moveaxis(tensor, (0, mode_axis), (0, 1))
        shape = t.shape
        t = (mat @ t.reshape(shape[0] * shape[1], -1)).reshape(shape)
        return np.moveaxis(t, (0, 1), (0, mode_axis))

    def state(f_flat):
        f = np.asarray(f_flat).reshape(model.n_atoms, model.n_modes)
        t = vac.reshape(basis.tensor_shape())
        for i in reversed(range(model.n_atoms)):
            for k in range(model.n_modes):
                factor = expm(f[i, k] * np.kron(sx_group[i], quad[k]))
                t = _apply_pair(t, factor, basis.mode_axis(k))
        return t.reshape(-1)

    def energy(f_flat):
        v = state(f_flat)
        return float(np.real(np.vdot(v, h @ v)))

    f0 = np.zeros(model.n_atoms * model.n_modes)
    for i in range(model.n_atoms):
        f0[i * model.n_modes:(i + 1) * model.n_modes] = \
            model.coupling_matrix[i] / (np.asarray(model.mode_freqs) + model.atom_freqs[i])
    res = minimize(energy, f0, method="Nelder-Mead",
                   options={"xatol": 1e-9, "fatol": 1e-12, "maxiter": 4000})
    best = min(energy(f0), float(res.fun))
    f_best = f0 if energy(f0) <= res.fun else res.x
    if return_params:
        return best, np.asarray(f_best).reshape(model.n_atoms, model.n_modes)
    return best


def error_metrics(e_vqe: float, e_en: float, e_ex: float) -> tuple[float, float]:
    """(delta_en, delta_ex) relative-error metrics."""
    if abs(e_en) < 1e-12 or abs(e_ex) < 1e-12:
        raise NumericalError("error metrics undefined for near-zero reference energy")
    return abs((e_vqe - e_en) / e_en), abs((e_en - e_ex) / e_ex)


def postselect(histogram: dict[str, int], layout: QubitLayout) -> tuple[dict[str, int], float]:
    """Drop bitstrings whose mode registers are outside the SES.

    Returns (filtered histogram, retained fraction).  Raises if nothing is
    retained.
    """
    proj = ses_projector(layout)
    kept = {bits: c for bits, c in histogram.items() if proj.bitstring_ok(bits)}
    total = sum(histogram.values())
    retained = sum(kept.values())
    if total == 0 or retained == 0:
        raise EstimationError("no shots retained after postselection")
    return kept, retained / total


# ---------------------------------------------------------------------------
# high-level driver

def run_vqe(model: DickeModel, trunc: FockTruncation, depths, *,
            per_photon: bool = False, shots: int = 0,
            noise: NoiseModel | None = None, mitigate: bool = False,
            postselect_shots: bool = False, spsa: SpsaConfig | None = None,
            refine: bool | None = None, refine_steps: int = 300,
            restarts: int = 3, seed: int = 0,
            theta_init: np.ndarray | None = None,
            compute_metrics: bool = True,
            reference: FockTruncation | None = None) -> VqeResult:
    """Full pipeline: warm start (+ restarts), optional SPSA, optional
    deterministic refinement, reference energies and error metrics.

    Noiseless exact-objective runs default to pure refinement; shot-based or
    noisy runs default to SPSA (optionally followed by refinement only when
    requested explicitly).
    """
    spec = AnsatzSpec(model=model, trunc=trunc, trotter_depths=depths,
                      per_photon_parameters=per_photon)
    circuit = build_ansatz(spec)
    ham = encode_hamiltonian(model, trunc, circuit.layout)
    objective = EnergyObjective(circuit, ham, shots=shots, noise=noise,
                                mitigate=mitigate, postselect=postselect_shots,
                                seed=seed)
    exact_objective = shots == 0 and noise is None
    use_spsa = spsa is not None or not exact_objective
    if spsa is None:
        spsa = SpsaConfig(seed=seed)
    if refine is None:
        refine = exact_objective

    starts = _start_menu(model, trunc, spec, circuit, theta_init,
                         restarts=restarts, seed=seed)
    candidates = []
    for idx, theta0 in enumerate(starts):
        trace_parts = []
        theta = np.asarray(theta0, dtype=float)
        if use_spsa:
            cfg = SpsaConfig(**{**spsa.__dict__, "seed": spsa.seed + idx})
            part = spsa_minimize(objective, theta, cfg)
            theta = part.theta
            trace_parts.append(part.trace)
            energy = part.energy
        elif len(theta) > 2:
            # quasi-Newton stage before the coordinate polish; the landscape
            # has well-separated basins for several atoms
            res = minimize(objective, theta, method="BFGS",
                           options={"gtol": 1e-8, "maxiter": 150})
            theta, energy = res.x, float(res.fun)
        else:
            energy = float(objective(theta))
        candidates.append((float(energy), idx, theta, trace_parts))

    energy, idx, theta, trace_parts = min(candidates, key=lambda c: (c[0], c[1]))
    if refine:
        theta, energy, _steps, rtrace = coordinate_refine(
            objective, theta, max_steps=refine_steps)
        trace_parts.append(rtrace)
    trace = np.concatenate(trace_parts) if trace_parts else np.asarray([energy])
    best = VqeResult(theta=theta, energy=float(energy), trace=trace,
                     meta={"restart": idx, "seed": seed, "shots": shots,
                           "mitigate": mitigate,
                           "postselect": postselect_shots,
                           "noise_scale": noise.scale if noise else 0.0,
                           "trials": spsa.max_trials if use_spsa else 0,
                           "n_evals": objective.n_evals,
                           "retention": objective.last_retention})
    if compute_metrics:
        e_en = encoded_groundstate_energy(model, trunc)
        e_ex = exact_reference_energy(model, reference)
        best.delta_en, best.delta_ex = error_metrics(best.energy, e_en, e_ex)
        best.meta["e_en"], best.meta["e_ex"] = e_en, e_ex
    return best


def _start_menu(model: DickeModel, trunc: FockTruncation, spec: AnsatzSpec,
                circuit: AnsatzCircuit, theta_init, *, restarts: int,
                seed: int) -> list[np.ndarray]:
    """Deterministic starting points: caller-provided continuation, the
    polaron warm start, and (for several atoms) a damped warm start seeded
    on the entangled GHZ atom sector, then seeded perturbations."""
    warm = polaron_displacement_params(model, trunc, spec)
    starts: list[np.ndarray] = []
    if theta_init is not None:
        starts.append(np.asarray(theta_init, dtype=float))
    starts.append(warm)
    if model.n_atoms > 1 and spec.atom_layer:
        damped = warm / model.n_atoms
        ghz = damped.copy()
        ghz[:2 * model.n_atoms] = ghz_atom_layer_params(model.n_atoms)
        starts.append(ghz)
        starts.append(damped)
    rng = np.random.default_rng(seed)
    while len(starts) < max(1, restarts):
        starts.append(warm + rng.normal(scale=0.15, size=len(warm)))
    return starts


def nested_depth_start(model: DickeModel, trunc: FockTruncation,
                       prev_depths, prev_theta, new_depths) -> np.ndarray:
    """Warm start for a deeper circuit from a shallower solution."""
    spec_from = AnsatzSpec(model=model, trunc=trunc, trotter_depths=prev_depths)
    spec_to = AnsatzSpec(model=model, trunc=trunc, trotter_depths=new_depths)
    return pad_parameters(prev_theta, spec_from, spec_to)
