"""Joint Wigner tomography of encoded states with Trotterized displacements.

The sampled value at displacement alpha combines computational-basis
outcome probabilities after applying the adjoint displacement circuit and
the atom basis-change rotations:

    W  =  (2/pi)^M  *  sum over SES outcomes of
          (-1)^(sum_k n_k) * prod_(labeled atoms) (-1)^bit * prob(outcome)

Outcomes outside the SES (possible under noise; the displacement circuits
themselves conserve register excitation numbers) are discarded and the
probabilities renormalized over the retained mass; the retained fraction is
reported per grid point.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import engine
from .encoding import PauliTermSum, QubitLayout, ses_projector, slot_occupation
from .engine import GateOp, StateVector, basis_change_gate
from .errors import EstimationError
from .model import FockTruncation, exact_wigner


@dataclass(frozen=True)
class WignerGrid:
    """Rectangular displacement grid per mode plus the atom label vector."""

    re_axes: tuple[tuple[float, ...], ...]
    im_axes: tuple[tuple[float, ...], ...]
    atom_labels: str = "z"

    def __post_init__(self):
        re = tuple(tuple(float(v) for v in ax) for ax in self.re_axes)
        im = tuple(tuple(float(v) for v in ax) for ax in self.im_axes)
        object.__setattr__(self, "re_axes", re)
        object.__setattr__(self, "im_axes", im)
        if len(re) != len(im) or not re:
            raise ValueError("need one (re, im) axis pair per mode")
        if any(len(ax) == 0 for ax in re + im):
            raise ValueError("grid axes must be nonempty")
        if not all(np.isfinite(v) for ax in re + im for v in ax):
            raise ValueError("grid ranges must be finite")
        if not set(self.atom_labels) <= set("0xyz"):
            raise ValueError("atom labels must be in '0xyz'")

    @classmethod
    def square(cls, extent: float = 3.0, points: int = 41, n_modes: int = 1,
               atom_labels: str = "z") -> "WignerGrid":
        ax = tuple(np.linspace(-extent, extent, points))
        return cls(re_axes=(ax,) * n_modes, im_axes=(ax,) * n_modes,
                   atom_labels=atom_labels)

    @property
    def n_modes(self) -> int:
        return len(self.re_axes)

    @property
    def shape(self) -> tuple[int, ...]:
        out = []
        for re, im in zip(self.re_axes, self.im_axes):
            out += [len(re), len(im)]
        return tuple(out)

    def points(self):
        """Iterate (flat_index, alphas) in C order over the grid shape."""
        grids = []
        for re, im in zip(self.re_axes, self.im_axes):
            grids += [np.asarray(re), np.asarray(im)]
        mesh = np.meshgrid(*grids, indexing="ij")
        flat = [m.ravel() for m in mesh]
        for i in range(len(flat[0])):
            alphas = tuple(flat[2 * k][i] + 1j * flat[2 * k + 1][i]
                           for k in range(self.n_modes))
            yield i, alphas

    def cell_area(self) -> float:
        """Phase-space volume element (product over modes of dRe * dIm)."""
        area = 1.0
        for re, im in zip(self.re_axes, self.im_axes):
            dre = (re[-1] - re[0]) / (len(re) - 1) if len(re) > 1 else 1.0
            dim = (im[-1] - im[0]) / (len(im) - 1) if len(im) > 1 else 1.0
            area *= dre * dim
        return area


@dataclass
class DisplacementCircuit:
    """Trotterized encoded displacement of one mode register."""

    mode: int
    alpha: complex
    depth: int
    gates: list[GateOp] = field(default_factory=list)


def build_displacement(k: int, alpha: complex, d: int,
                       layout: QubitLayout) -> DisplacementCircuit:
    """Trotterized D(alpha) on register k.

    The generator alpha a^dag - alpha^* a splits into Re(alpha) (a^dag - a)
    and i Im(alpha) (a + a^dag); per Trotter step the real-component bonds
    are applied first (even sites then odd sites), then the imaginary ones.
    Zero-amplitude components are skipped entirely.
    """
    if d < 1:
        raise ValueError("Trotter depth must be >= 1")
    reg = list(layout.mode_register(k))
    n_max = len(reg) - 1
    re_a, im_a = float(np.real(alpha)), float(np.imag(alpha))
    gates: list[GateOp] = []
    for _s in range(d):
        for kind, amp in (("bond_rot", re_a), ("bond_phase", im_a)):
            if amp == 0.0:
                continue
            for parity in (0, 1):
                for n in range(parity, n_max, 2):
                    angle = amp * math.sqrt(n + 1) / d
                    gates.append(GateOp(kind, (reg[n], reg[n + 1]), angle=angle))
    return DisplacementCircuit(mode=k, alpha=complex(alpha), depth=d, gates=gates)


def apply_displacement(state: StateVector, circuit: DisplacementCircuit, *,
                       dagger: bool = False) -> StateVector:
    gates = circuit.gates
    if dagger:
        gates = [g.inverse() for g in reversed(gates)]
    return engine.apply_circuit(state, gates)


@dataclass
class WignerField:
    grid: WignerGrid
    values: np.ndarray
    retention: np.ndarray
    depth: int | None = None

    def flagged_points(self, min_retention: float = 0.5) -> int:
        return int(np.sum(self.retention < min_retention))


def _combination_weights(layout: QubitLayout, atom_labels: str) -> tuple[np.ndarray, np.ndarray]:
    """(weight per basis index, SES validity mask).

    weight = (2/pi)^M * (-1)^(sum of one-hot positions) * prod of atom-bit
    signs for the labeled atoms; zero outside the SES.
    """
    n = layout.total_qubits
    idx = np.arange(2 ** n)
    valid = ses_projector(layout).mask(idx)
    weight = np.full(len(idx), (2.0 / math.pi) ** layout.n_modes)
    for k in range(layout.n_modes):
        pos = np.zeros(len(idx), dtype=int)
        for slot, q in enumerate(layout.mode_register(k)):
            pos += slot * ((idx >> q) & 1)
        weight *= (-1.0) ** pos
    for i, lab in enumerate(atom_labels):
        if lab != "0":
            weight *= (-1.0) ** ((idx >> layout.atom_qubit(i)) & 1)
    weight[~valid] = 0.0
    return weight, valid


def sample_wigner(state: StateVector, layout: QubitLayout, grid: WignerGrid,
                  d: int, *, shots: int = 0, seed: int = 0,
                  min_retention: float = 0.5) -> WignerField:
    """Sampled (or exact-probability, for shots=0) encoded Wigner field.

    For each grid point the adjoint Trotterized displacement is applied per
    mode, then the atom basis-change rotations for the requested labels, and
    the outcome distribution is combined as in the module docstring.
    """
    if grid.n_modes != layout.n_modes:
        raise ValueError("grid does not match layout mode count")
    if len(grid.atom_labels) != layout.n_atoms:
        raise ValueError("need one atom label per atom")
    weight, valid = _combination_weights(layout, grid.atom_labels)
    rotations = [g for i, lab in enumerate(grid.atom_labels)
                 if lab in "xy"
                 for g in [basis_change_gate(lab.upper(), layout.atom_qubit(i))]]
    size = int(np.prod(grid.shape))
    values = np.empty(size)
    retention = np.empty(size)
    rng = np.random.default_rng(seed)
    flagged = 0
    for i, alphas in grid.points():
        work = state.copy()
        for k in range(layout.n_modes):
            circ = build_displacement(k, alphas[k], d, layout)
            apply_displacement(work, circ, dagger=True)
        engine.apply_circuit(work, rotations)
        p = work.probabilities()
        if shots > 0:
            counts = rng.multinomial(shots, p / p.sum())
            p = counts / shots
        retained = float(p[valid].sum())
        total = float(p.sum())
        if retained <= 0.0:
            raise EstimationError("no probability mass retained inside the SES")
        values[i] = float(weight @ p) / retained
        retention[i] = retained / total
        if retention[i] < min_retention:
            flagged += 1
    if flagged:
        warnings.warn(f"{flagged} grid points retained less than "
                      f"{min_retention:.0%} of their shots")
    return WignerField(grid=grid, values=values.reshape(grid.shape),
                       retention=retention.reshape(grid.shape), depth=d)


def encoded_parity_observable(layout: QubitLayout, atom_labels: str) -> PauliTermSum:
    """sigma^l (x) prod_k Pi_k as a Pauli sum valid on the SES: the register
    parity reads off the one-hot position, Pi_k = sum_n (-1)^n |n><n| =
    sum_n (-1)^n (I - Z_slot)/2."""
    obs = PauliTermSum.identity((2.0 / math.pi) ** layout.n_modes)
    for i, lab in enumerate(atom_labels):
        if lab != "0":
            obs = obs * PauliTermSum.single(layout.atom_qubit(i), lab.upper())
    for k in range(layout.n_modes):
        parity = PauliTermSum()
        for n, q in enumerate(layout.mode_register(k)):
            parity = parity + ((-1.0) ** n) * slot_occupation(q)
        obs = obs * parity
    return obs.canonicalize()


def exact_wigner_field(state_fock: np.ndarray, trunc: FockTruncation,
                       grid: WignerGrid, *, pad: int = 8,
                       leak_tol: float | None = 1e-6) -> np.ndarray:
    """Reference field from the truncated-Fock route, on the same grid."""
    size = int(np.prod(grid.shape))
    values = np.empty(size)
    for i, alphas in grid.points():
        values[i] = exact_wigner(state_fock, trunc, grid.atom_labels, alphas,
                                 pad=pad, leak_tol=leak_tol)
    return values.reshape(grid.shape)


def wigner_error(sampled: np.ndarray, reference: np.ndarray, grid: WignerGrid,
                 alpha_max: float) -> float:
    """Disc-RMS discrepancy: sqrt(sum over |alpha| <= alpha_max of
    (W_sampled - W_ref)^2 * cell_area) / (sqrt(pi) * alpha_max)."""
    if grid.n_modes != 1:
        raise ValueError("the disc error metric is defined for one mode")
    if sampled.shape != reference.shape or sampled.shape != grid.shape:
        raise ValueError("fields must share the grid shape")
    re = np.asarray(grid.re_axes[0])[:, None]
    im = np.asarray(grid.im_axes[0])[None, :]
    disc = re ** 2 + im ** 2 <= alpha_max ** 2
    if not disc.any():
        raise ValueError("no grid points inside the requested disc")
    sq = float(np.sum((sampled - reference)[disc] ** 2) * grid.cell_area())
    return math.sqrt(sq) / (math.sqrt(math.pi) * alpha_max)


def delta_w_curve(sampled: np.ndarray, reference: np.ndarray, grid: WignerGrid,
                  radii) -> np.ndarray:
    return np.asarray([wigner_error(sampled, reference, grid, r) for r in radii])
