"""Polaron-ansatz VQE toolkit for ultrastrong-coupling light-matter models.

Layers: ``model`` (truncated-Fock references), ``encoding`` (one-hot mode
registers and a Pauli algebra), ``engine`` (statevector / density-matrix
execution), ``ansatz`` (the variational circuits), ``vqe`` (optimization and
metrics), ``wigner`` (tomography), ``cli`` (experiment front end).
"""

from .model import (DickeModel, FockBasis, FockOperatorMatrix, FockTruncation,
                    build_fock_hamiltonian, default_reference_truncation,
                    exact_groundstate, exact_wigner)
from .encoding import (PauliTermSum, QubitLayout, encode_annihilation,
                       encode_hamiltonian, encode_number, encode_state,
                       restrict_to_ses, ses_projector)
from .engine import (DensityMatrix, GateOp, NoiseModel, StateVector,
                     apply_gate, apply_readout_error, expectation,
                     mitigate_readout, run_noisy, sample_counts)
from .ansatz import (AnsatzCircuit, AnsatzSpec, build_ansatz, bind_parameters,
                     build_atom_layer, pad_parameters,
                     polaron_displacement_params, polaron_frequency_shift)
from .vqe import (EnergyObjective, SpsaConfig, VqeResult, coordinate_refine,
                  encoded_groundstate, encoded_groundstate_energy,
                  error_metrics, exact_reference_energy, polaron_baseline,
                  postselect, run_vqe, spsa_minimize)
from .wigner import (DisplacementCircuit, WignerField, WignerGrid,
                     build_displacement, delta_w_curve, exact_wigner_field,
                     sample_wigner, wigner_error)

__version__ = "0.1.0"
