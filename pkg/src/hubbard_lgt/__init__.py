"""Fermi-Hubbard quench dynamics on simulated noisy qubits, in a direct
Jordan-Wigner encoding and a Z2 lattice-gauge-theory encoding, with
post-selection and decay-normalization mitigation."""

from .circuits import build_evolution, resource_estimate, trotter_step
from .experiment import ExperimentConfig, ResultRow, emit_csv, read_csv, run_experiment
from .mitigation import (
    CorrelatorEstimate,
    NormalizationFactor,
    PostSelectionRule,
    apply_normalization,
    charge_eigenvalue,
    estimate_chi,
    estimate_normalization,
    global_numbers,
    postselect,
)
from .model import LgtCouplings, ModelParams, QubitLayout, make_layout
from .oracle import calibrate_lgt, correlator_exact, evolve_exact
from .qasm import export_qasm, parse_qasm
from .qsim import Circuit, GateOp, NoiseModel, StateVector, run_trajectory

__version__ = "0.1.0"
