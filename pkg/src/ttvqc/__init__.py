"""ttvqc: tensor-train hypernetworks driving variational quantum circuits.

A classical tensor-train generator produces every gate angle of a fixed
quantum circuit; training touches only the generator.  The package bundles
the generator algebra (ttcore), a statevector/density-matrix simulator with
depolarizing noise (qsim), exact gradients and their noise statistics
(graddiff), empirical tangent-kernel analysis (ntk), classical optimizers
(optim), experiment drivers (harness), and a CLI that writes CSV artifacts
plus rendered figures (cli, reports, plots).
"""

__version__ = "0.1.0"

from .qsim import (
    CircuitSpec,
    Circuit,
    Gate,
    Hamiltonian,
    NoiseSpec,
    PauliString,
    QuantumState,
    build_ansatz,
    exact_ground_energy,
    expectation,
    maxcut_hamiltonian,
    noisy_expectation,
    simulate_state,
)
from .ttcore import (
    TTGenerator,
    TTInput,
    TTSpec,
    TruncationReport,
    tt_forward,
    tt_jacobian,
    tt_param_count,
    tt_svd,
    tt_to_dense,
)

__all__ = [
    "__version__",
    "CircuitSpec",
    "Circuit",
    "Gate",
    "Hamiltonian",
    "NoiseSpec",
    "PauliString",
    "QuantumState",
    "build_ansatz",
    "exact_ground_energy",
    "expectation",
    "maxcut_hamiltonian",
    "noisy_expectation",
    "simulate_state",
    "TTGenerator",
    "TTInput",
    "TTSpec",
    "TruncationReport",
    "tt_forward",
    "tt_jacobian",
    "tt_param_count",
    "tt_svd",
    "tt_to_dense",
]
