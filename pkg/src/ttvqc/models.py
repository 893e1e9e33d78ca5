"""Trainable scalar models f(x) = <H> built from a circuit plus either a
tensor-train generator (the hypernetwork route) or directly trainable angles.

Both expose value_and_grad over their trainables so the NTK tooling and the
experiment drivers can treat them interchangeably."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import qsim
from .graddiff import chain_to_cores, grad_wrt_angles, param_shift_grad
from .qsim import Circuit, Gate, Hamiltonian, NoiseSpec
from .ttcore import (
    TTGenerator,
    TTInput,
    fit_output_length,
    spread_fit_gradient,
    tt_forward,
    tt_jacobian,
)

__all__ = ["TTCircuitModel", "DirectCircuitModel", "pool_features", "encoding_gates"]


def pool_features(x: np.ndarray, n_qubits: int) -> np.ndarray:
    """Mean-pool a feature vector into one value per qubit."""
    x = np.asarray(x, dtype=float).ravel()
    edges = np.linspace(0, x.size, n_qubits + 1).astype(int)
    return np.array([x[a:b].mean() if b > a else 0.0 for a, b in zip(edges[:-1], edges[1:])])


def encoding_gates(x: np.ndarray, n_qubits: int) -> tuple:
    """Fixed RY data-encoding layer: angle pi * pooled feature per qubit."""
    pooled = pool_features(x, n_qubits)
    return tuple(Gate("ry", (q,), angle=math.pi * float(pooled[q])) for q in range(n_qubits))


def _with_encoding(circuit: Circuit, x) -> Circuit:
    if x is None:
        return circuit
    enc = encoding_gates(x, circuit.n_qubits)
    return Circuit(circuit.n_qubits, enc + circuit.gates, circuit.n_params)


@dataclass(frozen=True)
class TTCircuitModel:
    """f(x) = <H> of the circuit run with TT-generated angles.

    In feature mode the generator consumes x itself; in latent mode it
    consumes a fixed draw and x is ignored.  Trainables are the generator's
    cores and bias.
    """

    generator: TTGenerator
    circuit: Circuit
    hamiltonian: Hamiltonian
    latent: TTInput | None = None
    noise: NoiseSpec | None = None
    backend: str = "density-matrix"

    def _input(self, x):
        if self.latent is not None:
            return self.latent
        if x is None:
            raise ValueError("feature-mode model needs an input vector")
        return TTInput.features(x)

    @property
    def n_trainables(self) -> int:
        return self.generator.n_trainables

    @property
    def trainables(self) -> np.ndarray:
        return self.generator.trainable_vector()

    def with_trainables(self, vec) -> "TTCircuitModel":
        return replace(self, generator=self.generator.with_trainables(vec))

    def angles(self, x=None) -> np.ndarray:
        out = tt_forward(self.generator, self._input(x))
        return fit_output_length(out, self.circuit.n_params)

    def value(self, x=None, rng=None) -> float:
        angles = self.angles(x)
        if self.noise is None or self.noise.is_noiseless:
            return qsim.expectation(qsim.simulate_state(self.circuit, angles), self.hamiltonian)
        return qsim.noisy_expectation(self.circuit, angles, self.hamiltonian,
                                      self.noise, backend=self.backend, rng=rng)

    def value_and_grad(self, x=None, rng=None) -> tuple:
        tt_in = self._input(x)
        out = tt_forward(self.generator, tt_in)
        angles = fit_output_length(out, self.circuit.n_params)
        if self.noise is None or self.noise.is_noiseless:
            value = qsim.expectation(qsim.simulate_state(self.circuit, angles), self.hamiltonian)
            grad_angles = grad_wrt_angles(self.circuit, angles, self.hamiltonian)
        else:
            def evaluator(p, overrides):
                return qsim.noisy_expectation(self.circuit, p, self.hamiltonian, self.noise,
                                              backend=self.backend, rng=rng,
                                              angle_overrides=overrides)
            value = qsim.noisy_expectation(self.circuit, angles, self.hamiltonian, self.noise,
                                           backend=self.backend, rng=rng)
            grad_angles = param_shift_grad(self.circuit, angles, self.hamiltonian, evaluator)
        grad_out = spread_fit_gradient(grad_angles, out.shape[0])
        grad = chain_to_cores(grad_out, tt_jacobian(self.generator, tt_in))
        return value, grad

    @property
    def rank_product(self) -> int:
        return math.prod(self.generator.spec.ranks)


@dataclass(frozen=True)
class DirectCircuitModel:
    """f(x) = <H> of the circuit with directly trainable angles.

    With ``encode_input`` a fixed RY layer injects pooled features ahead of
    the trainable gates, so per-input gradients actually vary with x.
    """

    params: np.ndarray
    circuit: Circuit
    hamiltonian: Hamiltonian
    encode_input: bool = False
    noise: NoiseSpec | None = None
    backend: str = "density-matrix"

    @property
    def n_trainables(self) -> int:
        return self.circuit.n_params

    @property
    def trainables(self) -> np.ndarray:
        return np.asarray(self.params, dtype=float).copy()

    def with_trainables(self, vec) -> "DirectCircuitModel":
        return replace(self, params=np.asarray(vec, dtype=float).copy())

    def _circuit_for(self, x) -> Circuit:
        return _with_encoding(self.circuit, x if self.encode_input else None)

    def value(self, x=None, rng=None) -> float:
        circ = self._circuit_for(x)
        if self.noise is None or self.noise.is_noiseless:
            return qsim.expectation(qsim.simulate_state(circ, self.params), self.hamiltonian)
        return qsim.noisy_expectation(circ, self.params, self.hamiltonian,
                                      self.noise, backend=self.backend, rng=rng)

    def value_and_grad(self, x=None, rng=None) -> tuple:
        circ = self._circuit_for(x)
        if self.noise is None or self.noise.is_noiseless:
            value = qsim.expectation(qsim.simulate_state(circ, self.params), self.hamiltonian)
            grad = grad_wrt_angles(circ, self.params, self.hamiltonian)
        else:
            def evaluator(p, overrides):
                return qsim.noisy_expectation(circ, p, self.hamiltonian, self.noise,
                                              backend=self.backend, rng=rng,
                                              angle_overrides=overrides)
            value = qsim.noisy_expectation(circ, self.params, self.hamiltonian, self.noise,
                                           backend=self.backend, rng=rng)
            grad = param_shift_grad(circ, self.params, self.hamiltonian, evaluator)
        return value, grad

    @property
    def rank_product(self) -> int:
        return 1
