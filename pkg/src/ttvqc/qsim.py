"""Quantum circuit simulation for fixed layered ansatze.

Statevector and density-matrix backends over a small gate set (RX/RY/RZ,
RZZ, CNOT, H, X), Pauli-string observables, per-gate depolarizing noise
(exact channel or trajectory sampling), and dense exact diagonalization for
ground-state references.

Qubit 0 is the most significant bit: basis index ``b`` has qubit ``q`` in bit
``U - 1 - q``, i.e. axis ``q`` once the state is reshaped to ``[2] * U``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Gate",
    "Circuit",
    "CircuitSpec",
    "PauliString",
    "Hamiltonian",
    "NoiseSpec",
    "QuantumState",
    "build_ansatz",
    "simulate_state",
    "expectation",
    "maxcut_hamiltonian",
    "apply_depolarizing",
    "noisy_expectation",
    "exact_ground_energy",
    "parse_hamiltonian",
    "format_hamiltonian",
    "load_hamiltonian",
    "save_hamiltonian",
    "z_readout",
]

DENSITY_MATRIX_MAX_QUBITS = 10
EXACT_DIAG_MAX_QUBITS = 12

_SQ2 = 1.0 / math.sqrt(2.0)
_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
_H_MAT = np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]], dtype=complex)

# Generator Pauli word for each parameterized gate kind (R_A(t) = exp(-i t A / 2)).
_GENERATOR = {"rx": "X", "ry": "Y", "rz": "Z", "rzz": "ZZ"}


def _rx(t: float) -> np.ndarray:
    c, s = math.cos(t / 2), math.sin(t / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def _ry(t: float) -> np.ndarray:
    c, s = math.cos(t / 2), math.sin(t / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def _rz(t: float) -> np.ndarray:
    return np.array([[np.exp(-1j * t / 2), 0], [0, np.exp(1j * t / 2)]])


_ROTATION = {"rx": _rx, "ry": _ry, "rz": _rz}


@dataclass(frozen=True)
class Gate:
    """One circuit operation.

    Parameterized gates read ``angle = coeff * params[slot]``; fixed gates
    (slot None) use ``angle`` directly.  ``cnot``, ``h`` and ``x`` ignore the
    angle fields.
    """

    kind: str
    qubits: tuple
    slot: int | None = None
    coeff: float = 1.0
    angle: float = 0.0

    def resolved_angle(self, params, delta: float = 0.0) -> float:
        base = self.angle if self.slot is None else self.coeff * params[self.slot]
        return base + delta


@dataclass(frozen=True)
class Circuit:
    """A flat gate program over n_qubits with n_params parameter slots."""

    n_qubits: int
    gates: tuple
    n_params: int

    def __post_init__(self):
        for g in self.gates:
            for q in g.qubits:
                if not 0 <= q < self.n_qubits:
                    raise ValueError(f"gate {g.kind}: qubit {q} out of range for {self.n_qubits} qubits")
            if g.slot is not None and not 0 <= g.slot < self.n_params:
                raise ValueError(f"gate {g.kind}: parameter slot {g.slot} out of range")

    @property
    def n_gates(self) -> int:
        return len(self.gates)


def ring_pairs(n_qubits: int) -> list:
    """CNOT ring: nearest neighbours, closing edge only when it is not a duplicate."""
    pairs = [(q, q + 1) for q in range(n_qubits - 1)]
    if n_qubits > 2:
        pairs.append((n_qubits - 1, 0))
    return pairs


@dataclass(frozen=True)
class CircuitSpec:
    """The layered hardware-efficient ansatz: per layer, RX/RY/RZ on every
    qubit in qubit order, then the entangler pattern."""

    qubits: int
    layers: int
    entangler: str = "ring"

    def __post_init__(self):
        if self.qubits < 1 or self.layers < 1:
            raise ValueError("CircuitSpec: qubits and layers must be positive")
        if self.entangler not in ("ring", "none"):
            raise ValueError(f"CircuitSpec: unknown entangler {self.entangler!r}")

    @property
    def param_count(self) -> int:
        return 3 * self.qubits * self.layers

    def to_circuit(self) -> Circuit:
        return _compile_ansatz(self)


@functools.lru_cache(maxsize=None)
def _compile_ansatz(spec: CircuitSpec) -> Circuit:
    gates = []
    slot = 0
    for _layer in range(spec.layers):
        for q in range(spec.qubits):
            gates.append(Gate("rx", (q,), slot=slot)); slot += 1
            gates.append(Gate("ry", (q,), slot=slot)); slot += 1
            gates.append(Gate("rz", (q,), slot=slot)); slot += 1
        if spec.entangler == "ring":
            for c, t in ring_pairs(spec.qubits):
                gates.append(Gate("cnot", (c, t)))
    return Circuit(spec.qubits, tuple(gates), spec.param_count)


def build_ansatz(qubits: int, layers: int, entangler: str = "ring") -> CircuitSpec:
    """Canonical layered circuit; parameter slots are layer-major, qubit-major,
    (rx, ry, rz) within a qubit."""
    return CircuitSpec(qubits, layers, entangler)


def _as_circuit(circuit) -> Circuit:
    if isinstance(circuit, CircuitSpec):
        return circuit.to_circuit()
    if isinstance(circuit, Circuit):
        return circuit
    raise TypeError(f"expected Circuit or CircuitSpec, got {type(circuit).__name__}")


# ---------------------------------------------------------------------------
# Observables


@dataclass(frozen=True)
class PauliString:
    coefficient: float
    operators: str

    def __post_init__(self):
        if not math.isfinite(self.coefficient):
            raise ValueError("PauliString: coefficient must be finite")
        ops = self.operators.upper()
        if any(ch not in "IXYZ" for ch in ops):
            raise ValueError(f"PauliString: invalid operator letters in {self.operators!r}")
        object.__setattr__(self, "operators", ops)

    @property
    def n_qubits(self) -> int:
        return len(self.operators)


@dataclass(frozen=True)
class Hamiltonian:
    """Weighted sum of Pauli strings on a shared register.

    Duplicate operator words are merged at construction; terms whose merged
    coefficient is exactly zero are dropped.
    """

    n_qubits: int
    terms: tuple

    def __post_init__(self):
        merged: dict = {}
        order: list = []
        for term in self.terms:
            if not isinstance(term, PauliString):
                term = PauliString(*term)
            if term.n_qubits != self.n_qubits:
                raise ValueError(
                    f"Hamiltonian: term {term.operators!r} has {term.n_qubits} qubits, register has {self.n_qubits}"
                )
            if term.operators not in merged:
                order.append(term.operators)
            merged[term.operators] = merged.get(term.operators, 0.0) + term.coefficient
        kept = tuple(PauliString(merged[w], w) for w in order if merged[w] != 0.0)
        object.__setattr__(self, "terms", kept)

    def __len__(self) -> int:
        return len(self.terms)


def z_readout(n_qubits: int, qubit: int = 0) -> Hamiltonian:
    """Observable Z on one qubit, identity elsewhere."""
    word = "".join("Z" if q == qubit else "I" for q in range(n_qubits))
    return Hamiltonian(n_qubits, (PauliString(1.0, word),))


@functools.lru_cache(maxsize=256)
def _diagonal_values(hamiltonian: Hamiltonian) -> np.ndarray | None:
    """Diagonal of H when every term is built from I and Z only, else None.

    Cut-size and other Ising-type observables hit this fast path, turning the
    expectation into one dot product with the probability vector.
    """
    if any(set(t.operators) - {"I", "Z"} for t in hamiltonian.terms):
        return None
    n = hamiltonian.n_qubits
    basis = np.arange(1 << n, dtype=np.uint64)
    diag = np.zeros(1 << n)
    for term in hamiltonian.terms:
        signs = np.ones(1 << n)
        for q, op in enumerate(term.operators):
            if op == "Z":
                signs *= 1.0 - 2.0 * ((basis >> np.uint64(n - 1 - q)) & np.uint64(1)).astype(float)
        diag += term.coefficient * signs
    diag.flags.writeable = False
    return diag


def maxcut_hamiltonian(edges, n_vertices: int) -> Hamiltonian:
    """Cut-size observable: (1/2) I - (1/2) Z_i Z_j summed over edges,
    identity contributions merged into a single term."""
    terms = []
    n_edges = 0
    for u, v in edges:
        if u == v:
            raise ValueError(f"maxcut: self-loop edge ({u}, {v}) rejected")
        if not (0 <= u < n_vertices and 0 <= v < n_vertices):
            raise ValueError(f"maxcut: edge ({u}, {v}) outside vertex range [0, {n_vertices})")
        word = "".join("Z" if q in (u, v) else "I" for q in range(n_vertices))
        terms.append(PauliString(-0.5, word))
        n_edges += 1
    if n_edges:
        terms.insert(0, PauliString(0.5 * n_edges, "I" * n_vertices))
    return Hamiltonian(n_vertices, tuple(terms))


# ---------------------------------------------------------------------------
# States and gate application


@dataclass
class QuantumState:
    """Either a statevector (length 2^U) or a density matrix (2^U x 2^U)."""

    backend: str
    data: np.ndarray
    n_qubits: int

    @classmethod
    def zero_state(cls, n_qubits: int, backend: str = "statevector") -> "QuantumState":
        dim = 1 << n_qubits
        if backend == "statevector":
            vec = np.zeros(dim, dtype=complex)
            vec[0] = 1.0
            return cls("statevector", vec, n_qubits)
        if backend == "density-matrix":
            rho = np.zeros((dim, dim), dtype=complex)
            rho[0, 0] = 1.0
            return cls("density-matrix", rho, n_qubits)
        raise ValueError(f"unknown backend {backend!r}")

    def validate(self, tol: float = 1e-12) -> None:
        if self.backend == "statevector":
            norm = float(np.linalg.norm(self.data))
            if abs(norm - 1.0) > tol:
                raise ValueError(f"statevector norm drifted to {norm}")
        else:
            tr = complex(np.trace(self.data))
            if abs(tr - 1.0) > tol:
                raise ValueError(f"density matrix trace drifted to {tr}")
            if float(np.max(np.abs(self.data - self.data.conj().T))) > tol:
                raise ValueError("density matrix is not Hermitian")


def _apply_1q(vec: np.ndarray, mat: np.ndarray, axis: int, total: int,
              batch: int = 1) -> np.ndarray:
    """Apply a 2x2 matrix to one qubit axis of a flat state (or a contiguous
    batch of states: the batch dimension simply merges into the leading
    block of the reshape)."""
    pre = batch << axis
    post = 1 << (total - 1 - axis)
    v = vec.reshape(pre, 2, post)
    a = v[:, 0, :]
    b = v[:, 1, :]
    out = np.empty_like(v)
    np.multiply(mat[0, 0], a, out=out[:, 0, :])
    out[:, 0, :] += mat[0, 1] * b
    np.multiply(mat[1, 0], a, out=out[:, 1, :])
    out[:, 1, :] += mat[1, 1] * b
    return out.reshape(vec.shape)


def _two_axis_view(vec: np.ndarray, ax1: int, ax2: int, total: int, batch: int = 1):
    lo, hi = (ax1, ax2) if ax1 < ax2 else (ax2, ax1)
    pre = batch << lo
    mid = 1 << (hi - lo - 1)
    post = 1 << (total - 1 - hi)
    return vec.reshape(pre, 2, mid, 2, post), ax1 > ax2


def _apply_cnot(vec: np.ndarray, control: int, target: int, total: int,
                batch: int = 1) -> np.ndarray:
    v, swapped = _two_axis_view(vec, control, target, total, batch)
    # axis order in the view is (lo, hi); swapped means control is the hi axis
    if not swapped:
        tmp = v[:, 1, :, 0, :].copy()
        v[:, 1, :, 0, :] = v[:, 1, :, 1, :]
        v[:, 1, :, 1, :] = tmp
    else:
        tmp = v[:, 0, :, 1, :].copy()
        v[:, 0, :, 1, :] = v[:, 1, :, 1, :]
        v[:, 1, :, 1, :] = tmp
    return vec


@functools.lru_cache(maxsize=4096)
def _z_parity(total: int, qubit: int) -> np.ndarray:
    """Z eigenvalue (+1/-1) of `qubit` for every basis index."""
    basis = np.arange(1 << total, dtype=np.int64)
    parity = 1.0 - 2.0 * ((basis >> (total - 1 - qubit)) & 1).astype(float)
    parity.flags.writeable = False
    return parity


@functools.lru_cache(maxsize=4096)
def _zz_parity(total: int, q1: int, q2: int) -> np.ndarray:
    parity = _z_parity(total, q1) * _z_parity(total, q2)
    parity.flags.writeable = False
    return parity


_PARITY_CACHE_MAX_QUBITS = 16


def _apply_rz(vec: np.ndarray, qubit: int, theta: float, total: int,
              batch: int = 1) -> np.ndarray:
    if total > _PARITY_CACHE_MAX_QUBITS:
        return _apply_1q(vec, _rz(theta), qubit, total, batch)
    phase = np.exp(-0.5j * theta * _z_parity(total, qubit))
    v = vec.reshape(batch, 1 << total)
    v *= phase
    return vec


def _apply_rzz(vec: np.ndarray, q1: int, q2: int, theta: float, total: int,
               batch: int = 1) -> np.ndarray:
    if total > _PARITY_CACHE_MAX_QUBITS:
        # per-block phases on a two-axis view; avoids a 2^total parity table
        v, _ = _two_axis_view(vec, q1, q2, total, batch)
        minus, plus = np.exp(-0.5j * theta), np.exp(0.5j * theta)
        v[:, 0, :, 0, :] *= minus
        v[:, 1, :, 1, :] *= minus
        v[:, 0, :, 1, :] *= plus
        v[:, 1, :, 0, :] *= plus
        return vec
    phase = np.exp(-0.5j * theta * _zz_parity(total, q1, q2))
    v = vec.reshape(batch, 1 << total)
    v *= phase
    return vec


def _gate_unitary_1q(kind: str, theta: float) -> np.ndarray:
    if kind in _ROTATION:
        return _ROTATION[kind](theta)
    if kind == "h":
        return _H_MAT
    if kind in ("x", "y", "z"):
        return _PAULI[kind.upper()]
    raise ValueError(f"not a single-qubit gate kind: {kind!r}")


def _apply_gate_vec(vec: np.ndarray, gate: Gate, theta: float, total: int,
                    batch: int = 1) -> np.ndarray:
    if gate.kind == "cnot":
        return _apply_cnot(vec, gate.qubits[0], gate.qubits[1], total, batch)
    if gate.kind == "rzz":
        return _apply_rzz(vec, gate.qubits[0], gate.qubits[1], theta, total, batch)
    if gate.kind == "rz":
        return _apply_rz(vec, gate.qubits[0], theta, total, batch)
    return _apply_1q(vec, _gate_unitary_1q(gate.kind, theta), gate.qubits[0], total, batch)


def _apply_gate_vec_inverse(vec: np.ndarray, gate: Gate, theta: float, total: int,
                            batch: int = 1) -> np.ndarray:
    if gate.kind == "cnot":
        return _apply_cnot(vec, gate.qubits[0], gate.qubits[1], total, batch)
    if gate.kind == "rzz":
        return _apply_rzz(vec, gate.qubits[0], gate.qubits[1], -theta, total, batch)
    if gate.kind == "rz":
        return _apply_rz(vec, gate.qubits[0], -theta, total, batch)
    if gate.kind in _ROTATION:
        return _apply_1q(vec, _ROTATION[gate.kind](-theta), gate.qubits[0], total, batch)
    mat = _gate_unitary_1q(gate.kind, theta)
    return _apply_1q(vec, mat.conj().T, gate.qubits[0], total, batch)


def _apply_gate_rho(vec: np.ndarray, gate: Gate, theta: float, n: int) -> np.ndarray:
    # rho -> U rho U^dagger on the flattened (2^n x 2^n) matrix: rows carry U
    # (axes 0..n-1), columns carry conj(U) (axes n..2n-1).
    total = 2 * n
    if gate.kind == "cnot":
        c, t = gate.qubits
        vec = _apply_cnot(vec, c, t, total)
        return _apply_cnot(vec, n + c, n + t, total)
    if gate.kind == "rzz":
        q1, q2 = gate.qubits
        vec = _apply_rzz(vec, q1, q2, theta, total)
        return _apply_rzz(vec, n + q1, n + q2, -theta, total)
    mat = _gate_unitary_1q(gate.kind, theta)
    vec = _apply_1q(vec, mat, gate.qubits[0], total)
    return _apply_1q(vec, mat.conj(), n + gate.qubits[0], total)


def _check_params(circuit: Circuit, params) -> np.ndarray:
    params = np.asarray(params, dtype=float).ravel()
    if params.shape[0] != circuit.n_params:
        raise ValueError(
            f"parameter vector has length {params.shape[0]}, circuit expects {circuit.n_params}"
        )
    return params


def simulate_state(circuit, params, angle_overrides=None) -> QuantumState:
    """Run the circuit on |0...0> and return the final statevector."""
    circuit = _as_circuit(circuit)
    params = _check_params(circuit, params)
    overrides = angle_overrides or {}
    n = circuit.n_qubits
    vec = np.zeros(1 << n, dtype=complex)
    vec[0] = 1.0
    for i, gate in enumerate(circuit.gates):
        theta = gate.resolved_angle(params, overrides.get(i, 0.0))
        vec = _apply_gate_vec(vec, gate, theta, n)
    state = QuantumState("statevector", vec, n)
    norm = float(np.linalg.norm(state.data))
    if abs(norm - 1.0) > 1e-9:
        raise RuntimeError(f"statevector norm drifted to {norm}")
    return state


def _apply_pauli_word(vec: np.ndarray, word: str, total: int, axis_offset: int = 0,
                      batch: int = 1) -> np.ndarray:
    """Apply a Pauli word to a flat state (or batch); returns a fresh array
    when any non-identity letter is present, else the input unchanged."""
    for q, op in enumerate(word):
        if op != "I":
            vec = _apply_1q(vec, _PAULI[op], axis_offset + q, total, batch)
    return vec


def dedup_events(events) -> tuple:
    """Group sampled trajectory events into unique realizations with weights.

    Most trajectories at small p carry no insertions, so averaging over the
    deduplicated realizations is much cheaper than over raw trajectories and
    numerically identical."""
    groups: dict = {}
    for row in events:
        key = tuple(row)
        groups[key] = groups.get(key, 0) + 1
    realizations = sorted(groups)
    weights = np.array([groups[k] for k in realizations], dtype=float)
    return [list(k) for k in realizations], weights


def expectation(state: QuantumState, hamiltonian: Hamiltonian) -> float:
    """<psi|H|psi> or tr(rho H); tiny imaginary residue is checked and dropped."""
    if state.n_qubits != hamiltonian.n_qubits:
        raise ValueError(
            f"state has {state.n_qubits} qubits, Hamiltonian has {hamiltonian.n_qubits}"
        )
    n = state.n_qubits
    total = 0.0 + 0.0j
    diag = _diagonal_values(hamiltonian)
    if state.backend == "statevector":
        psi = state.data.reshape(-1)
        if diag is not None:
            total = complex(np.dot(np.abs(psi) ** 2, diag))
        else:
            for term in hamiltonian.terms:
                applied = _apply_pauli_word(psi, term.operators, n)
                total += term.coefficient * np.vdot(psi, applied)
    elif state.backend == "density-matrix":
        dim = 1 << n
        if diag is not None:
            total = complex(np.dot(np.diag(state.data.reshape(dim, dim)), diag))
        else:
            rho = state.data.reshape(-1)
            for term in hamiltonian.terms:
                # tr(P rho): apply P to the row indices, then trace.
                applied = _apply_pauli_word(rho, term.operators, 2 * n)
                total += term.coefficient * np.trace(applied.reshape(dim, dim))
    else:
        raise ValueError(f"unknown backend {state.backend!r}")
    scale = max(1.0, sum(abs(t.coefficient) for t in hamiltonian.terms))
    if abs(total.imag) > 1e-10 * scale:
        raise RuntimeError(f"expectation has imaginary residue {total.imag}")
    return float(total.real)


# ---------------------------------------------------------------------------
# Noise


@dataclass(frozen=True)
class NoiseSpec:
    """Per-gate depolarizing rate, additive Gaussian measurement noise, and
    the trajectory count for the sampling backend."""

    depolarizing: float = 0.0
    measurement_sigma: float = 0.0
    trajectories: int = 1000

    def __post_init__(self):
        if not 0.0 <= self.depolarizing <= 1.0:
            raise ValueError(f"depolarizing rate must be in [0, 1], got {self.depolarizing}")
        if self.measurement_sigma < 0.0:
            raise ValueError(f"measurement_sigma must be >= 0, got {self.measurement_sigma}")
        if self.trajectories < 1:
            raise ValueError(f"trajectories must be >= 1, got {self.trajectories}")

    @property
    def is_noiseless(self) -> bool:
        return self.depolarizing == 0.0 and self.measurement_sigma == 0.0


def _depolarize_flat(rho: np.ndarray, qubit: int, p: float, n: int) -> np.ndarray:
    out = (1.0 - p) * rho
    for op in ("X", "Y", "Z"):
        mat = _PAULI[op]
        conj = _apply_1q(_apply_1q(rho, mat, qubit, 2 * n), mat.conj(), n + qubit, 2 * n)
        out += (p / 3.0) * conj
    return out


def apply_depolarizing(state: QuantumState, qubit: int, p: float) -> QuantumState:
    """Single-qubit depolarizing channel rho -> (1-p) rho + (p/3)(XrhoX + YrhoY + ZrhoZ)."""
    if state.backend != "density-matrix":
        raise ValueError("apply_depolarizing requires the density-matrix backend")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"depolarizing rate must be in [0, 1], got {p}")
    if not 0 <= qubit < state.n_qubits:
        raise ValueError(f"qubit {qubit} out of range")
    n = state.n_qubits
    rho = _depolarize_flat(state.data.reshape(-1).copy(), qubit, p, n)
    dim = 1 << n
    return QuantumState("density-matrix", rho.reshape(dim, dim), n)


def _density_matrix_expectation(circuit: Circuit, params, hamiltonian, p: float,
                                angle_overrides=None) -> float:
    n = circuit.n_qubits
    if n > DENSITY_MATRIX_MAX_QUBITS:
        raise ValueError(
            f"density-matrix backend capped at {DENSITY_MATRIX_MAX_QUBITS} qubits, circuit has {n}"
        )
    overrides = angle_overrides or {}
    rho = np.zeros(1 << (2 * n), dtype=complex)
    rho[0] = 1.0
    for i, gate in enumerate(circuit.gates):
        theta = gate.resolved_angle(params, overrides.get(i, 0.0))
        rho = _apply_gate_rho(rho, gate, theta, n)
        if p > 0.0:
            for q in gate.qubits:
                rho = _depolarize_flat(rho, q, p, n)
    dim = 1 << n
    state = QuantumState("density-matrix", rho.reshape(dim, dim), n)
    return expectation(state, hamiltonian)


def _gate_qubit_slots(circuit: Circuit) -> list:
    slots = []
    for i, gate in enumerate(circuit.gates):
        for q in gate.qubits:
            slots.append((i, q))
    return slots


def sample_trajectory_events(circuit, p: float, n_traj: int, rng: np.random.Generator) -> list:
    """Random Pauli insertions for each trajectory: a list (one entry per
    trajectory) of (gate index, qubit, pauli letter) insertion events."""
    circuit = _as_circuit(circuit)
    slots = _gate_qubit_slots(circuit)
    hits = rng.random((n_traj, len(slots))) < p
    picks = rng.integers(0, 3, size=(n_traj, len(slots)))
    letters = "XYZ"
    events = []
    for t in range(n_traj):
        row = []
        for s in np.nonzero(hits[t])[0]:
            gi, q = slots[s]
            row.append((gi, q, letters[picks[t, s]]))
        events.append(row)
    return events


def trajectory_variant_circuits(circuit, events) -> list:
    """Deduplicate trajectory noise realizations into weighted pure circuits.

    Each realization's Pauli insertions become fixed gates, so the variant is
    an ordinary unitary circuit: expectation values AND adjoint gradients of
    the trajectory-averaged objective are exact weighted means over variants.
    Returns [(circuit, weight), ...] in a deterministic order; weights sum to
    the number of trajectories.
    """
    circuit = _as_circuit(circuit)
    groups: dict = {}
    for row in events:
        key = tuple(row)
        groups[key] = groups.get(key, 0) + 1
    variants = []
    for key in sorted(groups):
        by_gate: dict = {}
        for gi, q, letter in key:
            by_gate.setdefault(gi, []).append((q, letter))
        gates = []
        for i, gate in enumerate(circuit.gates):
            gates.append(gate)
            for q, letter in by_gate.get(i, ()):
                gates.append(Gate(letter.lower(), (q,)))
        variants.append((Circuit(circuit.n_qubits, tuple(gates), circuit.n_params), groups[key]))
    return variants


def _trajectory_state(circuit: Circuit, params, events, overrides) -> np.ndarray:
    n = circuit.n_qubits
    vec = np.zeros(1 << n, dtype=complex)
    vec[0] = 1.0
    by_gate: dict = {}
    for gi, q, letter in events:
        by_gate.setdefault(gi, []).append((q, letter))
    for i, gate in enumerate(circuit.gates):
        theta = gate.resolved_angle(params, overrides.get(i, 0.0))
        vec = _apply_gate_vec(vec, gate, theta, n)
        for q, letter in by_gate.get(i, ()):
            vec = _apply_1q(vec, _PAULI[letter], q, n)
    return vec


def _trajectory_expectation(circuit: Circuit, params, hamiltonian, noise: NoiseSpec,
                            rng: np.random.Generator, angle_overrides=None,
                            events=None) -> float:
    overrides = angle_overrides or {}
    if events is None:
        events = sample_trajectory_events(circuit, noise.depolarizing, noise.trajectories, rng)
    clean = sum(1 for row in events if not row)
    total = 0.0
    if clean:
        vec = _trajectory_state(circuit, params, [], overrides)
        state = QuantumState("statevector", vec, circuit.n_qubits)
        total += clean * expectation(state, hamiltonian)
    for row in events:
        if not row:
            continue
        vec = _trajectory_state(circuit, params, row, overrides)
        state = QuantumState("statevector", vec, circuit.n_qubits)
        total += expectation(state, hamiltonian)
    return total / len(events)


def noisy_expectation(circuit, params, hamiltonian, noise: NoiseSpec,
                      backend: str = "density-matrix",
                      rng: np.random.Generator | None = None,
                      angle_overrides=None,
                      trajectory_events=None) -> float:
    """<H> under per-gate depolarizing noise plus optional measurement noise.

    The density-matrix backend applies the exact channel after every gate on
    each of the gate's qubits.  The trajectory backend inserts a uniformly
    random Pauli with probability p after each gate per qubit and averages
    over ``noise.trajectories`` statevector runs (unbiased for the same
    channel).  ``trajectory_events`` pins the noise realizations, making the
    result a deterministic function of the parameters.
    """
    circuit = _as_circuit(circuit)
    params = _check_params(circuit, params)
    if noise.depolarizing == 0.0:
        value = expectation(simulate_state(circuit, params, angle_overrides), hamiltonian)
    elif backend == "density-matrix":
        value = _density_matrix_expectation(circuit, params, hamiltonian,
                                            noise.depolarizing, angle_overrides)
    elif backend == "trajectory":
        if rng is None and trajectory_events is None:
            raise ValueError("trajectory backend needs an rng or pre-sampled events")
        value = _trajectory_expectation(circuit, params, hamiltonian, noise, rng,
                                        angle_overrides, trajectory_events)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    if noise.measurement_sigma > 0.0:
        if rng is None:
            raise ValueError("measurement noise needs an rng")
        value += float(rng.normal(0.0, noise.measurement_sigma))
    return value


# ---------------------------------------------------------------------------
# Dense reference


def hamiltonian_matrix(hamiltonian: Hamiltonian) -> np.ndarray:
    """Dense Hermitian matrix of H (2^U x 2^U)."""
    n = hamiltonian.n_qubits
    if n > EXACT_DIAG_MAX_QUBITS:
        raise ValueError(f"dense matrix capped at {EXACT_DIAG_MAX_QUBITS} qubits, got {n}")
    dim = 1 << n
    out = np.zeros((dim, dim), dtype=complex)
    for term in hamiltonian.terms:
        mat = np.array([[term.coefficient]], dtype=complex)
        for op in term.operators:
            mat = np.kron(mat, _PAULI[op])
        out += mat
    return out


def exact_ground_energy(hamiltonian: Hamiltonian) -> float:
    """Minimum eigenvalue of H by dense Hermitian diagonalization."""
    return float(np.linalg.eigvalsh(hamiltonian_matrix(hamiltonian))[0])


# ---------------------------------------------------------------------------
# Hamiltonian text format: "<coefficient> <pauli-word>" per line, '#' comments.


def parse_hamiltonian(text: str) -> Hamiltonian:
    terms = []
    width = None
    for ln_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"hamiltonian line {ln_no}: expected '<coefficient> <pauli-word>', got {raw!r}")
        try:
            coeff = float(parts[0])
        except ValueError as exc:
            raise ValueError(f"hamiltonian line {ln_no}: bad coefficient {parts[0]!r}") from exc
        word = parts[1].upper()
        if width is None:
            width = len(word)
        elif len(word) != width:
            raise ValueError(
                f"hamiltonian line {ln_no}: word {word!r} has length {len(word)}, expected {width}"
            )
        terms.append(PauliString(coeff, word))
    if width is None:
        raise ValueError("hamiltonian file has no terms")
    return Hamiltonian(width, tuple(terms))


def format_hamiltonian(hamiltonian: Hamiltonian) -> str:
    lines = [f"{term.coefficient:.17g} {term.operators}" for term in hamiltonian.terms]
    return "\n".join(lines) + "\n"


def load_hamiltonian(path) -> Hamiltonian:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_hamiltonian(fh.read())


def save_hamiltonian(hamiltonian: Hamiltonian, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_hamiltonian(hamiltonian))
