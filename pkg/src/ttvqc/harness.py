"""End-to-end experiment drivers: Max-Cut, VQE, and binary classification,
plus the data generation and ingestion they need.

Every driver runs a TT-hypernetwork arm against a directly parameterized arm
under the same evaluation budget and returns an ExperimentResult whose
aggregate is recomputable from its per-instance rows."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from . import qsim
from .graddiff import ensemble_value, ensemble_value_and_grad
from .models import DirectCircuitModel, TTCircuitModel
from .optim import adam_init, adam_step, dfo_minimize
from .qsim import (
    Circuit,
    Gate,
    Hamiltonian,
    NoiseSpec,
    PauliString,
    build_ansatz,
    exact_ground_energy,
    maxcut_hamiltonian,
    sample_trajectory_events,
    z_readout,
)
from .rng import spawn_seeds, stream
from .ttcore import TTGenerator, TTSpec, fit_output_length, tt_forward

__all__ = [
    "Graph",
    "Dataset",
    "ExperimentResult",
    "gen_erdos_renyi",
    "graph_features",
    "brute_force_maxcut",
    "qaoa_circuit",
    "transverse_field_ising",
    "run_maxcut",
    "run_vqe",
    "synth_quantum_dot",
    "load_dataset",
    "run_classifier",
    "parse_graph",
    "format_graph",
    "load_graph",
    "save_graph",
]


# ---------------------------------------------------------------------------
# Graphs


@dataclass(frozen=True)
class Graph:
    n: int
    edges: tuple

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("graph needs at least one vertex")
        seen = set()
        norm = []
        for u, v in self.edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValueError(f"self-loop edge ({u}, {v})")
            if u > v:
                u, v = v, u
            if not 0 <= u < v < self.n:
                raise ValueError(f"edge ({u}, {v}) outside vertex range [0, {self.n})")
            if (u, v) in seen:
                continue
            seen.add((u, v))
            norm.append((u, v))
        object.__setattr__(self, "edges", tuple(sorted(norm)))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=int)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg


def gen_erdos_renyi(n: int, p: float, seed: int) -> Graph:
    """G(n, p): each unordered pair included independently with probability p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"edge probability must be in [0, 1], got {p}")
    rng = stream(seed, "erdos-renyi", n)
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < p:
                edges.append((u, v))
    return Graph(n, tuple(edges))


def graph_features(graph: Graph, length: int | None = None) -> np.ndarray:
    """Normalized degree histogram (n bins, counts/n), zero-padded or
    truncated to ``length`` when given."""
    deg = graph.degrees()
    hist = np.bincount(deg, minlength=graph.n).astype(float) / graph.n
    hist = hist[: graph.n]
    if length is None:
        return hist
    if length <= hist.shape[0]:
        return hist[:length].copy()
    out = np.zeros(length)
    out[: hist.shape[0]] = hist
    return out


def brute_force_maxcut(graph: Graph) -> int:
    """Exhaustive maximum cut; vertex assignment bit order matches the
    simulator's basis convention (vertex u = bit n-1-u)."""
    if graph.n > 20:
        raise ValueError(f"brute force capped at 20 vertices, got {graph.n}")
    return int(np.max(basis_cut_sizes(graph)))


def basis_cut_sizes(graph: Graph) -> np.ndarray:
    """Cut size of every computational-basis assignment (length 2^n)."""
    n = graph.n
    assignments = np.arange(1 << n, dtype=np.uint32)
    total = np.zeros(1 << n, dtype=np.int64)
    for u, v in graph.edges:
        bu = (assignments >> (n - 1 - u)) & 1
        bv = (assignments >> (n - 1 - v)) & 1
        total += bu != bv
    return total


def parse_graph(text: str) -> Graph:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ValueError("graph file is empty")
    try:
        n = int(lines[0])
    except ValueError as exc:
        raise ValueError(f"graph file: first line must be the vertex count, got {lines[0]!r}") from exc
    edges = []
    for ln_no, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"graph file line {ln_no}: expected 'u v', got {line!r}")
        edges.append((int(parts[0]), int(parts[1])))
    return Graph(n, tuple(edges))


def format_graph(graph: Graph) -> str:
    lines = [str(graph.n)] + [f"{u} {v}" for u, v in graph.edges]
    return "\n".join(lines) + "\n"


def load_graph(path) -> Graph:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_graph(fh.read())


def save_graph(graph: Graph, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_graph(graph))


# ---------------------------------------------------------------------------
# Results


@dataclass(frozen=True)
class ExperimentResult:
    """Per-instance rows plus aggregates; every aggregate key ``mean_<col>``
    must equal the recomputed mean of that row column."""

    kind: str
    rows: tuple
    aggregate: dict
    seed: int
    config_fingerprint: str = ""

    def verify_aggregate(self) -> None:
        for key, value in self.aggregate.items():
            if not key.startswith("mean_"):
                continue
            col = key[len("mean_"):]
            vals = [row[col] for row in self.rows if col in row and row[col] is not None]
            if not vals:
                continue
            recomputed = float(np.mean(vals))
            if not math.isclose(recomputed, value, rel_tol=0, abs_tol=1e-12 * max(1.0, abs(value))):
                raise AssertionError(f"aggregate {key}={value} != recomputed {recomputed}")


def _mean(rows, col) -> float:
    return float(np.mean([row[col] for row in rows]))


# ---------------------------------------------------------------------------
# Budgeted derivative-free optimization shared by the Max-Cut and VQE arms


def _optimize_exact_budget(objective, x0, budget, rho_begin, rho_end, restart_rng,
                           restart_sampler=None):
    """Minimize with dfo_minimize until the evaluation budget is consumed
    exactly; returns (best_x, best_f, evals).

    When a run converges with budget left, a fresh start point is drawn (from
    ``restart_sampler`` if given, else a perturbation of the incumbent) so
    leftover evaluations buy exploration instead of going unused."""
    n = len(x0)
    used = 0
    best_x = np.asarray(x0, dtype=float).copy()
    best_f = math.inf
    start = best_x
    while used < budget:
        remaining = budget - used
        if remaining < n + 2:
            for _ in range(remaining):
                probe = best_x + 0.3 * rho_begin * restart_rng.standard_normal(n)
                f = float(objective(probe))
                used += 1
                if f < best_f:
                    best_f, best_x = f, probe
            break
        res = dfo_minimize(objective, start, rho_begin, rho_end, remaining)
        used += res.evaluations
        if res.fun < best_f:
            best_f, best_x = res.fun, res.x
        if restart_sampler is not None:
            start = restart_sampler(restart_rng)
        else:
            start = best_x + 0.5 * rho_begin * restart_rng.standard_normal(n)
    return best_x, best_f, used


# ---------------------------------------------------------------------------
# Max-Cut


def qaoa_circuit(graph: Graph, depth: int) -> Circuit:
    """Canonical alternating ansatz: |+>^n, then depth rounds of the cut-phase
    layer exp(-i gamma (1 - Z_u Z_v)/2) per edge and the mixer exp(-i beta X)
    per qubit.  Slots 0..depth-1 are the gammas, depth..2*depth-1 the betas."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    gates = [Gate("h", (q,)) for q in range(graph.n)]
    for layer in range(depth):
        for u, v in graph.edges:
            gates.append(Gate("rzz", (u, v), slot=layer, coeff=-1.0))
        for q in range(graph.n):
            gates.append(Gate("rx", (q,), slot=depth + layer, coeff=2.0))
    return Circuit(graph.n, tuple(gates), 2 * depth)


def _default_output_dims(target: int) -> tuple:
    best = 1
    for a in range(1, int(math.isqrt(target)) + 1):
        if target % a == 0:
            best = a
    return (best, target // best)


class _SimCounter:
    """Counts statevector passes so the two arms' budgets stay provably equal."""

    def __init__(self):
        self.sims = 0


_FULL_VALUE_EVERY = 2  # cadence of full-ensemble objective evaluations


def _ascend_adam(circuit, realizations, weights, hamiltonian, angles_of, grad_chain,
                 x0, steps, lr, measurement_sigma, noise_rng, counter: _SimCounter,
                 grad_realizations: str = "anchor"):
    """Adam ascent on the trajectory-ensemble objective; returns the best
    full-ensemble value seen.

    ``angles_of`` maps the trainable vector to circuit angles and
    ``grad_chain`` pulls the angle gradient back to the trainables (identity
    for the direct arm).  For large ensembles the per-step gradient comes
    from the heaviest realization (``anchor``, usually the clean trajectory:
    at small p it matches the ensemble gradient to O(p) and keeps training
    deterministic and cheap) or from the full ensemble (``full``); reported
    values always come from the full ensemble.  Optional Gaussian
    measurement noise perturbs the angle gradient, never the reported
    values."""
    if grad_realizations not in ("anchor", "full"):
        raise ValueError(f"grad_realizations must be 'anchor' or 'full', got {grad_realizations!r}")
    vec = np.asarray(x0, dtype=float).copy()
    state = adam_init(vec.size, lr=lr)
    best = -math.inf
    weights = np.asarray(weights, dtype=float)
    n_real = len(realizations)
    anchor = int(np.argmax(weights))
    reduced = grad_realizations == "anchor" and n_real > 1

    for step_idx in range(steps):
        angles = angles_of(vec)
        if reduced:
            counter.sims += 3
            _, grad_angles = ensemble_value_and_grad(circuit, angles, hamiltonian,
                                                     [realizations[anchor]], np.ones(1))
            if step_idx % _FULL_VALUE_EVERY == 0:
                counter.sims += n_real
                best = max(best, ensemble_value(circuit, angles, hamiltonian,
                                                realizations, weights))
        else:
            counter.sims += 3 * n_real
            value, grad_angles = ensemble_value_and_grad(circuit, angles, hamiltonian,
                                                         realizations, weights)
            best = max(best, value)
        if measurement_sigma > 0.0:
            grad_angles = grad_angles + noise_rng.normal(0.0, measurement_sigma,
                                                         size=grad_angles.shape)
        grad_vec = grad_chain(vec, grad_angles)
        state, vec = adam_step(state, vec, -grad_vec)
    counter.sims += n_real
    best = max(best, ensemble_value(circuit, angles_of(vec), hamiltonian,
                                    realizations, weights))
    return best


def maxcut_instance(
    graph: Graph,
    ansatz: str = "qaoa",
    qaoa_depth: int = 3,
    hw_layers: int = 2,
    optimizer: str = "adam",
    budget: int = 150,
    lr: float = 0.05,
    depolarizing: float = 0.0,
    measurement_sigma: float = 0.0,
    trajectories: int = 200,
    grad_realizations: str = "anchor",
    seed: int = 0,
    instance: int = 0,
    tt_input_dims=(2, 5),
    tt_output_dims=None,
    tt_ranks=(1, 3, 1),
    tt_init_scale: float = 1.0,
    direct_init_scale: float = 1.0,
    rho_begin: float = 0.4,
    rho_end: float = 1e-5,
) -> dict:
    """Optimize one graph with both arms under the same budget; returns a row.

    With Adam, ``budget`` counts optimizer steps and both arms pay the same
    simulator passes per step because they share the circuit.  With ``dfo``
    it counts objective evaluations, consumed exactly.  Under depolarizing
    noise the objective is the average over a trajectory noise realization
    fixed per instance and shared by both arms; each realization is a pure
    circuit, so gradients stay exact."""
    if ansatz not in ("qaoa", "hardware"):
        raise ValueError(f"ansatz must be 'qaoa' or 'hardware', got {ansatz!r}")
    if optimizer not in ("adam", "dfo"):
        raise ValueError(f"optimizer must be 'adam' or 'dfo', got {optimizer!r}")
    i = instance
    hamiltonian = maxcut_hamiltonian(graph.edges, graph.n)
    if ansatz == "qaoa":
        circuit = qaoa_circuit(graph, qaoa_depth)
    else:
        circuit = build_ansatz(graph.n, hw_layers).to_circuit()
    n_params = circuit.n_params
    if depolarizing > 0.0:
        events = sample_trajectory_events(
            circuit, depolarizing, trajectories, stream(seed, "maxcut-noise", i)
        )
        realizations, weights = qsim.dedup_events(events)
    else:
        realizations, weights = [[]], np.ones(1)

    out_dims = tuple(tt_output_dims) if tt_output_dims else _default_output_dims(n_params)
    spec = TTSpec(tt_input_dims, out_dims, tt_ranks)
    features = graph_features(graph, length=spec.input_size)
    gen0 = TTGenerator.initialize(spec, stream(seed, "maxcut-tt-init", i), scale=tt_init_scale)
    x0_direct = direct_init_scale * stream(seed, "maxcut-direct-init", i).standard_normal(n_params)
    counters = {"direct": _SimCounter(), "tt": _SimCounter()}

    if optimizer == "adam":
        from .graddiff import chain_to_cores
        from .ttcore import spread_fit_gradient, tt_jacobian

        h_direct = _ascend_adam(
            circuit, realizations, weights, hamiltonian,
            angles_of=lambda v: v,
            grad_chain=lambda v, ga: ga,
            x0=x0_direct, steps=budget, lr=lr,
            measurement_sigma=measurement_sigma,
            noise_rng=stream(seed, "maxcut-direct-meas", i),
            counter=counters["direct"],
            grad_realizations=grad_realizations,
        )

        def tt_angles(vec):
            gen = gen0.with_trainables(vec)
            return fit_output_length(tt_forward(gen, features), n_params)

        def tt_chain(vec, grad_angles):
            gen = gen0.with_trainables(vec)
            out_len = gen.spec.output_size
            return chain_to_cores(spread_fit_gradient(grad_angles, out_len),
                                  tt_jacobian(gen, features))

        h_tt = _ascend_adam(
            circuit, realizations, weights, hamiltonian,
            angles_of=tt_angles,
            grad_chain=tt_chain,
            x0=gen0.trainable_vector(), steps=budget, lr=lr,
            measurement_sigma=measurement_sigma,
            noise_rng=stream(seed, "maxcut-tt-meas", i),
            counter=counters["tt"],
            grad_realizations=grad_realizations,
        )
    else:
        def neg_cut(params, counter=counters["direct"]):
            counter.sims += len(realizations)
            return -ensemble_value(circuit, params, hamiltonian, realizations, weights)

        _, f_direct, _ = _optimize_exact_budget(
            neg_cut, x0_direct, budget, rho_begin, rho_end,
            stream(seed, "maxcut-direct-restarts", i),
        )
        h_direct = -f_direct

        def neg_cut_tt(vec, counter=counters["tt"]):
            counter.sims += len(realizations)
            gen = gen0.with_trainables(vec)
            params = fit_output_length(tt_forward(gen, features), n_params)
            return -ensemble_value(circuit, params, hamiltonian, realizations, weights)

        _, f_tt, _ = _optimize_exact_budget(
            neg_cut_tt, gen0.trainable_vector(), budget, rho_begin, rho_end,
            stream(seed, "maxcut-tt-restarts", i),
        )
        h_tt = -f_tt

    improvement = h_tt - h_direct
    denom = max(abs(h_direct), 1e-12)
    return {
        "graph": i,
        "n_edges": graph.n_edges,
        "best_cut": brute_force_maxcut(graph) if graph.n <= 20 else None,
        "h_direct": h_direct,
        "h_tt": h_tt,
        "improvement": improvement,
        "improvement_pct": 100.0 * improvement / denom,
        "evals_direct": counters["direct"].sims,
        "evals_tt": counters["tt"].sims,
    }


def run_maxcut(
    n: int = 12,
    edge_prob: float = 0.5,
    num_graphs: int = 10,
    seed: int = 0,
    **instance_kwargs,
) -> ExperimentResult:
    """Run maxcut_instance over seeded random graphs and aggregate the rows."""
    graph_seeds = spawn_seeds(seed, num_graphs, "maxcut-graphs")
    rows = []
    for i in range(num_graphs):
        graph = gen_erdos_renyi(n, edge_prob, graph_seeds[i])
        rows.append(maxcut_instance(graph, seed=seed, instance=i, **instance_kwargs))
    aggregate = {
        "mean_h_direct": _mean(rows, "h_direct"),
        "mean_h_tt": _mean(rows, "h_tt"),
        "mean_improvement": _mean(rows, "improvement"),
        "mean_improvement_pct": _mean(rows, "improvement_pct"),
        "wins": sum(1 for row in rows if row["improvement"] > 0),
        "num_graphs": num_graphs,
        "budget": instance_kwargs.get("budget", 150),
        "optimizer": instance_kwargs.get("optimizer", "adam"),
        "equal_budgets": all(row["evals_direct"] == row["evals_tt"] for row in rows),
    }
    result = ExperimentResult("maxcut", tuple(rows), aggregate, seed)
    result.verify_aggregate()
    return result


# ---------------------------------------------------------------------------
# VQE


def transverse_field_ising(n: int, coupling: float = 1.0, field: float = 1.0) -> Hamiltonian:
    """Open-chain transverse-field Ising model: -J sum Z_i Z_{i+1} - h sum X_i."""
    terms = []
    for i in range(n - 1):
        word = "".join("Z" if q in (i, i + 1) else "I" for q in range(n))
        terms.append(PauliString(-coupling, word))
    for i in range(n):
        word = "".join("X" if q == i else "I" for q in range(n))
        terms.append(PauliString(-field, word))
    return Hamiltonian(n, tuple(terms))


def run_vqe(
    hamiltonian: Hamiltonian | None = None,
    layers: int = 2,
    budget: int = 500,
    depolarizing: float = 0.0,
    num_seeds: int = 1,
    seed: int = 0,
    tt_output_dims=None,
    tt_ranks=(1, 2, 1),
    tt_bias_trainable: bool = False,
    tt_init_scale: float = 1.0,
    direct_init_scale: float = 0.1,
    rho_begin: float = 0.4,
    rho_end: float = 1e-6,
    check_variational: bool = True,
) -> ExperimentResult:
    """Minimize <H> with TT-generated vs direct ansatz parameters.

    Defaults to the built-in 2-qubit transverse-field Ising model.  The TT
    arm uses the pure-tensor form (trivial input of length one, bias frozen
    at zero unless requested), so the angle vector *is* the flattened TT
    tensor and the trainable count stays comparable to the direct arm's.
    Every energy evaluation is checked against the variational bound when
    requested."""
    if hamiltonian is None:
        hamiltonian = transverse_field_ising(2)
    n_qubits = hamiltonian.n_qubits
    circuit = build_ansatz(n_qubits, layers).to_circuit()
    n_params = circuit.n_params
    exact = exact_ground_energy(hamiltonian)
    noise = NoiseSpec(depolarizing, 0.0, 1)
    if depolarizing > 0.0 and n_qubits > qsim.DENSITY_MATRIX_MAX_QUBITS:
        raise ValueError(
            f"noisy VQE uses the density-matrix backend (max {qsim.DENSITY_MATRIX_MAX_QUBITS} qubits)"
        )

    def energy(params):
        if depolarizing == 0.0:
            value = qsim.expectation(qsim.simulate_state(circuit, params), hamiltonian)
        else:
            value = qsim.noisy_expectation(circuit, params, hamiltonian, noise,
                                           backend="density-matrix")
        if check_variational and value < exact - 1e-9:
            raise AssertionError(f"variational principle violated: {value} < {exact}")
        return value

    out_dims = tuple(tt_output_dims) if tt_output_dims else _default_output_dims(n_params)
    trivial_input = np.ones(1)
    rows = []
    for s in range(num_seeds):
        x0 = direct_init_scale * stream(seed, "vqe-direct-init", s).standard_normal(n_params)
        _, e_direct, evals_direct = _optimize_exact_budget(
            energy, x0, budget, rho_begin, rho_end, stream(seed, "vqe-direct-restarts", s),
            restart_sampler=lambda rng: direct_init_scale * rng.standard_normal(n_params),
        )

        spec = TTSpec((1, 1), out_dims, tt_ranks)
        gen0 = TTGenerator.initialize(spec, stream(seed, "vqe-tt-init", s), scale=tt_init_scale)
        core_len = spec.core_param_count

        def to_full(vec):
            if tt_bias_trainable:
                return vec
            return np.concatenate([vec, np.zeros(spec.bias_length)])

        def energy_tt(vec):
            gen = gen0.with_trainables(to_full(vec))
            params = fit_output_length(tt_forward(gen, trivial_input), n_params)
            return energy(params)

        x0_tt = gen0.trainable_vector()
        if not tt_bias_trainable:
            x0_tt = x0_tt[:core_len]

        def tt_sampler(rng, dim=x0_tt.size):
            vec = TTGenerator.initialize(spec, rng, scale=tt_init_scale).trainable_vector()
            return vec[:dim]

        _, e_tt, evals_tt = _optimize_exact_budget(
            energy_tt, x0_tt, budget, rho_begin, rho_end,
            stream(seed, "vqe-tt-restarts", s),
            restart_sampler=tt_sampler,
        )
        rows.append({
            "seed_index": s,
            "energy_direct": e_direct,
            "energy_tt": e_tt,
            "error_direct": e_direct - exact,
            "error_tt": e_tt - exact,
            "tt_won": 1 if e_tt - exact <= e_direct - exact else 0,
            "params_direct": n_params,
            "params_tt": int(x0_tt.size),
            "evals_direct": evals_direct,
            "evals_tt": evals_tt,
        })
    aggregate = {
        "exact_energy": exact,
        "mean_energy_direct": _mean(rows, "energy_direct"),
        "mean_energy_tt": _mean(rows, "energy_tt"),
        "mean_error_direct": _mean(rows, "error_direct"),
        "mean_error_tt": _mean(rows, "error_tt"),
        "tt_wins": sum(row["tt_won"] for row in rows),
        "num_seeds": num_seeds,
        "depolarizing": depolarizing,
    }
    result = ExperimentResult("vqe", tuple(rows), aggregate, seed)
    result.verify_aggregate()
    return result


# ---------------------------------------------------------------------------
# Datasets


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    split: str = "train"

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        labels = np.asarray(self.labels, dtype=int)
        if feats.ndim != 2:
            raise ValueError("features must be a (samples, length) array")
        if labels.shape != (feats.shape[0],):
            raise ValueError("labels must match the number of samples")
        if labels.size and not np.all((labels == 0) | (labels == 1)):
            raise ValueError("labels must be binary (0 or 1)")
        if self.split not in ("train", "test"):
            raise ValueError(f"split must be 'train' or 'test', got {self.split!r}")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def feature_length(self) -> int:
        return self.features.shape[1]


def _ridges(u: np.ndarray, spacing: float, phase: float, width: float) -> np.ndarray:
    d = ((u / spacing + phase) % 1.0) - 0.5
    return np.exp(-(d * d) / (2.0 * width * width))


def synth_quantum_dot(n_samples: int, image_side: int = 20, seed: int = 0,
                      pixel_noise: float = 0.05) -> Dataset:
    """Synthetic charge-stability images: label 0 has a single family of
    diagonal transition lines, label 1 two interleaved families with
    anticrossing bumps where they intersect.  Classes alternate, so counts
    stay balanced; everything is drawn from the seeded stream."""
    if image_side < 8:
        raise ValueError("image_side must be >= 8")
    rng = stream(seed, "synth-quantum-dot")
    axis = np.linspace(0.0, 1.0, image_side)
    yy, xx = np.meshgrid(axis, axis, indexing="ij")
    images, labels = [], []
    for i in range(n_samples):
        label = i % 2
        spacing = rng.uniform(0.30, 0.42)
        phase = rng.normal(0.0, 0.05)
        if label == 0:
            width = rng.uniform(0.055, 0.075)
            img = _ridges(xx + yy, 2.0 * spacing, phase, width)
        else:
            width = rng.uniform(0.035, 0.050)
            spacing2 = rng.uniform(0.30, 0.42)
            phase2 = rng.normal(0.0, 0.05)
            fam1 = _ridges(xx + 0.45 * yy, 1.45 * spacing, phase, width)
            fam2 = _ridges(0.45 * xx + yy, 1.45 * spacing2, phase2, width)
            img = np.maximum(fam1, fam2) + 0.8 * fam1 * fam2
        img = img + rng.normal(0.0, pixel_noise, img.shape)
        images.append(img.ravel())
        labels.append(label)
    feats = np.asarray(images)
    lo, hi = float(feats.min()), float(feats.max())
    feats = (feats - lo) / (hi - lo) if hi > lo else np.zeros_like(feats)
    return Dataset(feats, np.asarray(labels), "train")


def _parse_raster(path: str) -> np.ndarray:
    values = []
    with open(path, "r", encoding="utf-8") as fh:
        for ln_no, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            for tok in line.split():
                try:
                    values.append(float(tok))
                except ValueError as exc:
                    raise ValueError(f"{path} line {ln_no}: bad value {tok!r}") from exc
    if not values:
        raise ValueError(f"{path}: raster file has no values")
    return np.asarray(values)


def load_dataset(path, split: str = "train") -> Dataset:
    """Load a raster directory: ``manifest.txt`` lines are
    ``<filename> <label> [train|test]``; rasters are row-major decimal floats.
    Features are min-max normalized to [0, 1] over the whole manifest (a
    zero-range dataset maps to all zeros)."""
    manifest = os.path.join(path, "manifest.txt")
    if not os.path.exists(manifest):
        raise FileNotFoundError(f"missing manifest file {manifest}")
    entries = []
    with open(manifest, "r", encoding="utf-8") as fh:
        for ln_no, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise ValueError(
                    f"{manifest} line {ln_no}: expected '<filename> <label> [split]', got {line!r}"
                )
            fname, label = parts[0], parts[1]
            tag = parts[2] if len(parts) == 3 else "train"
            if label not in ("0", "1"):
                raise ValueError(f"{manifest} line {ln_no}: label must be 0 or 1, got {label!r}")
            if tag not in ("train", "test"):
                raise ValueError(f"{manifest} line {ln_no}: split must be train or test, got {tag!r}")
            entries.append((fname, int(label), tag))
    if not entries:
        raise ValueError(f"{manifest}: no samples listed")
    feats, width = [], None
    for fname, _, _ in entries:
        vec = _parse_raster(os.path.join(path, fname))
        if width is None:
            width = vec.shape[0]
        elif vec.shape[0] != width:
            raise ValueError(
                f"{fname}: raster has {vec.shape[0]} values, expected {width} like the first sample"
            )
        feats.append(vec)
    all_feats = np.vstack(feats)
    lo, hi = float(all_feats.min()), float(all_feats.max())
    all_feats = (all_feats - lo) / (hi - lo) if hi > lo else np.zeros_like(all_feats)
    keep = [i for i, (_, _, tag) in enumerate(entries) if tag == split]
    if not keep:
        raise ValueError(f"{manifest}: no samples tagged {split!r}")
    labels = np.asarray([entries[i][1] for i in keep])
    return Dataset(all_feats[keep], labels, split)


# ---------------------------------------------------------------------------
# Classification


def _sigmoid(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x)) if x >= 0 else math.exp(x) / (1.0 + math.exp(x))


def _readout_score(z_expect: float, temperature: float) -> float:
    # logit of the class-1 probability: centred excited-state population / T
    return (0.5 * (1.0 - z_expect) - 0.5) / temperature


def _batch_loss_and_grad(model, xs, ys, temperature: float):
    n_params = model.n_trainables
    grad = np.zeros(n_params)
    loss = 0.0
    for x, y in zip(xs, ys):
        z, gz = model.value_and_grad(x)
        s = _readout_score(z, temperature)
        p = _sigmoid(s)
        loss += np.logaddexp(0.0, s) - y * s
        grad += (p - y) * (-0.5 / temperature) * gz
    return loss / len(ys), grad / len(ys)


def _accuracy(model, xs, ys, temperature: float) -> float:
    correct = 0
    for x, y in zip(xs, ys):
        s = _readout_score(model.value(x), temperature)
        correct += int((s > 0.0) == bool(y))
    return correct / len(ys)


def _train_binary(model, train_x, train_y, test_x, test_y, epochs, lr, batch_size,
                  temperature, seed):
    params = model.trainables
    state = adam_init(len(params), lr=lr)
    order_rng = stream(seed, "classify-batches")
    n = len(train_y)
    records = []
    eff_batch = n if not batch_size or batch_size >= n else int(batch_size)
    for epoch in range(epochs):
        perm = order_rng.permutation(n) if eff_batch < n else np.arange(n)
        losses = []
        for start in range(0, n, eff_batch):
            idx = perm[start:start + eff_batch]
            current = model.with_trainables(params)
            loss, grads = _batch_loss_and_grad(
                current, train_x[idx], train_y[idx], temperature
            )
            if not math.isfinite(loss):
                raise ValueError(f"non-finite loss {loss} at epoch {epoch}")
            state, params = adam_step(state, params, grads)
            losses.append(loss)
        trained = model.with_trainables(params)
        records.append({
            "epoch": epoch,
            "loss": float(np.mean(losses)),
            "train_acc": _accuracy(trained, train_x, train_y, temperature),
            "test_acc": _accuracy(trained, test_x, test_y, temperature),
        })
    return records, params


def _default_factorization(value: int, parts: int) -> tuple:
    """Split an integer into `parts` factors, largest factors late, for use
    as default TT mode dims."""
    dims = [1] * parts
    remaining = value
    for i in range(parts - 1):
        target = round(remaining ** (1.0 / (parts - i)))
        best = 1
        for cand in range(1, remaining + 1):
            if remaining % cand == 0 and abs(cand - target) < abs(best - target):
                best = cand
        dims[i] = best
        remaining //= best
    dims[-1] = remaining
    return tuple(dims)


def run_classifier(
    dataset: Dataset,
    n_train: int,
    n_test: int,
    qubits: int = 8,
    layers: int = 3,
    epochs: int = 20,
    lr: float = 0.001,
    batch_size: int = 16,
    temperature: float = 0.2,
    seed: int = 0,
    depolarizing: float = 0.0,
    trajectories: int = 200,
    tt_input_dims=None,
    tt_output_dims=None,
    tt_ranks=None,
    tt_init_scale: float = 1.0,
    direct_init_scale: float = 0.1,
    arms=("tt", "direct"),
) -> ExperimentResult:
    """Binary classification with readout Z on qubit 0 and cross-entropy loss.

    The TT arm feeds the full feature vector to the generator and leaves the
    circuit input at |0...0>; the direct arm gets a fixed RY layer encoding
    pooled features, then trains the circuit angles.  Both train with Adam
    for the same schedule."""
    if len(dataset) < n_train + n_test:
        raise ValueError(
            f"dataset has {len(dataset)} samples, need {n_train + n_test} for the split"
        )
    perm = stream(seed, "classify-split").permutation(len(dataset))
    train_idx, test_idx = perm[:n_train], perm[n_train:n_train + n_test]
    train_x, train_y = dataset.features[train_idx], dataset.labels[train_idx]
    test_x, test_y = dataset.features[test_idx], dataset.labels[test_idx]

    spec_circuit = build_ansatz(qubits, layers)
    circuit = spec_circuit.to_circuit()
    n_params = circuit.n_params
    readout = z_readout(qubits, 0)
    noise = None
    if depolarizing > 0.0:
        noise = NoiseSpec(depolarizing, 0.0, trajectories)
    backend = "density-matrix" if qubits <= qsim.DENSITY_MATRIX_MAX_QUBITS else "trajectory"

    feature_len = dataset.feature_length
    in_dims = tuple(tt_input_dims) if tt_input_dims else _default_factorization(feature_len, 3)
    out_dims = tuple(tt_output_dims) if tt_output_dims else _default_factorization(n_params, len(in_dims))
    ranks = tuple(tt_ranks) if tt_ranks else (1,) + (2,) * (len(in_dims) - 1) + (1,)

    rows = []
    final = {}
    for arm in arms:
        if arm == "tt":
            spec = TTSpec(in_dims, out_dims, ranks)
            gen0 = TTGenerator.initialize(spec, stream(seed, "classify-tt-init"), scale=tt_init_scale)
            model = TTCircuitModel(gen0, circuit, readout, noise=noise, backend=backend)
        elif arm == "direct":
            params0 = direct_init_scale * stream(seed, "classify-direct-init").standard_normal(n_params)
            model = DirectCircuitModel(params0, circuit, readout, encode_input=True,
                                       noise=noise, backend=backend)
        else:
            raise ValueError(f"unknown arm {arm!r}")
        records, _ = _train_binary(model, train_x, train_y, test_x, test_y,
                                   epochs, lr, batch_size, temperature, seed)
        for rec in records:
            rows.append({"arm": arm, **rec})
        if records:
            final[arm] = records[-1]
        else:
            untrained = model
            acc = {
                "train_acc": _accuracy(untrained, train_x, train_y, temperature),
                "test_acc": _accuracy(untrained, test_x, test_y, temperature),
            }
            final[arm] = {"epoch": -1, "loss": math.nan, **acc}

    aggregate = {
        "n_train": int(n_train),
        "n_test": int(n_test),
        "epochs": int(epochs),
    }
    for arm, rec in final.items():
        aggregate[f"final_train_acc_{arm}"] = rec["train_acc"]
        aggregate[f"final_test_acc_{arm}"] = rec["test_acc"]
    result = ExperimentResult("classify", tuple(rows), aggregate, seed)
    result.verify_aggregate()
    return result
