import math

import numpy as np
import pytest

from ttvqc.graddiff import (
    chain_to_cores,
    grad_wrt_angles,
    inject_measurement_noise,
    param_shift_grad,
    variance_scaling_experiment,
)
from ttvqc.qsim import Hamiltonian, NoiseSpec, PauliString, build_ansatz, noisy_expectation, z_readout
from ttvqc.rng import stream
from ttvqc.ttcore import TTGenerator, TTSpec, fit_output_length, spread_fit_gradient, tt_forward, tt_jacobian


def rel_err(a, b):
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return np.max(np.abs(a - b) / scale)


class TestAngleGradients:
    def test_single_qubit_closed_form(self):
        # <Z> after RX(theta) is cos(theta); gradient at pi/2 is -1
        spec = build_ansatz(1, 1, "none")
        grad = grad_wrt_angles(spec, [math.pi / 2, 0.0, 0.0], z_readout(1))
        assert grad[0] == pytest.approx(-1.0, abs=1e-12)
        assert grad[1] == pytest.approx(0.0, abs=1e-12)
        assert grad[2] == pytest.approx(0.0, abs=1e-12)

    def test_rz_gradient_vanishes_on_zero_state(self):
        spec = build_ansatz(3, 1, "none")
        grad = grad_wrt_angles(spec, np.zeros(9), z_readout(3))
        rz_slots = [2, 5, 8]
        for s in rz_slots:
            assert grad[s] == pytest.approx(0.0, abs=1e-12)

    def test_adjoint_matches_parameter_shift(self):
        rng = stream(1, "cfg")
        for trial in range(20):
            u = int(rng.integers(1, 6))
            l = int(rng.integers(1, 4))
            spec = build_ansatz(u, l, "ring" if u > 1 else "none")
            params = rng.uniform(-math.pi, math.pi, spec.param_count)
            ham = maxcut_like(u, rng)
            adj = grad_wrt_angles(spec, params, ham)
            shift = param_shift_grad(spec, params, ham)
            np.testing.assert_allclose(adj, shift, rtol=1e-8, atol=1e-12)

    def test_shift_rule_linearity(self):
        spec = build_ansatz(2, 1)
        params = stream(2, "p").uniform(-1, 1, 6)
        h1 = z_readout(2, 0)
        h2 = z_readout(2, 1)
        combined = Hamiltonian(2, h1.terms + h2.terms)
        g = param_shift_grad(spec, params, combined)
        np.testing.assert_allclose(
            g, param_shift_grad(spec, params, h1) + param_shift_grad(spec, params, h2),
            atol=1e-12,
        )

    def test_constant_observable_zero_gradient(self):
        spec = build_ansatz(2, 1)
        identity = Hamiltonian(2, (PauliString(3.0, "II"),))
        grad = param_shift_grad(spec, np.ones(6), identity)
        np.testing.assert_allclose(grad, 0.0, atol=1e-12)

    def test_shared_slot_accumulates(self):
        # QAOA-style slot sharing: gradient is the sum over occurrences.
        from ttvqc.harness import Graph, qaoa_circuit
        from ttvqc.qsim import expectation, maxcut_hamiltonian, simulate_state

        graph = Graph(3, ((0, 1), (1, 2), (0, 2)))
        circ = qaoa_circuit(graph, 2)
        ham = maxcut_hamiltonian(graph.edges, 3)
        params = stream(3, "qaoa").uniform(-1, 1, circ.n_params)
        adj = grad_wrt_angles(circ, params, ham)
        shift = param_shift_grad(circ, params, ham)
        np.testing.assert_allclose(adj, shift, rtol=1e-8, atol=1e-12)
        step = 1e-6
        fd = np.zeros_like(params)
        for j in range(params.size):
            up, dn = params.copy(), params.copy()
            up[j] += step
            dn[j] -= step
            fd[j] = (expectation(simulate_state(circ, up), ham)
                     - expectation(simulate_state(circ, dn), ham)) / (2 * step)
        assert rel_err(adj, fd) <= 1e-5

    def test_shift_rule_on_noisy_evaluator(self):
        spec = build_ansatz(2, 1)
        ham = z_readout(2)
        noise = NoiseSpec(0.02)
        params = stream(4, "n").uniform(-1, 1, 6)

        def noisy(p, overrides):
            return noisy_expectation(spec, p, ham, noise, angle_overrides=overrides)

        grad = param_shift_grad(spec, params, ham, evaluator=noisy)
        step = 1e-6
        fd = np.zeros_like(params)
        for j in range(6):
            up, dn = params.copy(), params.copy()
            up[j] += step
            dn[j] -= step
            fd[j] = (noisy_expectation(spec, up, ham, noise)
                     - noisy_expectation(spec, dn, ham, noise)) / (2 * step)
        np.testing.assert_allclose(grad, fd, rtol=1e-4, atol=1e-8)


def maxcut_like(n_qubits, rng):
    words = []
    for q in range(n_qubits):
        word = "".join("Z" if i == q else "I" for i in range(n_qubits))
        words.append(PauliString(float(rng.uniform(-1, 1)), word))
    if n_qubits >= 2:
        word = "ZZ" + "I" * (n_qubits - 2)
        words.append(PauliString(float(rng.uniform(-1, 1)), word))
    return Hamiltonian(n_qubits, tuple(words))


class TestChainRule:
    def test_identity_jacobian_passthrough(self):
        grad_w = np.array([1.0, -2.0, 3.0])
        np.testing.assert_array_equal(chain_to_cores(grad_w, np.eye(3)), grad_w)

    def test_zero_gradient(self):
        jac = stream(5, "j").standard_normal((4, 7))
        np.testing.assert_array_equal(chain_to_cores(np.zeros(4), jac), np.zeros(7))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="Jacobian"):
            chain_to_cores(np.zeros(3), np.zeros((4, 7)))

    def test_end_to_end_vs_finite_differences(self):
        from ttvqc.qsim import expectation, simulate_state

        rng = stream(6, "e2e")
        for trial in range(20):
            u = int(rng.integers(2, 6))
            l = int(rng.integers(1, 4))
            circ_spec = build_ansatz(u, l)
            p_count = circ_spec.param_count
            spec = TTSpec((2, 3), (2, 3), (1, 2, 1))
            gen = TTGenerator.initialize(spec, stream(6, "gen", trial))
            x = stream(6, "x", trial).standard_normal(spec.input_size)
            ham = maxcut_like(u, rng)

            def loss(vec):
                g = gen.with_trainables(vec)
                angles = fit_output_length(tt_forward(g, x), p_count)
                return expectation(simulate_state(circ_spec, angles), ham)

            out = tt_forward(gen, x)
            angles = fit_output_length(out, p_count)
            grad_angles = grad_wrt_angles(circ_spec, angles, ham)
            grad_out = spread_fit_gradient(grad_angles, out.size)
            analytic = chain_to_cores(grad_out, tt_jacobian(gen, x))

            vec = gen.trainable_vector()
            step = 1e-5
            fd = np.zeros_like(vec)
            for j in range(vec.size):
                up, dn = vec.copy(), vec.copy()
                up[j] += step
                dn[j] -= step
                fd[j] = (loss(up) - loss(dn)) / (2 * step)
            scale = np.maximum(np.maximum(np.abs(fd), np.abs(analytic)), 1e-4)
            assert np.max(np.abs(analytic - fd) / scale) <= 1e-4


class TestNoiseInjection:
    def test_zero_sigma_identical(self):
        grad = stream(7, "g").standard_normal(10)
        out = inject_measurement_noise(grad, 0.0, stream(7, "r"))
        np.testing.assert_array_equal(out, grad)

    def test_seeded_reproducibility(self):
        grad = np.zeros(64)
        a = inject_measurement_noise(grad, 0.3, stream(8, "r"))
        b = inject_measurement_noise(grad, 0.3, stream(8, "r"))
        np.testing.assert_array_equal(a, b)

    def test_empirical_variance(self):
        rng = stream(9, "mc")
        draws = inject_measurement_noise(np.zeros(100_000), 0.5, rng)
        assert abs(np.var(draws) - 0.25) / 0.25 <= 0.05


class TestVarianceScaling:
    def test_balanced_variance_matches_analytic(self):
        report = variance_scaling_experiment([4, 8], sigma=0.1, trials=20000, seed=0)
        for emp, ana in zip(report.var_tt_empirical, report.var_tt_analytic):
            # MC error on a variance estimate ~ sqrt(2/trials)
            assert abs(emp - ana) <= 3 * ana * math.sqrt(2.0 / report.trials)
        for u, ana in zip(report.qubit_counts, report.var_tt_analytic):
            assert ana == pytest.approx(0.01 / (3 * u), rel=1e-12)

    def test_direct_variance_u_independent(self):
        report = variance_scaling_experiment([4, 8, 16], sigma=0.1, trials=10000, seed=1)
        lo, hi = min(report.var_direct), max(report.var_direct)
        assert (hi - lo) / hi <= 0.10
        for v in report.var_direct:
            assert v == pytest.approx(0.01, rel=0.05)

    def test_slope_near_minus_one(self):
        report = variance_scaling_experiment([4, 8, 16], sigma=0.1, trials=10000, seed=2)
        assert -1.3 <= report.slope <= -0.7

    def test_trial_floor(self):
        with pytest.raises(ValueError, match="trials"):
            variance_scaling_experiment([4], sigma=0.1, trials=10, seed=0)
