import numpy as np
import pytest

from ttvqc.rng import stream
from ttvqc.ttcore import (
    TTGenerator,
    TTInput,
    TTSpec,
    fit_output_length,
    load_checkpoint,
    parse_checkpoint,
    save_checkpoint,
    spread_fit_gradient,
    tt_forward,
    tt_jacobian,
    tt_param_count,
    tt_svd,
    tt_to_dense,
    write_checkpoint,
)


def random_generator(input_dims, output_dims, ranks, seed=0, bias_scale=1.0):
    spec = TTSpec(input_dims, output_dims, ranks)
    rng = stream(seed, "gen")
    gen = TTGenerator.initialize(spec, rng)
    bias = bias_scale * rng.standard_normal(spec.bias_length)
    return TTGenerator(spec, gen.cores, bias)


class TestTTSpec:
    def test_published_classification_counts(self):
        spec = TTSpec([5, 10, 5, 10], [4, 2, 3, 9], [1, 2, 2, 2, 1])
        assert tt_param_count(spec) == (360, 216)
        assert spec.total_param_count == 576

    def test_single_mode_counts(self):
        spec = TTSpec([1], [1], [1, 1])
        assert tt_param_count(spec) == (1, 1)

    def test_two_mode_counts_by_formula(self):
        spec = TTSpec([4, 6], [2, 3], [1, 2, 1])
        assert tt_param_count(spec) == (1 * 4 * 2 * 2 + 2 * 6 * 3 * 1, 6)
        assert tt_param_count(spec) == (52, 6)

    def test_boundary_rank_enforced(self):
        with pytest.raises(ValueError, match="ranks"):
            TTSpec([2, 2], [2, 2], [2, 2, 1])

    def test_dim_length_mismatch(self):
        with pytest.raises(ValueError, match="output_dims"):
            TTSpec([2, 2], [2], [1, 2, 1])


class TestForward:
    def test_single_core_dot_product(self):
        spec = TTSpec([2], [1], [1, 1])
        gen = TTGenerator(spec, (np.ones((1, 2, 1, 1)),), np.zeros(1))
        out = tt_forward(gen, [3.0, 4.0])
        assert out.shape == (1,)
        assert out[0] == pytest.approx(7.0, abs=1e-12)

    def test_zero_cores_return_bias(self):
        spec = TTSpec([2, 3], [2, 2], [1, 2, 1])
        bias = np.arange(4.0)
        cores = tuple(np.zeros(s) for s in spec.core_shapes())
        gen = TTGenerator(spec, cores, bias)
        out = tt_forward(gen, np.ones(6))
        np.testing.assert_array_equal(out, bias)

    def test_matches_dense_oracle(self):
        gen = random_generator([3, 4], [2, 5], [1, 3, 1], seed=7)
        dense = tt_to_dense(gen)
        rng = stream(7, "inputs")
        for _ in range(50):
            x = rng.standard_normal(gen.spec.input_size)
            np.testing.assert_allclose(tt_forward(gen, x), x @ dense + gen.bias, atol=1e-10)

    def test_linear_in_each_core(self):
        gen = random_generator([2, 3, 2], [2, 2, 3], [1, 2, 2, 1], seed=3)
        rng = stream(3, "lin")
        x = rng.standard_normal(gen.spec.input_size)
        for k in range(3):
            shape = gen.spec.core_shapes()[k]
            a_core, b_core = rng.standard_normal(shape), rng.standard_normal(shape)
            alpha, beta = rng.standard_normal(2)

            def with_core(core):
                cores = list(gen.cores)
                cores[k] = core
                return TTGenerator(gen.spec, tuple(cores), gen.bias)

            lhs = tt_forward(with_core(alpha * a_core + beta * b_core), x)
            rhs = (alpha * (tt_forward(with_core(a_core), x) - gen.bias)
                   + beta * (tt_forward(with_core(b_core), x) - gen.bias) + gen.bias)
            np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_dimension_mismatch_names_mode(self):
        gen = random_generator([3, 4], [2, 2], [1, 2, 1])
        with pytest.raises(ValueError, match="mode"):
            tt_forward(gen, np.ones(7))

    def test_input_modes(self):
        spec = TTSpec([2, 2], [1, 2], [1, 2, 1])
        gen = TTGenerator.initialize(spec, stream(0, "g"))
        z = TTInput.latent(spec, stream(0, "z"))
        assert z.mode == "latent-gaussian"
        assert z.values.shape == (4,)
        feats = TTInput.features([1.0, 2.0, 3.0, 4.0])
        np.testing.assert_array_equal(
            tt_forward(gen, feats), tt_forward(gen, np.array([1.0, 2.0, 3.0, 4.0]))
        )


class TestDense:
    def test_single_core_dense_is_core(self):
        spec = TTSpec([3], [2], [1, 1])
        core = stream(1, "c").standard_normal((1, 3, 2, 1))
        gen = TTGenerator(spec, (core,), np.zeros(2))
        np.testing.assert_allclose(tt_to_dense(gen), core[0, :, :, 0], atol=0)

    def test_zero_cores_zero_dense(self):
        spec = TTSpec([2, 2], [2, 2], [1, 2, 1])
        gen = TTGenerator(spec, tuple(np.zeros(s) for s in spec.core_shapes()), np.zeros(4))
        assert np.all(tt_to_dense(gen) == 0)

    def test_budget_error(self):
        gen = random_generator([4, 4], [4, 4], [1, 2, 1])
        with pytest.raises(ValueError, match="budget"):
            tt_to_dense(gen, max_entries=10)


class TestSVD:
    def test_rank_one_exact(self):
        a = np.outer([1.0, 2.0], [3.0, 4.0, 5.0]).reshape(2, 3)
        # treat as map with input dims (2,) x (1,) hmm: use 2 modes of a pure product
        u = np.array([1.0, -2.0])
        v = np.array([0.5, 1.5, -1.0])
        dense = np.kron(u, v).reshape(6, 1) @ np.ones((1, 1))
        gen, report = tt_svd(dense, (2, 3), (1, 1), max_ranks=[1])
        assert report.kept_ranks == (1, 1, 1)
        assert all(s.size == 0 or np.allclose(s, 0, atol=1e-12) for s in report.discarded)
        recon = tt_to_dense(gen)
        np.testing.assert_allclose(recon, dense, atol=1e-10)
        del a

    def test_full_rank_lossless(self):
        rng = stream(11, "svd")
        dense = rng.standard_normal((4 * 4, 4))  # dims (4,4) -> (2,2): map of shape (16, 4)
        gen, report = tt_svd(dense, (4, 4), (2, 2))
        recon = tt_to_dense(gen)
        assert np.max(np.abs(recon - dense)) <= 1e-10
        assert report.error_bound <= 1e-10

    def test_truncation_bound_holds(self):
        rng = stream(12, "svd")
        for trial in range(10):
            dense = rng.standard_normal((6 * 5, 4 * 3))
            gen, report = tt_svd(dense, (6, 5), (4, 3), max_ranks=[1])
            err = np.linalg.norm(tt_to_dense(gen) - dense)
            assert err <= report.error_bound + 1e-9

    def test_rank_clamp_flag(self):
        rng = stream(13, "svd")
        dense = rng.standard_normal((2 * 2, 2 * 2))
        gen, report = tt_svd(dense, (2, 2), (2, 2), max_ranks=[99])
        assert report.ranks_clamped
        np.testing.assert_allclose(tt_to_dense(gen), dense, atol=1e-10)

    def test_three_mode_roundtrip(self):
        rng = stream(14, "svd")
        dense = rng.standard_normal((2 * 3 * 2, 2 * 2 * 3))
        gen, report = tt_svd(dense, (2, 3, 2), (2, 2, 3))
        assert np.max(np.abs(tt_to_dense(gen) - dense)) <= 1e-10
        assert report.error_bound <= 1e-9


class TestJacobian:
    def test_bias_block_is_identity(self):
        gen = random_generator([2], [3], [1, 1], seed=5)
        jac = tt_jacobian(gen, np.ones(2))
        np.testing.assert_array_equal(jac[:, -3:], np.eye(3))

    def test_matches_finite_differences(self):
        for seed in range(5):
            gen = random_generator([2, 3], [2, 2], [1, 2, 1], seed=seed)
            x = stream(seed, "x").standard_normal(gen.spec.input_size)
            jac = tt_jacobian(gen, x)
            vec = gen.trainable_vector()
            step = 1e-6
            fd = np.zeros_like(jac)
            for j in range(vec.size):
                up, dn = vec.copy(), vec.copy()
                up[j] += step
                dn[j] -= step
                fd[:, j] = (tt_forward(gen.with_trainables(up), x)
                            - tt_forward(gen.with_trainables(dn), x)) / (2 * step)
            scale = np.maximum(np.abs(fd), 1e-6)
            assert np.max(np.abs(jac - fd) / scale) <= 1e-5

    def test_input_scaling_scales_core_columns(self):
        gen = random_generator([3], [2], [1, 1], seed=9)
        x = stream(9, "x").standard_normal(3)
        core_cols = gen.spec.core_param_count
        j1 = tt_jacobian(gen, x)
        j2 = tt_jacobian(gen, 2.0 * x)
        np.testing.assert_allclose(j2[:, :core_cols], 2.0 * j1[:, :core_cols], atol=1e-12)
        np.testing.assert_array_equal(j2[:, core_cols:], j1[:, core_cols:])


class TestFitting:
    def test_truncate_and_tile(self):
        vals = np.array([1.0, 2.0, 3.0])
        np.testing.assert_array_equal(fit_output_length(vals, 2), [1.0, 2.0])
        np.testing.assert_array_equal(fit_output_length(vals, 5), [1.0, 2.0, 3.0, 1.0, 2.0])
        np.testing.assert_array_equal(fit_output_length(vals, 3), vals)

    def test_gradient_spreading_is_adjoint(self):
        rng = stream(21, "fit")
        for source, target in [(3, 5), (5, 3), (4, 4)]:
            vals = rng.standard_normal(source)
            grad = rng.standard_normal(target)
            # <grad, fit(vals)> == <spread(grad), vals>
            lhs = grad @ fit_output_length(vals, target)
            rhs = spread_fit_gradient(grad, source) @ vals
            assert lhs == pytest.approx(rhs, abs=1e-12)


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path):
        gen = random_generator([3, 4], [2, 3], [1, 3, 1], seed=17, bias_scale=0.3)
        text = write_checkpoint(gen)
        back = parse_checkpoint(text)
        assert back.spec == gen.spec
        for a, b in zip(back.cores, gen.cores):
            np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(back.bias, gen.bias)
        # file round trip is byte identical
        p1 = tmp_path / "a.tt"
        p2 = tmp_path / "b.tt"
        save_checkpoint(gen, p1)
        save_checkpoint(load_checkpoint(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_parse_errors(self):
        with pytest.raises(ValueError, match="header"):
            parse_checkpoint("nope")
