"""Forward/backward correctness for the dense network core."""

import numpy as np
import pytest

from bdlbench import nn_core
from bdlbench.nn_core import (DETERMINISTIC, MC_DROPOUT, TRAIN,
                              MlpArchitecture, backward, finite_diff_grad,
                              forward, init_params, sample_mask)

REG_ARCH = MlpArchitecture((1, 10, 10, 1))
CLS_ARCH = MlpArchitecture((2, 10, 10, 2))


def _layer_blocks(arch, values):
    """Flatten per-layer (W, b) pairs into a parameter vector."""
    chunks = []
    for w, b in values:
        chunks.append(np.asarray(w, dtype=np.float64).ravel())
        chunks.append(np.asarray(b, dtype=np.float64).ravel())
    vec = np.concatenate(chunks)
    assert vec.shape == (arch.param_count,)
    return vec


class TestArchitecture:
    def test_param_counts(self):
        assert REG_ARCH.param_count == 141
        assert CLS_ARCH.param_count == 162

    def test_dims(self):
        assert REG_ARCH.input_dim == 1
        assert REG_ARCH.output_dim == 1
        assert CLS_ARCH.input_dim == 2
        assert CLS_ARCH.output_dim == 2

    def test_too_few_layers(self):
        with pytest.raises(ValueError):
            MlpArchitecture((5,))

    def test_bad_layer_size(self):
        with pytest.raises(ValueError):
            MlpArchitecture((1, 0, 1))

    def test_unknown_activation(self):
        with pytest.raises(ValueError):
            MlpArchitecture((1, 4, 1), activation="gelu")

    def test_dropout_validation(self):
        with pytest.raises(ValueError):
            MlpArchitecture((1, 4, 1), dropout=(2, 0.5))
        with pytest.raises(ValueError):
            MlpArchitecture((1, 4, 1), dropout=(0, 0.5))
        with pytest.raises(ValueError):
            MlpArchitecture((1, 4, 1), dropout=(1, 1.0))
        arch = MlpArchitecture((1, 4, 4, 1), dropout=(2, 0.25))
        assert arch.drop_layer == 2
        assert arch.drop_p == 0.25


class TestInitParams:
    def test_count_and_finite(self):
        theta = init_params(REG_ARCH, np.random.default_rng(0))
        assert theta.shape == (141,)
        assert np.all(np.isfinite(theta))

    def test_determinism(self):
        a = init_params(CLS_ARCH, np.random.default_rng(0))
        b = init_params(CLS_ARCH, np.random.default_rng(0))
        assert np.array_equal(a, b)

    def test_fan_in_bound(self):
        # First layer of (1, 10, 10, 1) has fan_in 1: weights are the
        # leading 10 entries and must stay inside (-1, 1).  10^4 draws
        # pin the empirical range against the bound.
        rng = np.random.default_rng(42)
        draws = np.array([init_params(REG_ARCH, rng)[:10]
                          for _ in range(1000)])
        assert draws.size == 10_000
        assert np.max(np.abs(draws)) <= 1.0
        assert np.max(np.abs(draws)) > 0.99

    def test_deeper_fan_in_bound(self):
        # Hidden layers have fan_in 10, so |w| <= 1/sqrt(10).
        rng = np.random.default_rng(3)
        bound = 1.0 / np.sqrt(10.0)
        for _ in range(200):
            theta = init_params(REG_ARCH, rng)
            assert np.max(np.abs(theta[20:])) <= bound


class TestForward:
    def test_zero_params_zero_output(self):
        out, _ = forward(REG_ARCH, np.zeros(141), np.array([1.7]))
        assert out.shape == (1,)
        assert out[0] == 0.0
        out, _ = forward(CLS_ARCH, np.zeros(162), np.array([0.3, -2.0]))
        assert np.array_equal(out, np.zeros(2))

    def test_hand_affine_chain(self):
        # All pre-activations positive, so relu is the identity and the
        # network is the plain affine composition below.
        arch = MlpArchitecture((1, 2, 2, 1))
        w1, b1 = np.array([[1.0, 2.0]]), np.array([0.5, 0.25])
        w2 = np.array([[1.0, 0.5], [0.25, 1.0]])
        b2 = np.array([0.1, 0.2])
        w3, b3 = np.array([[2.0], [1.0]]), np.array([0.3])
        theta = _layer_blocks(arch, [(w1, b1), (w2, b2), (w3, b3)])
        x = np.array([1.0])
        expected = ((x @ w1 + b1) @ w2 + b2) @ w3 + b3
        out, _ = forward(arch, theta, x)
        assert out == pytest.approx(expected, abs=1e-12)
        assert out[0] == pytest.approx(7.825, abs=1e-12)

    def test_relu_clips_negative(self):
        arch = MlpArchitecture((1, 1, 1))
        theta = _layer_blocks(arch, [([[1.0]], [0.0]), ([[1.0]], [0.0])])
        out_pos, _ = forward(arch, theta, np.array([2.0]))
        out_neg, _ = forward(arch, theta, np.array([-2.0]))
        assert out_pos[0] == 2.0
        assert out_neg[0] == 0.0

    def test_tanh_activation(self):
        arch = MlpArchitecture((1, 1, 1), activation="tanh")
        theta = _layer_blocks(arch, [([[1.0]], [0.0]), ([[1.0]], [0.0])])
        out, _ = forward(arch, theta, np.array([0.5]))
        assert out[0] == pytest.approx(np.tanh(0.5), abs=1e-15)

    def test_deterministic_is_pure(self):
        theta = init_params(REG_ARCH, np.random.default_rng(5))
        x = np.array([0.8])
        a, _ = forward(REG_ARCH, theta, x)
        b, _ = forward(REG_ARCH, theta, x)
        assert np.array_equal(a, b)

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            forward(REG_ARCH, np.zeros(141), np.array([1.0, 2.0]))

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            forward(REG_ARCH, np.zeros(141), np.array([1.0]), mode="eval")

    def test_dropout_needs_rng(self):
        arch = MlpArchitecture((1, 4, 1), dropout=(1, 0.5))
        theta = init_params(arch, np.random.default_rng(0))
        with pytest.raises(ValueError):
            forward(arch, theta, np.array([1.0]), mode=TRAIN)

    def test_dropout_seed_determinism(self):
        arch = MlpArchitecture((1, 16, 16, 1), dropout=(1, 0.5))
        theta = init_params(arch, np.random.default_rng(1))
        x = np.array([0.4])
        a, _ = forward(arch, theta, x, TRAIN, np.random.default_rng(9))
        b, _ = forward(arch, theta, x, TRAIN, np.random.default_rng(9))
        c, _ = forward(arch, theta, x, TRAIN, np.random.default_rng(10))
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_dropout_p0_matches_deterministic(self):
        arch = MlpArchitecture((1, 8, 8, 1), dropout=(1, 0.0))
        theta = init_params(arch, np.random.default_rng(2))
        x = np.array([-0.6])
        det, _ = forward(arch, theta, x, DETERMINISTIC)
        trn, _ = forward(arch, theta, x, TRAIN, np.random.default_rng(0))
        mcd, _ = forward(arch, theta, x, MC_DROPOUT, np.random.default_rng(0))
        assert np.array_equal(det, trn)
        assert np.array_equal(det, mcd)


class TestSampleMask:
    def test_values_and_shape(self):
        arch = MlpArchitecture((1, 6, 1), dropout=(1, 0.25))
        mask = sample_mask(arch, 50, np.random.default_rng(0))
        assert mask.shape == (50, 6)
        assert set(np.unique(mask)) <= {0.0, 1.0 / 0.75}

    def test_no_dropout_sentinel(self):
        mask = sample_mask(REG_ARCH, 10, np.random.default_rng(0))
        assert mask.size == 0


class TestInvertedDropoutExpectation:
    def test_mask_average_matches_deterministic(self):
        # With dropout on the only hidden layer, the output is linear in
        # the masked activations, so the train-mode mean over masks must
        # converge to the deterministic output.
        arch = MlpArchitecture((1, 8, 1), dropout=(1, 0.3))
        theta = init_params(arch, np.random.default_rng(11))
        x = np.array([0.9])
        det, _ = forward(arch, theta, x, DETERMINISTIC)
        rng = np.random.default_rng(12)
        n = 20_000
        outs = np.array([forward(arch, theta, x, TRAIN, rng)[0][0]
                         for _ in range(n)])
        se = outs.std(ddof=1) / np.sqrt(n)
        assert abs(outs.mean() - det[0]) < 3.0 * se


class TestBackward:
    def test_zero_output_grad(self):
        theta = init_params(REG_ARCH, np.random.default_rng(0))
        _, trace = forward(REG_ARCH, theta, np.array([1.0]))
        grad = backward(REG_ARCH, theta, trace, np.zeros(1))
        assert np.array_equal(grad, np.zeros(141))

    @pytest.mark.parametrize("arch,seed", [
        (REG_ARCH, 0),
        (CLS_ARCH, 1),
        (MlpArchitecture((3, 7, 5, 2), activation="tanh"), 2),
        (MlpArchitecture((2, 6, 6, 3)), 3),
    ])
    def test_matches_finite_differences(self, arch, seed):
        rng = np.random.default_rng(seed)
        theta = init_params(arch, rng)
        x = rng.normal(size=arch.input_dim)
        g = rng.normal(size=arch.output_dim)
        _, trace = forward(arch, theta, x)
        analytic = backward(arch, theta, trace, g)
        fd = finite_diff_grad(
            lambda p: float(g @ forward(arch, p, x)[0]), theta)
        denom = max(np.linalg.norm(analytic), np.linalg.norm(fd), 1e-12)
        assert np.linalg.norm(analytic - fd) / denom < 1e-4

    def test_matches_finite_differences_with_dropout(self):
        # Re-seeding inside the loss keeps the mask fixed across the
        # finite-difference probes.
        arch = MlpArchitecture((2, 9, 9, 1), dropout=(2, 0.4))
        rng = np.random.default_rng(4)
        theta = init_params(arch, rng)
        x = rng.normal(size=2)
        g = np.array([1.0])

        def loss(p):
            out, _ = forward(arch, p, x, TRAIN, np.random.default_rng(77))
            return float(g @ out)

        _, trace = forward(arch, theta, x, TRAIN, np.random.default_rng(77))
        analytic = backward(arch, theta, trace, g)
        fd = finite_diff_grad(loss, theta)
        denom = max(np.linalg.norm(analytic), np.linalg.norm(fd), 1e-12)
        assert np.linalg.norm(analytic - fd) / denom < 1e-4

    def test_stacked_linear_weight_grad(self):
        # One hidden layer kept in relu's linear region: the first-layer
        # weight gradient is the outer product of the input with the
        # back-propagated output gradient.
        arch = MlpArchitecture((2, 2, 2))
        w1 = np.array([[0.5, 0.25], [0.3, 0.6]])
        b1 = np.array([1.0, 1.0])
        w2 = np.array([[0.7, -0.2], [0.1, 0.4]])
        b2 = np.array([0.0, 0.0])
        theta = _layer_blocks(arch, [(w1, b1), (w2, b2)])
        x = np.array([0.3, 0.7])
        g = np.array([1.0, -2.0])
        _, trace = forward(arch, theta, x)
        grad = backward(arch, theta, trace, g)
        expected_w1 = np.outer(x, g @ w2.T).ravel()
        assert grad[:4] == pytest.approx(expected_w1, abs=1e-12)

    def test_trace_mismatch(self):
        theta = init_params(REG_ARCH, np.random.default_rng(0))
        _, trace = forward(REG_ARCH, theta, np.array([1.0]))
        with pytest.raises(ValueError):
            backward(CLS_ARCH, init_params(CLS_ARCH, np.random.default_rng(0)),
                     trace, np.zeros(2))

    def test_output_grad_shape(self):
        theta = init_params(REG_ARCH, np.random.default_rng(0))
        _, trace = forward(REG_ARCH, theta, np.array([1.0]))
        with pytest.raises(ValueError):
            backward(REG_ARCH, theta, trace, np.zeros(2))

    def test_100_random_instances(self):
        # Spec-level sweep shared with the gradcheck CLI: random shapes,
        # params, inputs, and output grads.
        rng = np.random.default_rng(2024)
        for _ in range(100):
            sizes = (int(rng.integers(1, 4)),
                     int(rng.integers(2, 8)),
                     int(rng.integers(2, 8)),
                     int(rng.integers(1, 4)))
            arch = MlpArchitecture(
                sizes, activation=("relu", "tanh")[int(rng.integers(2))])
            theta = init_params(arch, rng)
            x = rng.normal(size=arch.input_dim)
            g = rng.normal(size=arch.output_dim)
            _, trace = forward(arch, theta, x)
            analytic = backward(arch, theta, trace, g)
            fd = finite_diff_grad(
                lambda p: float(g @ forward(arch, p, x)[0]), theta)
            denom = max(np.linalg.norm(analytic), np.linalg.norm(fd), 1e-12)
            assert np.linalg.norm(analytic - fd) / denom < 1e-4


class TestFiniteDiffGrad:
    def test_quadratic(self):
        grad = finite_diff_grad(lambda t: float(t @ t), np.array([1.0, 2.0]))
        assert grad == pytest.approx([2.0, 4.0], abs=1e-8)

    def test_constant(self):
        grad = finite_diff_grad(lambda t: 3.5, np.array([0.1, -0.2, 4.0]))
        assert grad == pytest.approx([0.0, 0.0, 0.0], abs=1e-12)

    def test_sin(self):
        grad = finite_diff_grad(lambda t: float(np.sin(t[0])),
                                np.array([0.0]))
        assert grad[0] == pytest.approx(1.0, abs=1e-9)

    def test_bad_step(self):
        with pytest.raises(ValueError):
            finite_diff_grad(lambda t: 0.0, np.zeros(1), h=0.0)


class TestCheckParams:
    def test_shape_error(self):
        with pytest.raises(ValueError):
            nn_core.check_params(REG_ARCH, np.zeros(140))

    def test_non_finite_error(self):
        bad = np.zeros(141)
        bad[7] = np.nan
        with pytest.raises(ValueError):
            nn_core.check_params(REG_ARCH, bad)
