import numpy as np
import pytest

from ganmf.numerics import AdamState, adam_step, finite_diff_grad, glorot_uniform, matmul


class TestMatmul:
    def test_identity(self):
        a = np.array([[1.5, -2.0], [0.5, 3.0]])
        assert np.array_equal(matmul(np.eye(2), a), a)

    def test_forced_arithmetic(self):
        out = matmul(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[0.0], [1.0]]))
        assert np.array_equal(out, np.array([[2.0], [4.0]]))

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(7, 5))
        b = rng.normal(size=(5, 3))
        oracle = np.zeros((7, 3))
        for i in range(7):
            for j in range(3):
                for k in range(5):
                    oracle[i, j] += a[i, k] * b[k, j]
        assert np.max(np.abs(matmul(a, b) - oracle)) < 1e-12

    def test_shape_mismatch_raises(self):
        with pytest.raises(ValueError, match="mismatch"):
            matmul(np.ones((2, 3)), np.ones((2, 3)))
        with pytest.raises(ValueError, match="2-D"):
            matmul(np.ones(3), np.ones((3, 2)))

    @pytest.mark.parametrize("seed", range(10))
    def test_associativity(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(4, 6))
        b = rng.normal(size=(6, 3))
        c = rng.normal(size=(3, 5))
        left = matmul(matmul(a, b), c)
        right = matmul(a, matmul(b, c))
        assert np.max(np.abs(left - right)) / max(np.max(np.abs(left)), 1.0) < 1e-9


class TestGlorot:
    def test_single_value_within_bound(self):
        for seed in range(20):
            value = glorot_uniform(1, 1, seed)[0, 0]
            assert abs(value) <= np.sqrt(3.0)

    def test_deterministic(self):
        assert np.array_equal(glorot_uniform(5, 7, 42), glorot_uniform(5, 7, 42))

    def test_sample_mean_near_zero(self):
        sample = glorot_uniform(100, 100, 9)
        assert abs(sample.mean()) < 0.02

    def test_bound_matches_formula(self):
        sample = glorot_uniform(30, 50, 3)
        assert np.max(np.abs(sample)) <= np.sqrt(6.0 / 80)

    def test_bad_dims_raise(self):
        with pytest.raises(ValueError):
            glorot_uniform(0, 3, 1)


class TestAdam:
    def test_zero_grad_is_identity_for_all_t(self):
        param = np.array([[1.0, -2.0], [0.5, 3.0]])
        state = AdamState.for_param(param, lr=0.01)
        for _ in range(20):
            adam_step(param, np.zeros_like(param), state)
        assert np.array_equal(param, np.array([[1.0, -2.0], [0.5, 3.0]]))
        assert np.all(state.v == 0.0)
        assert state.t == 20

    @pytest.mark.parametrize("g", [0.5, -3.0, 1e-3])
    def test_first_step_moves_by_lr(self, g):
        param = np.array([[2.0]])
        state = AdamState.for_param(param, lr=0.001)
        adam_step(param, np.array([[g]]), state)
        delta = param[0, 0] - 2.0
        assert abs(abs(delta) - 0.001) < 1e-6
        assert np.sign(delta) == -np.sign(g)

    def test_ten_steps_match_scalar_oracle(self):
        # Oracle: plain-float Adam minimizing f(x) = x^2 from x = 1.
        x = 1.0
        m = v = 0.0
        beta1, beta2, eps, lr = 0.9, 0.999, 1e-8, 0.1
        trajectory = []
        for t in range(1, 11):
            g = 2.0 * x
            m = beta1 * m + (1 - beta1) * g
            v = beta2 * v + (1 - beta2) * g * g
            x -= lr * (m / (1 - beta1**t)) / (np.sqrt(v / (1 - beta2**t)) + eps)
            trajectory.append(x)

        param = np.array([[1.0]])
        state = AdamState.for_param(param, lr=0.1)
        for t in range(10):
            adam_step(param, 2.0 * param, state)
            assert abs(param[0, 0] - trajectory[t]) < 1e-12

    def test_v_stays_nonnegative(self):
        rng = np.random.default_rng(5)
        param = rng.normal(size=(3, 4))
        state = AdamState.for_param(param, lr=0.01)
        for _ in range(30):
            adam_step(param, rng.normal(size=(3, 4)), state)
        assert np.all(state.v >= 0.0)

    def test_shape_mismatch_raises(self):
        param = np.ones((2, 2))
        state = AdamState.for_param(param, lr=0.01)
        with pytest.raises(ValueError):
            adam_step(param, np.ones((2, 3)), state)
        with pytest.raises(ValueError):
            adam_step(np.ones((3, 3)), np.ones((3, 3)), state)


class TestFiniteDiff:
    def test_sum_gives_ones(self):
        at = np.random.default_rng(0).normal(size=(3, 4))
        grad = finite_diff_grad(lambda x: float(np.sum(x)), at)
        assert np.allclose(grad, 1.0, atol=1e-9)

    def test_quadratic_gives_x(self):
        at = np.random.default_rng(1).uniform(-1, 1, size=(4, 3))
        grad = finite_diff_grad(lambda x: 0.5 * float(np.sum(x * x)), at, h=1e-5)
        rel = np.abs(grad - at) / np.maximum(np.abs(at), 1e-12)
        assert rel.max() < 1e-8

    def test_bad_step_raises(self):
        with pytest.raises(ValueError):
            finite_diff_grad(lambda x: 0.0, np.ones(2), h=0.0)

    def test_non_finite_value_raises(self):
        def f(x):
            with np.errstate(invalid="ignore"):
                return float(np.log(x[0] - 10.0))

        with pytest.raises(FloatingPointError):
            finite_diff_grad(f, np.ones(1))
