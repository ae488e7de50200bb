import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from nrplm import numerics as nx
from nrplm.errors import NumericError, ParameterError

ELU_MINUS_ONE = -0.6321205588285577      # e^-1 - 1
LN4 = 1.3862943611198906
HE_STD_512 = 0.0625                      # sqrt(2 / 512)

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


class TestActivations:
    def test_relu(self):
        assert nx.relu(np.array([-1.0, 0.0, 2.0])).tolist() == [0, 0, 2]
        assert not nx.relu(-np.arange(1.0, 5.0)).any()

    @given(arrays(np.float64, st.integers(0, 20), elements=finite))
    def test_relu_idempotent(self, x):
        assert np.array_equal(nx.relu(nx.relu(x)), nx.relu(x))

    def test_fixed_points(self):
        assert nx.activation(np.array([0.0]), "tanh")[0] == 0.0
        assert nx.activation(np.array([0.0]), "sigmoid")[0] == 0.5
        x = np.array([0.0, 0.5, 3.0])
        assert np.array_equal(nx.activation(x, "elu"), x)
        assert nx.activation(np.array([-1.0]), "elu")[0] == pytest.approx(ELU_MINUS_ONE, abs=1e-15)

    def test_sigmoid_extremes_without_overflow(self):
        with np.errstate(over="raise"):
            out = nx.activation(np.array([-1000.0, 1000.0]), "sigmoid")
        assert out.tolist() == [0.0, 1.0]

    def test_unknown(self):
        with pytest.raises(ParameterError):
            nx.activation(np.zeros(2), "swish")
        with pytest.raises(ParameterError):
            nx.activation_grad(np.zeros(2), np.zeros(2), "swish")

    @pytest.mark.parametrize("kind", nx.ACTIVATIONS)
    def test_grad_matches_central_difference(self, kind):
        x = np.linspace(-3, 3, 41) + 0.013  # avoid the relu kink at 0
        eps = 1e-6
        num = (nx.activation(x + eps, kind) - nx.activation(x - eps, kind)) / (2 * eps)
        ana = nx.activation_grad(x, nx.activation(x, kind), kind)
        np.testing.assert_allclose(ana, num, rtol=1e-6, atol=1e-8)


class TestDropout:
    def test_identities(self, rng):
        x = rng.normal(size=(4, 5))
        assert nx.dropout(x, 0.0, rng) is x
        assert nx.dropout(x, 0.7, rng, training=False) is x

    def test_bad_p(self, rng):
        with pytest.raises(ParameterError):
            nx.dropout(np.ones(3), 1.0, rng)
        with pytest.raises(ParameterError):
            nx.dropout_mask((3,), -0.1, rng)

    def test_inverted_expectation(self):
        out = nx.dropout(np.ones(1_000_000), 0.4, np.random.default_rng(0))
        assert abs(out.mean() - 1.0) < 0.01
        np.testing.assert_allclose(np.unique(out), [0.0, 1 / 0.6])

    def test_needs_rng_in_training(self):
        with pytest.raises(ParameterError):
            nx.dropout(np.ones(3), 0.5, None)

    def test_mask_dtype(self, rng):
        assert nx.dropout_mask((3, 3), 0.5, rng, np.float32).dtype == np.float32


class TestSoftmax:
    def test_symmetric(self):
        assert nx.stable_softmax(np.array([0.0, 0.0])).tolist() == [0.5, 0.5]

    def test_no_overflow(self):
        with np.errstate(over="raise"):
            p = nx.stable_softmax(np.array([1000.0, 0.0]))
        assert p[0] == pytest.approx(1.0) and p[1] < 1e-300

    def test_non_finite(self):
        for bad in (np.nan, np.inf, -np.inf):
            with pytest.raises(NumericError):
                nx.stable_softmax(np.array([0.0, bad]))

    @given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 30)),
                  elements=st.floats(-1e4, 1e4)), st.floats(-1e3, 1e3))
    def test_probability_vector_and_shift(self, x, c):
        p = nx.stable_softmax(x)
        assert (p >= 0).all()
        np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-6)
        np.testing.assert_allclose(nx.stable_softmax(x + c), p, atol=1e-9)


class TestCrossEntropy:
    def test_values(self):
        assert nx.cross_entropy(np.array([0.0, 1.0, 0.0]), 1) == 0.0
        assert nx.cross_entropy(np.full(7, 1 / 7), 3) == pytest.approx(np.log(7))
        assert nx.cross_entropy(np.array([0.25, 0.75]), 0) == pytest.approx(LN4, abs=1e-15)

    def test_floor(self):
        assert nx.cross_entropy(np.array([1.0, 0.0]), 1) == pytest.approx(-np.log(1e-12))

    def test_batch(self):
        P = np.array([[0.5, 0.5], [0.25, 0.75]])
        np.testing.assert_allclose(nx.cross_entropy(P, np.array([0, 1])), [np.log(2), np.log(4 / 3)])

    def test_target_range(self):
        with pytest.raises(ParameterError):
            nx.cross_entropy(np.array([0.5, 0.5]), 2)
        with pytest.raises(ParameterError):
            nx.cross_entropy(np.full((2, 2), 0.5), np.array([0, -1]))


class TestClip:
    def test_small_unchanged(self):
        g = np.array([0.3, 0.4])
        assert nx.clip_by_norm(g, 1.0) is g

    def test_three_four_five(self):
        np.testing.assert_allclose(nx.clip_by_norm(np.array([3.0, 4.0]), 1.0), [0.6, 0.8])

    def test_threshold_positive(self):
        with pytest.raises(ParameterError):
            nx.clip_by_norm(np.ones(2), 0.0)

    @given(arrays(np.float64, st.integers(1, 30), elements=st.floats(-1e3, 1e3)),
           st.floats(1e-3, 10))
    def test_bound_and_idempotent(self, g, t):
        c = nx.clip_by_norm(g, t)
        assert nx.grad_norm(c) <= t + 1e-7
        np.testing.assert_allclose(nx.clip_by_norm(c, t), c, rtol=1e-12)

    def test_sparse(self):
        sr = nx.SparseRows(np.array([1, 3]), np.array([[3.0, 0.0], [0.0, 4.0]]), (5, 2))
        c = nx.clip_by_norm(sr, 1.0)
        assert isinstance(c, nx.SparseRows) and c.norm() == pytest.approx(1.0)

    def test_local_not_global(self):
        out = nx.clip_all({"a": np.array([3.0, 4.0]), "b": np.array([0.1])}, 1.0)
        assert nx.grad_norm(out["a"]) == pytest.approx(1.0)
        assert out["b"][0] == 0.1


class TestSGD:
    def test_arithmetic(self):
        p = np.array([1.0])
        nx.sgd_step(p, np.array([0.5]), 0.5)
        assert p[0] == 0.75

    def test_zero_grad(self, rng):
        p = {"w": rng.normal(size=(3, 3))}
        before = p["w"].copy()
        nx.sgd_step(p, {"w": np.zeros((3, 3))}, 0.5)
        assert np.array_equal(p["w"], before)

    def test_sparse_rows_only(self, rng):
        p = rng.normal(size=(12, 4))
        before = p.copy()
        g = nx.SparseRows(np.array([3, 9]), np.ones((2, 4)), p.shape)
        nx.sgd_step(p, g, 0.1)
        untouched = [i for i in range(12) if i not in (3, 9)]
        assert p[untouched].tobytes() == before[untouched].tobytes()
        np.testing.assert_allclose(p[[3, 9]], before[[3, 9]] - 0.1)

    def test_errors(self):
        with pytest.raises(ParameterError):
            nx.sgd_step(np.zeros(3), np.zeros(4), 0.5)
        with pytest.raises(ParameterError):
            nx.sgd_step(np.zeros(3), np.zeros(3), 0.0)
        with pytest.raises(ParameterError):
            nx.sgd_step({"a": np.zeros(2)}, {"b": np.zeros(2)}, 0.1)
        with pytest.raises(ParameterError):
            nx.sgd_step(np.zeros((4, 2)), nx.SparseRows(np.array([0]), np.zeros((1, 2)), (5, 2)), 0.1)

    def test_sparse_accumulate(self):
        sr = nx.SparseRows.accumulate(np.array([2, 0, 2]), np.array([[1.0], [2.0], [3.0]]), (4, 1))
        assert sr.rows.tolist() == [0, 2] and sr.values.ravel().tolist() == [2.0, 4.0]
        assert sr.to_dense().ravel().tolist() == [2.0, 0.0, 4.0, 0.0]


class TestInit:
    def test_zeros(self, rng):
        assert not nx.init_params((7,), "zeros", rng).any()

    def test_uniform_range(self, rng):
        w = nx.init_params((200, 50), "uniform_range", rng)
        assert w.dtype == np.float32
        assert np.abs(w).max() <= 0.01
        assert np.abs(w).max() > 0.009

    def test_he_std(self, rng):
        w = nx.init_params((100_000,), "he", rng, np.float64, fan_in=512)
        assert abs(w.std() / HE_STD_512 - 1) < 0.05
        assert abs(w.mean()) < 3 * HE_STD_512 / np.sqrt(100_000) * 2

    def test_unknown(self, rng):
        with pytest.raises(ParameterError):
            nx.init_params((2,), "xavier", rng)


class TestFiniteDiff:
    def test_quadratic(self, rng):
        p = rng.normal(size=(3, 4))
        g = nx.finite_diff_gradient(lambda: 0.5 * float(np.sum(p ** 2)), p, 1e-5)
        np.testing.assert_allclose(g, p, atol=1e-9)

    def test_constant(self, rng):
        params = {"a": rng.normal(size=3), "b": rng.normal(size=(2, 2))}
        g = nx.finite_diff_gradient(lambda: 4.2, params)
        assert all(not v.any() for v in g.values())

    def test_restores_params(self, rng):
        p = rng.normal(size=5)
        before = p.copy()
        nx.finite_diff_gradient(lambda: float(np.sin(p).sum()), p)
        assert np.array_equal(p, before)

    def test_epsilon_positive(self):
        with pytest.raises(ParameterError):
            nx.finite_diff_gradient(lambda: 0.0, np.zeros(1), 0.0)
