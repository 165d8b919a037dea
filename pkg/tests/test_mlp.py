import numpy as np
import pytest

from momentclosure.mlp import (
    AdamState,
    Mlp,
    Normalizer,
    adam_step,
    backward,
    forward,
    forward_cached,
    init_mlp,
)


def dense_oracle(weights, biases, x):
    """Hand-rolled matrix arithmetic, independent of the Mlp code path."""
    a = x
    for i, (w, b) in enumerate(zip(weights, biases)):
        z = a @ w + b
        a = np.maximum(z, 0.0) if i < len(weights) - 1 else z
    return a


def finite_difference_grads(mlp, x, upstream, h=1e-5):
    """Central differences of sum(forward * upstream) over every parameter."""
    grads = []
    for p in mlp.parameters():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + h
            fp = np.sum(forward(mlp, x) * upstream)
            p[idx] = orig - h
            fm = np.sum(forward(mlp, x) * upstream)
            p[idx] = orig
            g[idx] = (fp - fm) / (2 * h)
            it.iternext()
        grads.append(g)
    return grads


class TestForward:
    def test_zero_parameters(self):
        mlp = init_mlp([3, 4, 2], np.random.default_rng(0))
        for w in mlp.weights:
            w[:] = 0.0
        assert np.all(forward(mlp, np.array([1.0, -2.0, 3.0])) == 0.0)

    def test_identity_single_layer(self):
        mlp = Mlp([3, 3], [np.eye(3)], [np.zeros(3)])
        x = np.array([0.3, -1.2, 4.0])
        assert forward(mlp, x) == pytest.approx(x, abs=1e-15)

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(1)
        mlp = init_mlp([4, 8, 8, 3], rng)
        x = rng.normal(size=(6, 4))
        assert forward(mlp, x) == pytest.approx(
            dense_oracle(mlp.weights, mlp.biases, x), abs=1e-14
        )

    def test_dim_mismatch(self):
        mlp = init_mlp([4, 2], np.random.default_rng(2))
        with pytest.raises(ValueError):
            forward(mlp, np.zeros(5))


class TestBackward:
    @pytest.mark.parametrize("dims", [[2, 5, 3], [3, 8, 8, 2]])
    def test_finite_difference_agreement(self, dims):
        rng = np.random.default_rng(42)
        mlp = init_mlp(dims, rng)
        x = rng.normal(size=(7, dims[0]))
        upstream = rng.normal(size=(7, dims[-1]))
        _, cache = forward_cached(mlp, x)
        analytic = backward(mlp, cache, upstream)
        numeric = finite_difference_grads(mlp, x, upstream)
        for a, n in zip(analytic, numeric):
            denom = np.maximum(np.abs(n), 1e-8)
            assert np.max(np.abs(a - n) / denom) < 1e-5

    def test_zero_upstream(self):
        rng = np.random.default_rng(3)
        mlp = init_mlp([3, 4, 2], rng)
        _, cache = forward_cached(mlp, rng.normal(size=(5, 3)))
        grads = backward(mlp, cache, np.zeros((5, 2)))
        assert all(np.all(g == 0) for g in grads)

    def test_linear_net_outer_product(self):
        # single linear layer: dL/dW = x^T upstream exactly
        rng = np.random.default_rng(4)
        mlp = Mlp([3, 2], [rng.normal(size=(3, 2))], [np.zeros(2)])
        x = rng.normal(size=(1, 3))
        up = rng.normal(size=(1, 2))
        _, cache = forward_cached(mlp, x)
        grads = backward(mlp, cache, up)
        assert grads[0] == pytest.approx(np.outer(x[0], up[0]), abs=1e-14)
        assert grads[1] == pytest.approx(up[0], abs=1e-15)


class TestAdam:
    def test_zero_gradient_no_motion(self):
        p = [np.array([1.0, -2.0])]
        state = AdamState.for_params(p)
        adam_step(p, [np.zeros(2)], state, lr=1e-2)
        assert p[0] == pytest.approx([1.0, -2.0], abs=0)

    def test_first_step_magnitude(self):
        p = [np.array([0.0])]
        state = AdamState.for_params(p)
        adam_step(p, [np.array([3.7])], state, lr=1e-3)
        # bias-corrected first step is lr * g/(|g| + eps') ~ lr
        assert abs(p[0][0]) == pytest.approx(1e-3, rel=1e-6)
        assert p[0][0] < 0  # moves against the gradient

    def test_quadratic_bowl(self):
        rng = np.random.default_rng(5)
        p = [rng.normal(size=4)]
        state = AdamState.for_params(p)
        norms = []
        for _ in range(500):
            adam_step(p, [p[0].copy()], state, lr=1e-2)
            norms.append(np.linalg.norm(p[0]))
        assert norms[-1] < 1e-3
        warm = norms[50:]
        assert all(b <= a + 1e-12 for a, b in zip(warm, warm[1:]))


class TestNormalizer:
    def test_round_trip(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(100, 3)) * np.array([10.0, 1e-3, 1.0])
        norm = Normalizer.fit(x)
        assert norm.denormalize(norm.normalize(x)) == pytest.approx(x, abs=1e-12)

    def test_fitted_stats(self):
        rng = np.random.default_rng(7)
        x = rng.normal(loc=5.0, scale=2.0, size=(1000, 2))
        z = Normalizer.fit(x).normalize(x)
        assert z.mean(axis=0) == pytest.approx([0.0, 0.0], abs=1e-12)
        assert z.std(axis=0) == pytest.approx([1.0, 1.0], abs=1e-12)

    def test_constant_column_floored(self):
        x = np.ones((10, 2))
        norm = Normalizer.fit(x)
        assert np.all(norm.std >= 1e-8)
        assert np.all(np.isfinite(norm.normalize(x)))
