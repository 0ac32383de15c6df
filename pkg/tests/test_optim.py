"""Adam update rule against hand-rolled references and analytic properties."""

import numpy as np
import pytest

from cake.optim import adam_init, adam_step


def single(value, shape=(3,)):
    return [np.full(shape, float(value))]


class TestValidation:
    def test_bad_hyperparams(self):
        t = single(0.0)
        with pytest.raises(ValueError):
            adam_init(t, lr=0.0)
        with pytest.raises(ValueError):
            adam_init(t, lr=-1.0)
        with pytest.raises(ValueError):
            adam_init(t, beta1=1.0)
        with pytest.raises(ValueError):
            adam_init(t, beta2=-0.1)
        with pytest.raises(ValueError):
            adam_init(t, eps=0.0)

    def test_shape_mismatch(self):
        t = single(0.0)
        state = adam_init(t)
        with pytest.raises(ValueError):
            adam_step(state, t, [np.zeros(4)])
        with pytest.raises(ValueError):
            adam_step(state, t, [np.zeros(3), np.zeros(3)])

    def test_non_finite_gradient(self):
        t = single(0.0)
        state = adam_init(t)
        with pytest.raises(FloatingPointError):
            adam_step(state, t, [np.array([0.0, np.nan, 0.0])])
        with pytest.raises(FloatingPointError):
            adam_step(state, t, [np.array([np.inf, 0.0, 0.0])])
        assert state.t == 0  # rejected before any mutation


class TestUpdateRule:
    def test_zero_grad_no_move(self):
        t = single(1.5)
        state = adam_init(t)
        adam_step(state, t, [np.zeros(3)])
        np.testing.assert_array_equal(t[0], np.full(3, 1.5))
        assert state.t == 1

    def test_first_step_is_lr_times_sign(self):
        # bias correction makes m_hat/sqrt(v_hat) = g/|g| at t=1, so the move
        # is -lr*sign(g) up to the eps perturbation lr*eps/(|g|+eps)
        t = [np.array([2.0, -3.0, 0.5, 1.0])]
        g = [np.array([0.4, -7.0, 0.02, 150.0])]
        state = adam_init(t, lr=0.05)
        adam_step(state, t, g)
        expect = np.array([2.0, -3.0, 0.5, 1.0]) - 0.05 * np.sign(g[0])
        np.testing.assert_allclose(t[0], expect, rtol=0, atol=0.05 * 1e-6)

    def test_degenerate_betas_sign_update(self):
        # beta1 = beta2 = 0: every step is -lr * g / (|g| + eps)
        t = [np.array([1.0, 1.0])]
        state = adam_init(t, lr=0.1, beta1=0.0, beta2=0.0)
        for _ in range(4):
            before = t[0].copy()
            g = np.array([3.0, -0.25])
            adam_step(state, t, [g])
            expect = before - 0.1 * g / (np.abs(g) + state.eps)
            np.testing.assert_allclose(t[0], expect, atol=1e-12)

    def test_three_steps_match_reference(self):
        lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
        theta = np.array([0.3, -1.2, 2.0])
        grads = [
            np.array([1.0, -2.0, 0.5]),
            np.array([0.5, 0.5, -0.5]),
            np.array([-1.5, 0.1, 0.0]),
        ]
        m = np.zeros(3)
        v = np.zeros(3)
        ref = theta.copy()
        for step, g in enumerate(grads, start=1):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g**2
            m_hat = m / (1 - b1**step)
            v_hat = v / (1 - b2**step)
            ref = ref - lr * m_hat / (np.sqrt(v_hat) + eps)

        t = [theta.copy()]
        state = adam_init(t, lr=lr, beta1=b1, beta2=b2, eps=eps)
        for g in grads:
            adam_step(state, t, [g])
        np.testing.assert_allclose(t[0], ref, atol=1e-15)
        assert state.t == 3

    def test_quadratic_convergence(self):
        # f(theta) = theta^2, grad 2*theta; 100 steps from 1.0 at lr 0.1
        t = [np.array([1.0])]
        state = adam_init(t, lr=0.1)
        for _ in range(100):
            adam_step(state, t, [2.0 * t[0]])
        assert abs(t[0][0]) < 0.05

    def test_in_place(self):
        t = [np.ones(3)]
        alias = t[0]
        state = adam_init(t)
        adam_step(state, t, [np.ones(3)])
        assert t[0] is alias
        assert not np.array_equal(alias, np.ones(3))

    def test_deterministic(self):
        def run():
            t = [np.ones(4), np.full((2, 2), -0.5)]
            state = adam_init(t, lr=0.02)
            rng = np.random.default_rng(9)
            for _ in range(17):
                adam_step(state, t, [rng.normal(size=4), rng.normal(size=(2, 2))])
            return t

        a, b = run(), run()
        for ta, tb in zip(a, b):
            assert np.array_equal(ta, tb)

    def test_elementwise_permutation_equivariance(self):
        # the rule touches each coordinate independently
        rng = np.random.default_rng(12)
        theta = rng.normal(size=6)
        g = rng.normal(size=6)
        perm = rng.permutation(6)

        t1 = [theta.copy()]
        s1 = adam_init(t1, lr=0.03)
        adam_step(s1, t1, [g])

        t2 = [theta[perm].copy()]
        s2 = adam_init(t2, lr=0.03)
        adam_step(s2, t2, [g[perm]])
        np.testing.assert_array_equal(t1[0][perm], t2[0])

    def test_multiple_tensors_independent(self):
        # a tensor with zero grads everywhere stays put while others move
        t = [np.ones(2), np.ones(2)]
        state = adam_init(t)
        adam_step(state, t, [np.ones(2), np.zeros(2)])
        assert not np.array_equal(t[0], np.ones(2))
        np.testing.assert_array_equal(t[1], np.ones(2))
