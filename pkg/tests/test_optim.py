"""Optimizer arithmetic and the learning-rate schedule closed form."""

import numpy as np
import pytest

from deepstereo.config import TrainConfig, learning_rate_at
from deepstereo.optim import RMSprop
from deepstereo.tensor import Tensor


class TestRMSprop:
    def test_zero_grad_no_change(self):
        p = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        p.grad = np.zeros(2, dtype=np.float32)
        opt = RMSprop({"p": p}, lr=0.1)
        opt.step()
        np.testing.assert_array_equal(p.data, [1.0, 2.0])

    def test_missing_grad_skipped(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        RMSprop({"p": p}, lr=0.1).step()
        np.testing.assert_array_equal(p.data, [1.0])

    def test_single_step_closed_form(self):
        lr, alpha, eps, g = 0.01, 0.99, 1e-8, 0.5
        p = Tensor(np.array([1.0], dtype=np.float64), requires_grad=True)
        p.grad = np.array([g])
        opt = RMSprop({"p": p}, lr=lr, alpha=alpha, eps=eps)
        opt.step()
        expected = 1.0 - lr * g / (np.sqrt((1 - alpha) * g * g) + eps)
        assert p.data[0] == pytest.approx(expected, rel=1e-6)

    def test_quadratic_convergence(self):
        # minimize (x - 3)^2 with analytic gradient 2(x - 3); RMSprop steps
        # are nearly sign-normalized, so allow ~lr distance per iteration
        p = Tensor(np.array([5.0], dtype=np.float64), requires_grad=True)
        opt = RMSprop({"p": p}, lr=0.05)
        losses = []
        for _ in range(150):
            x = float(p.data[0])
            losses.append((x - 3.0) ** 2)
            p.grad = np.array([2.0 * (x - 3.0)])
            opt.step()
        # monotone decrease after burn-in and close to the minimum
        assert losses[-1] < 1e-2
        tail = losses[20:]
        assert all(b <= a + 1e-12 for a, b in zip(tail, tail[1:]))

    def test_shape_mismatch_rejected(self):
        p = Tensor(np.zeros(3), requires_grad=True)
        p.grad = np.zeros(4, dtype=np.float32)
        with pytest.raises(Exception, match="shape"):
            RMSprop({"p": p}).step()


class TestLearningRateSchedule:
    def test_closed_form_table(self):
        cfg = TrainConfig(learning_rate=0.01, lr_halve_start=100,
                          lr_halve_period=20, iterations=200)
        expected = {
            0: 0.01,
            99: 0.01,
            100: 0.005,
            119: 0.005,
            120: 0.0025,
            140: 0.00125,
            160: 0.000625,  # lr0 / 16 at start + 3 periods
            199: 0.01 * 2 ** -5,
        }
        for iteration, lr in expected.items():
            assert learning_rate_at(cfg, iteration) == pytest.approx(lr)

    def test_paper_scale_schedule(self):
        cfg = TrainConfig(learning_rate=0.01, lr_halve_start=120_000,
                          lr_halve_period=20_000, iterations=160_000)
        assert learning_rate_at(cfg, 119_999) == 0.01
        assert learning_rate_at(cfg, 120_000) == 0.005
        assert learning_rate_at(cfg, 140_000) == 0.0025
        assert learning_rate_at(cfg, 159_999) == 0.0025
