"""Loss tests: pinned Laplace values, Gibbs inequality, gradient checks."""

import numpy as np
import pytest

from deepstereo.estimators import (DisparityMap, cost_to_posterior,
                                   posterior_from_probs)
from deepstereo.losses import (LaplaceTarget, l1_softargmin_loss,
                               laplace_target, subpixel_cross_entropy,
                               target_entropy)
from deepstereo.model import CostTensor
from deepstereo.tensor import Tensor

from helpers import central_difference


# Pinned by direct summation: N = sum_i exp(-|i - 3| / 2) over i in 0..7.
LAPLACE_N_UNIT_GRID = sum(np.exp(-abs(i - 3.0) / 2.0) for i in range(8))


class TestLaplaceTarget:
    def test_pinned_normalizer_and_peak(self):
        assert LAPLACE_N_UNIT_GRID == pytest.approx(3.5304158, abs=1e-6)
        target = laplace_target(3.0, np.arange(8.0), b=2.0)
        assert target.probs[3] == pytest.approx(1.0 / LAPLACE_N_UNIT_GRID,
                                                abs=1e-12)
        assert target.probs[3] == pytest.approx(0.2833, abs=1e-4)

    def test_sums_to_one_machine_precision(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            grid = np.sort(rng.uniform(0, 64, size=rng.integers(2, 40)))
            t = laplace_target(rng.uniform(-5, 70), grid, rng.uniform(0.1, 10))
            assert abs(t.probs.sum() - 1.0) <= 5e-16 * t.probs.size

    def test_symmetry_around_interior_grid_point(self):
        t = laplace_target(4.0, np.arange(9.0), b=2.0)
        for k in range(1, 5):
            assert t.probs[4 + k] == pytest.approx(t.probs[4 - k], abs=1e-15)

    def test_large_b_limit_is_uniform(self):
        t = laplace_target(7.3, np.arange(16.0), b=1e6)
        assert t.probs.max() - t.probs.min() < 1e-5

    def test_unimodal_peak_at_nearest_grid_point(self):
        grid = np.arange(0.0, 16.0, 2.0)
        t = laplace_target(6.7, grid, b=2.0)
        assert np.argmax(t.probs) == 3  # grid value 6 is nearest to 6.7
        diffs = np.diff(t.probs)
        peak = np.argmax(t.probs)
        assert (diffs[:peak] > 0).all() and (diffs[peak:] < 0).all()

    def test_rejects_bad_args(self):
        with pytest.raises(ValueError, match="positive"):
            laplace_target(1.0, np.arange(4.0), b=0.0)
        with pytest.raises(ValueError, match="nonempty"):
            laplace_target(1.0, np.array([]), b=1.0)


def uniform_gt(shape, value):
    return DisparityMap(np.full(shape, float(value)))


class TestSubpixelCrossEntropy:
    def test_perfect_prediction_hits_entropy_floor(self):
        grid = np.arange(8.0)
        gt = uniform_gt((2, 3), 3.0)
        mask = np.ones((2, 3), dtype=bool)
        q = laplace_target(3.0, grid, 2.0).probs
        probs = np.tile(q.reshape(-1, 1, 1), (1, 2, 3))
        loss = subpixel_cross_entropy(posterior_from_probs(probs), gt, mask)
        floor = target_entropy(grid, gt, mask, 2.0)
        assert loss.item() == pytest.approx(floor, abs=1e-10)

    def test_gibbs_inequality_on_random_posteriors(self):
        grid = np.arange(8.0)
        gt = uniform_gt((1, 1), 2.5)
        mask = np.ones((1, 1), dtype=bool)
        floor = target_entropy(grid, gt, mask, 2.0)
        rng = np.random.default_rng(1)
        for _ in range(1000):
            raw = rng.random((8, 1, 1)) + 1e-9
            probs = raw / raw.sum(axis=0, keepdims=True)
            loss = subpixel_cross_entropy(posterior_from_probs(probs), gt,
                                          mask)
            assert loss.item() >= floor - 1e-12

    def test_off_grid_truth_keeps_finite_loss_and_gradient(self):
        # even grid, fractional truth: the target still spreads over slices
        cost = Tensor(np.random.default_rng(2).normal(size=(8, 2, 2)),
                      requires_grad=True, dtype=np.float64)
        post = cost_to_posterior(CostTensor(cost))
        gt = uniform_gt((2, 2), 5.3)
        loss = subpixel_cross_entropy(post, gt, np.ones((2, 2), dtype=bool))
        assert np.isfinite(loss.item())
        loss.value.backward()
        assert np.abs(cost.grad).max() > 0

    def test_out_of_grid_pixels_are_masked(self):
        cost = Tensor(np.zeros((4, 1, 2)))
        post = cost_to_posterior(CostTensor(cost))  # grid 0,2,4,6
        gt = DisparityMap(np.array([[3.0, 50.0]]))
        loss = subpixel_cross_entropy(post, gt, np.ones((1, 2), dtype=bool))
        assert loss.pixel_count == 1

    def test_all_masked_is_an_error(self):
        cost = Tensor(np.zeros((4, 2, 2)))
        post = cost_to_posterior(CostTensor(cost))
        gt = uniform_gt((2, 2), 2.0)
        with pytest.raises(ValueError, match="no valid"):
            subpixel_cross_entropy(post, gt, np.zeros((2, 2), dtype=bool))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        cost = Tensor(rng.normal(size=(4, 2, 2)), requires_grad=True,
                      dtype=np.float64)
        gt = DisparityMap(rng.uniform(0, 6, size=(2, 2)))
        mask = np.ones((2, 2), dtype=bool)

        def loss_value():
            post = cost_to_posterior(CostTensor(cost))
            return subpixel_cross_entropy(post, gt, mask).value

        loss_value().backward()
        analytic = cost.grad.copy()
        for idx in range(cost.size):
            numeric = central_difference(lambda: loss_value().item(), cost,
                                         idx, 1e-6)
            assert analytic.reshape(-1)[idx] == pytest.approx(
                numeric, abs=1e-6, rel=1e-4)


class TestL1SoftArgminLoss:
    def test_point_mass_at_truth_is_zero(self):
        probs = np.zeros((8, 2, 2))
        probs[3] = 1.0
        loss = l1_softargmin_loss(posterior_from_probs(probs),
                                  uniform_gt((2, 2), 3.0),
                                  np.ones((2, 2), dtype=bool))
        assert loss.item() == pytest.approx(0.0, abs=1e-12)

    def test_unit_offset_is_one(self):
        probs = np.zeros((8, 2, 2))
        probs[4] = 1.0
        loss = l1_softargmin_loss(posterior_from_probs(probs),
                                  uniform_gt((2, 2), 3.0),
                                  np.ones((2, 2), dtype=bool))
        assert loss.item() == pytest.approx(1.0, abs=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        cost = Tensor(rng.normal(size=(5, 2, 3)), requires_grad=True,
                      dtype=np.float64)
        gt = DisparityMap(rng.uniform(0, 8, size=(2, 3)))
        mask = np.ones((2, 3), dtype=bool)

        def loss_value():
            post = cost_to_posterior(CostTensor(cost))
            return l1_softargmin_loss(post, gt, mask).value

        loss_value().backward()
        analytic = cost.grad.copy()
        for idx in range(cost.size):
            numeric = central_difference(lambda: loss_value().item(), cost,
                                         idx, 1e-6)
            assert analytic.reshape(-1)[idx] == pytest.approx(
                numeric, abs=1e-6, rel=1e-4)

    def test_all_masked_is_an_error(self):
        probs = np.ones((4, 2, 2)) / 4
        with pytest.raises(ValueError, match="no valid"):
            l1_softargmin_loss(posterior_from_probs(probs),
                               uniform_gt((2, 2), 1.0),
                               np.zeros((2, 2), dtype=bool))


class TestDescentSanity:
    def test_one_gradient_step_decreases_cross_entropy(self):
        rng = np.random.default_rng(5)
        base = rng.normal(size=(6, 3, 3))
        gt = DisparityMap(rng.uniform(0, 10, size=(3, 3)))
        mask = np.ones((3, 3), dtype=bool)

        def loss_at(arr):
            cost = Tensor(arr, requires_grad=True, dtype=np.float64)
            post = cost_to_posterior(CostTensor(cost))
            return cost, subpixel_cross_entropy(post, gt, mask)

        cost, loss = loss_at(base)
        before = loss.item()
        loss.value.backward()
        stepped = base - 0.1 * cost.grad
        _, after = loss_at(stepped)
        assert after.item() < before
