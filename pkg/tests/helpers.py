"""Shared test utilities: finite-difference oracles and tiny harnesses."""

import numpy as np

from deepstereo.tensor import Tensor

GRAD_ATOL = 1e-4
GRAD_RTOL = 2e-2


def central_difference(loss_fn, param: Tensor, index, h: float) -> float:
    flat = param.data.reshape(-1)
    orig = flat[index]
    flat[index] = orig + h
    up = loss_fn()
    flat[index] = orig - h
    down = loss_fn()
    flat[index] = orig
    return (up - down) / (2 * h)


def check_network_gradients(named_params, loss_builder, h=1e-3,
                            coords_per_param=4, seed=0):
    """Sampled central-difference check over every parameter tensor.

    ``loss_builder`` runs a fresh forward pass and returns the scalar loss
    tensor.  The analytic gradients must already be populated.  Returns the
    list of (name, analytic, numeric) failures.
    """
    rng = np.random.default_rng(seed)
    failures = []
    for name, p in named_params.items():
        assert p.grad is not None, f"{name} received no gradient"
        n = p.data.size
        count = min(coords_per_param, n)
        indices = rng.choice(n, size=count, replace=False)
        for idx in indices:
            numeric = central_difference(
                lambda: loss_builder().item(), p, idx, h)
            analytic = float(p.grad.reshape(-1)[idx])
            tol = max(GRAD_ATOL, GRAD_RTOL * abs(numeric))
            if abs(analytic - numeric) > tol:
                failures.append((name, idx, analytic, numeric))
    return failures
