"""RMSprop with a running second-moment accumulator.

state <- alpha * state + (1 - alpha) * grad^2
param <- param - lr * grad / (sqrt(state) + eps)
"""

from __future__ import annotations

from typing import Dict, Mapping

import numpy as np

from .tensor import DimensionError, Tensor


class RMSprop:
    def __init__(self, params: Mapping[str, Tensor], lr: float = 0.01,
                 alpha: float = 0.99, eps: float = 1e-8):
        self.params = dict(params)
        self.lr = lr
        self.alpha = alpha
        self.eps = eps
        self.state: Dict[str, np.ndarray] = {
            name: np.zeros_like(p.data) for name, p in self.params.items()}

    def step(self, lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        for name, p in self.params.items():
            if p.grad is None:
                continue
            grad = p.grad
            if grad.shape != p.data.shape:
                raise DimensionError(
                    f"{name}: grad shape {grad.shape} != param {p.data.shape}")
            sq = self.state[name]
            sq *= self.alpha
            sq += (1.0 - self.alpha) * grad * grad
            p.data -= (lr * grad / (np.sqrt(sq) + self.eps)).astype(p.dtype)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()
