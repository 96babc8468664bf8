"""Adaptive-moment optimizer."""

from __future__ import annotations

import numpy as np

from .params import ParamStore


class Adam:
    """Standard Adam with bias correction.

    step() consumes the gradients accumulated in the ParamStore and zeroes
    them afterwards, so each training iteration is forward -> backward ->
    step.
    """

    def __init__(
        self,
        params: ParamStore,
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self._v = {name: np.zeros_like(t.data) for name, t in params.items()}

    def step(self) -> None:
        self.t += 1
        correct1 = 1.0 - self.beta1**self.t
        correct2 = 1.0 - self.beta2**self.t
        for name, tensor in self.params.items():
            grad = tensor.grad
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            m_hat = m / correct1
            v_hat = v / correct2
            tensor.data -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(
                tensor.data.dtype, copy=False
            )
        self.params.zero_grad()
