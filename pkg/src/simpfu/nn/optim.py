"""Adam optimizer with inverse-time learning-rate decay."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class Adam:
    """Bias-corrected Adam; effective rate lr_t = lr0 / (1 + decay * t).

    `t` counts optimizer steps and is incremented before each update, so the
    first step uses lr0 / (1 + decay).
    """

    def __init__(
        self,
        params: list[Tensor],
        lr0: float = 0.001,
        decay: float = 0.001,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-7,
    ):
        self.params = list(params)
        self.lr0 = lr0
        self.decay = decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def learning_rate(self, t: int | None = None) -> float:
        """Effective rate at step `t` (defaults to the current step count)."""
        if t is None:
            t = self.t
        return self.lr0 / (1.0 + self.decay * t)

    def step(self) -> None:
        self.t += 1
        lr = self.learning_rate()
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            mhat = m / bc1
            vhat = v / bc2
            p.data -= (lr * mhat / (np.sqrt(vhat) + self.eps)).astype(np.float32)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
