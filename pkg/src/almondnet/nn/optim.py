"""First-order optimizers over Param lists: plain SGD and Adam."""

from __future__ import annotations

import numpy as np

from ..errors import NonFiniteGradient
from .layers import Param


class Optimizer:
    def __init__(self, params: list[Param], lr: float):
        self.params = params
        self.lr = lr
        self.step_index = 0

    def _checked_grads(self) -> list[np.ndarray]:
        grads = []
        for p in self.params:
            if p.grad is None:
                raise NonFiniteGradient(f"{p.name}: no gradient (backward not run?)")
            if not np.all(np.isfinite(p.grad)):
                raise NonFiniteGradient(f"{p.name}: gradient contains NaN/Inf")
            grads.append(p.grad)
        return grads

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        raise NotImplementedError


class SGD(Optimizer):
    """theta <- theta - lr * grad."""

    def step(self) -> None:
        grads = self._checked_grads()
        self.step_index += 1
        for p, g in zip(self.params, grads):
            p.value -= (self.lr * g).astype(p.value.dtype, copy=False)


class Adam(Optimizer):
    """Adam with bias correction: theta <- theta - lr * m_hat/(sqrt(v_hat) + eps)."""

    def __init__(
        self,
        params: list[Param],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        super().__init__(params, lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]

    def step(self) -> None:
        grads = self._checked_grads()
        self.step_index += 1
        t = self.step_index
        correction1 = 1.0 - self.beta1**t
        correction2 = 1.0 - self.beta2**t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            g = g.astype(p.value.dtype, copy=False)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / correction1
            v_hat = v / correction2
            p.value -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_tensors(self) -> list[tuple[str, np.ndarray]]:
        """Moment buffers, for optional checkpoint persistence."""
        out = []
        for p, m, v in zip(self.params, self.m, self.v):
            out.append((f"{p.name}.adam_m", m))
            out.append((f"{p.name}.adam_v", v))
        return out
