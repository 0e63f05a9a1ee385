"""Adam optimizer over named parameter tensors."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class Adam:
    """Standard Adam with bias correction.

    Moments live in the parameter dtype so float32 training stays fully
    deterministic and float64 verification keeps full precision.
    """

    def __init__(self, params, lr: float = 0.001, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        if not self.params:
            raise ValueError("no parameters to optimize")
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = [np.zeros_like(p.values) for p in self.params]
        self.v = [np.zeros_like(p.values) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.values)
            if not np.all(np.isfinite(g)):
                name = p.name or f"param[{i}]"
                raise FloatingPointError(f"non-finite gradient in {name}")
            dt = p.values.dtype.type
            self.m[i] = dt(self.beta1) * self.m[i] + dt(1.0 - self.beta1) * g
            self.v[i] = dt(self.beta2) * self.v[i] + dt(1.0 - self.beta2) * (g * g)
            m_hat = self.m[i] / dt(bc1)
            v_hat = self.v[i] / dt(bc2)
            p.values -= dt(self.lr) * m_hat / (np.sqrt(v_hat) + dt(self.eps))
