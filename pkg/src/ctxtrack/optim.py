"""Adaptive-moment optimizer with bias correction."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor, collect_grads


class Adam:
    """Standard first/second-moment update. Parameters with zero gradient
    (and fresh state) are left untouched."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}

    def step(self, grads: dict[str, np.ndarray] | None = None) -> None:
        if grads is None:
            grads = collect_grads(self.params)
        for name, g in grads.items():
            if name not in self.params:
                raise ValueError(f"gradient for unknown parameter {name!r}")
            if np.asarray(g).shape != self.params[name].data.shape:
                raise ValueError(
                    f"gradient shape {np.asarray(g).shape} does not match "
                    f"parameter {name!r} shape {self.params[name].data.shape}")
        self.step_count += 1
        t = self.step_count
        for name, p in self.params.items():
            g = np.asarray(grads.get(name, 0.0), dtype=np.float64)
            m = self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            v = self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1 ** t)
            v_hat = v / (1.0 - self.beta2 ** t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
