"""Adam with per-coordinate learning rates."""

from __future__ import annotations

import numpy as np


class Adam:
    """Minimizes by ``x <- x - lr * m_hat / (sqrt(v_hat) + eps)``.

    ``lr`` may be a scalar or one rate per coordinate (parameter groups).
    """

    def __init__(self, lr, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if np.any(np.asarray(lr) <= 0):
            raise ValueError("learning rates must be positive")
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        self.lr = np.asarray(lr, dtype=float)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, x: np.ndarray, grad: np.ndarray) -> np.ndarray:
        grad = np.asarray(grad, dtype=float)
        if self.m is None:
            self.m = np.zeros_like(grad)
            self.v = np.zeros_like(grad)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return x - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
