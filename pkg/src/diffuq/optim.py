"""Adam optimizer on flat parameter vectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

__all__ = ["OptimizerConfig", "Adam"]


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_iter: int = 1000

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError(f"betas must lie in [0, 1): {self.beta1}, {self.beta2}")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be >= 1, got {self.max_iter}")


class Adam:
    """Standard Adam with bias correction. ``step`` returns the new point."""

    def __init__(self, config: OptimizerConfig = OptimizerConfig()):
        self.config = config
        self._m = None
        self._v = None
        self._t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """One descent step along ``grad`` (negate the gradient to ascend)."""
        c = self.config
        if self._m is None:
            self._m = np.zeros_like(params)
            self._v = np.zeros_like(params)
        self._t += 1
        self._m = c.beta1 * self._m + (1.0 - c.beta1) * grad
        self._v = c.beta2 * self._v + (1.0 - c.beta2) * grad * grad
        m_hat = self._m / (1.0 - c.beta1 ** self._t)
        v_hat = self._v / (1.0 - c.beta2 ** self._t)
        return params - c.learning_rate * m_hat / (np.sqrt(v_hat) + c.eps)
