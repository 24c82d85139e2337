# -*- coding: utf-8 -*-
"""
Adam optimizer over named numpy parameter arrays
"""

import logging
from typing import Dict

import numpy as np

from ..errors import ContractViolation

logger = logging.getLogger(__name__)


class Adam:
    """
    Adam with bias correction over a dict of named arrays

    The optimizer owns float64 copies of the given arrays and updates them in
    place, so `params[name]` keeps its identity across steps. Callers read
    results from `params` and must copy before the next step if they need a
    snapshot.
    """

    def __init__(self, params: Dict[str, np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ContractViolation(f"Adam learning rate must be positive, got {lr}")
        self.params = {name: np.array(value, dtype=np.float64) for name, value in params.items()}
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {name: np.zeros_like(value) for name, value in self.params.items()}
        self._v = {name: np.zeros_like(value) for name, value in self.params.items()}

    def step(self, grads: Dict[str, np.ndarray]) -> None:
        """Apply one update; parameters without a gradient entry are left alone"""
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for name, grad in grads.items():
            if name not in self.params:
                raise ContractViolation(f"Adam got a gradient for unknown parameter '{name}'")
            m = self._m[name] = self.beta1 * self._m[name] + (1.0 - self.beta1) * grad
            v = self._v[name] = self.beta2 * self._v[name] + (1.0 - self.beta2) * grad * grad
            m_hat = m / correction1
            v_hat = v / correction2
            self.params[name] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
