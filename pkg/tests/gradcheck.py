# -*- coding: utf-8 -*-
"""
Central finite-difference checks shared by the gradient tests
"""

from typing import Callable

import numpy as np

STEP = 1e-6
FLOOR = 1e-8


def relative_error(analytic, numeric) -> float:
    """Largest |a - n| / max(|a|, |n|, 1e-8) over all entries"""
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), FLOOR)
    return float(np.max(np.abs(a - n) / scale))


def numeric_gradient(fn: Callable[[np.ndarray], float], at: np.ndarray, h: float = STEP) -> np.ndarray:
    """Central differences of a scalar function of one array"""
    at = np.array(at, dtype=np.float64)
    grad = np.zeros_like(at)
    for index in np.ndindex(at.shape):
        plus = at.copy()
        minus = at.copy()
        plus[index] += h
        minus[index] -= h
        grad[index] = (fn(plus) - fn(minus)) / (2.0 * h)
    return grad


def gradient_mismatch(analytic, numeric, atol: float = 1e-7) -> float:
    """
    Largest relative error over entries whose absolute difference exceeds atol

    Entries where both gradients vanish differ only by finite-difference noise.
    """
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    significant = np.abs(a - n) > atol
    if not np.any(significant):
        return 0.0
    return relative_error(a[significant], n[significant])
