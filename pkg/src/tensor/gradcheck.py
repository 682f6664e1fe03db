from typing import Callable, Iterable, Optional, Tuple

import numpy as np


def numerical_gradient(
    fn: Callable[[np.ndarray], float],
    x: np.ndarray,
    eps: float = 1e-4,
    indices: Optional[Iterable[Tuple[int, ...]]] = None,
) -> np.ndarray:
    """
    Central finite-difference gradient of a scalar function.

    Args:
        fn: Function of one array returning a float
        x: Point of evaluation (not modified)
        eps: Step size
        indices: Entries to differentiate (default: all)

    Returns:
        Array shaped like ``x``; entries outside ``indices`` are zero
    """
    x = np.array(x, dtype=np.float64, copy=True)
    grad = np.zeros_like(x)
    for index in indices if indices is not None else np.ndindex(*x.shape):
        original = x[index]
        x[index] = original + eps
        upper = fn(x)
        x[index] = original - eps
        lower = fn(x)
        x[index] = original
        grad[index] = (upper - lower) / (2.0 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-7) -> np.ndarray:
    """Elementwise |a - n| / max(|a|, |n|, floor)"""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale
