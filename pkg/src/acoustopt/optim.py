"""First-order update rules, the polynomial learning-rate decay and gradient clipping.

All updates work on flat float64 parameter vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericalError


def _check_finite(grads, epoch):
    if not np.all(np.isfinite(grads)):
        raise NumericalError("non-finite gradient", epoch=epoch)


@dataclass
class AdamState:
    alpha: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray = field(default=None, repr=False)
    v: np.ndarray = field(default=None, repr=False)


def adam_step(params, grads, state: AdamState, alpha=None, epoch=None):
    """Bias-corrected Adam update; ``alpha`` overrides ``state.alpha`` for this step."""
    grads = np.asarray(grads, dtype=float)
    _check_finite(grads, epoch)
    if state.m is None:
        state.m = np.zeros_like(grads)
        state.v = np.zeros_like(grads)
    if state.m.shape != grads.shape:
        raise DomainError(f"Adam state shaped {state.m.shape}, gradient {grads.shape}")
    a = state.alpha if alpha is None else alpha
    state.t += 1
    state.m = state.beta1 * state.m + (1 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1 - state.beta2) * grads * grads
    mhat = state.m / (1 - state.beta1**state.t)
    vhat = state.v / (1 - state.beta2**state.t)
    return np.asarray(params, dtype=float) - a * mhat / (np.sqrt(vhat) + state.eps)


def sgd_step(params, grads, alpha, epoch=None):
    grads = np.asarray(grads, dtype=float)
    _check_finite(grads, epoch)
    return np.asarray(params, dtype=float) - alpha * grads


def lr_schedule(alpha0, epoch):
    """``alpha0 * (0.2*epoch + 1)**-0.5``."""
    if epoch < 0:
        raise DomainError("epoch must be non-negative")
    return alpha0 * (0.2 * epoch + 1.0) ** -0.5


def clip_gradients(grads, max_norm=1.0):
    """Rescale so the global L2 norm does not exceed ``max_norm``."""
    if max_norm <= 0:
        raise DomainError("max_norm must be positive")
    grads = np.asarray(grads, dtype=float)
    norm = float(np.linalg.norm(grads))
    if norm > max_norm:
        return grads * (max_norm / norm)
    return grads
