"""Adam update rule on flat parameter vectors.

Kept separate from the tape: callers compute gradients however they like and
hand plain arrays in.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import NumericFault


@dataclass
class AdamState:
    """First/second moment accumulators for one parameter vector."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        return cls(m=np.zeros(n), v=np.zeros(n), beta1=beta1, beta2=beta2, eps=eps)


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
    """One Adam step; returns the updated parameters and advances ``state``.

    m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2, bias-corrected, then
    params - lr * m_hat / (sqrt(v_hat) + eps).
    """
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape or params.shape != state.m.shape:
        raise ValueError(
            f"shape mismatch: params {params.shape}, grad {grad.shape}, moments {state.m.shape}"
        )
    if lr <= 0.0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    if not np.all(np.isfinite(grad)):
        raise NumericFault("non-finite gradient passed to adam_step")

    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    return params - lr * m_hat / (np.sqrt(v_hat) + state.eps)
