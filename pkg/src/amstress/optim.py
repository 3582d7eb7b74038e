"""Adam optimizer over flat parameter vectors."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass(frozen=True)
class OptimizerState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, size: int, **hyper) -> "OptimizerState":
        return cls(np.zeros(size), np.zeros(size), **hyper)


def adam_step(params: np.ndarray, grads: np.ndarray, state: OptimizerState):
    """One bias-corrected Adam update; returns (new_params, new_state)."""
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError("params, grads and optimizer moments must have equal shapes")
    if not np.all(np.isfinite(grads)):
        raise NonFiniteGradientError("non-finite gradient encountered")

    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    m = b1 * state.m + (1.0 - b1) * grads
    v = b2 * state.v + (1.0 - b2) * grads * grads
    m_hat = m / (1.0 - b1**t)
    v_hat = v / (1.0 - b2**t)
    new = params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, replace(state, m=m, v=v, step=t)
