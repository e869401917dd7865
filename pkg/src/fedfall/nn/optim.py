"""Adam on flat parameter vectors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from fedfall.errors import NumericalFailureError, ShapeMismatchError


@dataclass
class AdamState:
    """First/second moment accumulators plus the step counter."""

    dim: int
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray = field(init=False)
    v: np.ndarray = field(init=False)

    def __post_init__(self):
        self.m = np.zeros(self.dim)
        self.v = np.zeros(self.dim)


def adam_step(
    state: AdamState, weights: np.ndarray, grads: np.ndarray, lr: float | None = None
) -> np.ndarray:
    """One bias-corrected Adam update; returns the new weights.

    ``lr`` overrides the rate stored on the state for this step.
    """
    weights = np.asarray(weights, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if weights.shape != (state.dim,) or grads.shape != (state.dim,):
        raise ShapeMismatchError(
            f"expected vectors of length {state.dim}, got {weights.shape} and {grads.shape}"
        )
    if not np.all(np.isfinite(grads)):
        raise NumericalFailureError("non-finite gradient", layer="adam")
    rate = state.lr if lr is None else lr
    if rate <= 0:
        raise ValueError(f"learning rate must be positive, got {rate}")
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads**2
    m_hat = state.m / (1.0 - state.beta1**state.t)
    v_hat = state.v / (1.0 - state.beta2**state.t)
    return weights - rate * m_hat / (np.sqrt(v_hat) + state.eps)
