"""Adam optimizer over flat parameter vectors."""
from dataclasses import dataclass, replace

import numpy as np

from ..errors import NonFiniteError

# learning-rate presets
PROJECTION_LR = 0.01
NETWORK_LR = 0.001


@dataclass(frozen=True)
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    learning_rate: float = NETWORK_LR
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros(cls, n, **hyper):
        return cls(np.zeros(n), np.zeros(n), 0, **hyper)

    @property
    def hyper(self):
        return (self.learning_rate, self.beta1, self.beta2, self.epsilon)


def adam_step(state, params, grads):
    """One Adam update with bias correction.

    Returns the advanced state and a new parameter array; inputs are not
    modified.
    """
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.first_moment.shape:
        raise ValueError(
            f"shape mismatch: params {params.shape}, grads {grads.shape}, "
            f"state {state.first_moment.shape}"
        )
    bad = np.flatnonzero(~np.isfinite(grads))
    if bad.size:
        raise NonFiniteError(f"non-finite gradient at index {bad[0]}", index=int(bad[0]))

    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    m = b1 * state.first_moment + (1.0 - b1) * grads
    v = b2 * state.second_moment + (1.0 - b2) * (grads * grads)
    m_hat = m / (1.0 - b1**t)
    v_hat = v / (1.0 - b2**t)
    new_params = params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return replace(state, first_moment=m, second_moment=v, step_count=t), new_params
