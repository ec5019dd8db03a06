"""Latent projection: find z whose generated output matches a target in feature space."""
from dataclasses import dataclass

import numpy as np

from ..errors import LatentSurvError, NonFiniteError
from ..numerics.adam import PROJECTION_LR, AdamState, adam_step

LATENT_DIM = 512


@dataclass(frozen=True)
class ProjectionConfig:
    steps: int = 800
    learning_rate: float = PROJECTION_LR
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    init: np.ndarray = None  # None -> zero vector, the mean of a standard-normal prior

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")


def projection_loss(x_real, z, generator, extractor, target=None):
    """``|phi(x_real) - phi(G(z))|^2`` and its gradient in z."""
    if target is None:
        target = extractor.forward(x_real)
    x_syn = generator.forward(z)
    r = extractor.forward(x_syn) - target
    loss = float(r @ r)
    grad = generator.vjp(z, extractor.vjp(x_syn, 2.0 * r))
    return loss, grad


def project(x_real, generator, extractor, config=ProjectionConfig()):
    """Minimise the feature-space distance by Adam from ``config.init``.

    Returns ``(z, trace)``; ``trace[k]`` is the loss before step ``k`` and
    ``trace[-1]`` the loss at the returned z, so ``len(trace) == steps + 1``.
    """
    x_real = np.asarray(x_real, dtype=np.float64)
    if config.init is None:
        z = np.zeros(generator.latent_dim)
    else:
        z = np.array(config.init, dtype=np.float64)
    if z.shape != (generator.latent_dim,):
        raise ValueError(f"init has shape {z.shape}, generator expects ({generator.latent_dim},)")
    if x_real.shape != (generator.output_dim,):
        raise ValueError(f"target has shape {x_real.shape}, generator emits ({generator.output_dim},)")
    target = extractor.forward(x_real)
    state = AdamState.zeros(z.size, learning_rate=config.learning_rate, beta1=config.beta1,
                            beta2=config.beta2, epsilon=config.epsilon)
    trace = []
    for step in range(config.steps + 1):
        loss, grad = projection_loss(x_real, z, generator, extractor, target)
        if not np.isfinite(loss):
            raise NonFiniteError(f"non-finite projection loss at step {step}", index=step)
        trace.append(loss)
        if step == config.steps:
            break
        state, z = adam_step(state, z, grad)
    return z, np.array(trace)


def mean_latent(latents):
    """Coordinatewise mean of a nonempty collection of latent vectors."""
    latents = np.asarray(list(latents) if not isinstance(latents, np.ndarray) else latents,
                         dtype=np.float64)
    if latents.size == 0 or latents.shape[0] == 0:
        raise LatentSurvError("mean_latent of an empty set")
    return latents.mean(axis=0)
