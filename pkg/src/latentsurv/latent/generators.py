"""Toy differentiable generators and feature extractors.

Each exposes ``forward(z)`` and ``vjp(z, upstream)``, the gradient of
``upstream . forward(z)`` with respect to ``z``. All are deterministic given
their construction seed.
"""
import numpy as np

from ..numerics.mlp import build_mlp, mlp_backward, mlp_forward
from ..numerics.rng import Rng


class IdentityGenerator:
    def __init__(self, latent_dim):
        self.latent_dim = self.output_dim = int(latent_dim)

    def forward(self, z):
        return np.array(z, dtype=np.float64)

    def vjp(self, z, upstream):
        return np.array(upstream, dtype=np.float64)


class LinearGenerator:
    """``x = A z`` with a fixed seeded matrix.

    With ``orthonormal=True`` (square only) A is the Q factor of a Gaussian
    matrix, so ``A.T`` is its inverse.
    """

    def __init__(self, latent_dim, output_dim=None, seed=0, orthonormal=False, matrix=None):
        if matrix is not None:
            self.A = np.array(matrix, dtype=np.float64)
        else:
            output_dim = latent_dim if output_dim is None else output_dim
            g = Rng(seed).normal((output_dim, latent_dim))
            if orthonormal:
                if output_dim != latent_dim:
                    raise ValueError("orthonormal generator must be square")
                q, r = np.linalg.qr(g)
                self.A = q * np.sign(np.diag(r))
            else:
                self.A = g / np.sqrt(latent_dim)
        self.output_dim, self.latent_dim = self.A.shape

    def forward(self, z):
        return self.A @ np.asarray(z, dtype=np.float64)

    def vjp(self, z, upstream):
        return self.A.T @ np.asarray(upstream, dtype=np.float64)


class MlpGenerator:
    """Small fixed network ``z -> tanh layers -> x`` built from the shared MLP code."""

    def __init__(self, latent_dim, output_dim=256, hidden=(128,), seed=0):
        self.latent_dim, self.output_dim = int(latent_dim), int(output_dim)
        net = build_mlp((self.latent_dim, *hidden, self.output_dim), Rng(seed),
                        batch_norm=False, hidden_activation="tanh", output_activation="tanh")
        # keep pre-activations in tanh's responsive range
        for layer in net.layers:
            layer.weight = layer.weight * 0.5
        self.network = net

    def forward(self, z):
        out, _ = mlp_forward(self.network, np.asarray(z, dtype=np.float64)[None, :])
        return out[0]

    def vjp(self, z, upstream):
        # no batch norm or dropout, so a train-mode pass equals eval and is cheap to reuse
        _, cache = mlp_forward(self.network, np.asarray(z, dtype=np.float64)[None, :])
        grads = mlp_backward(self.network, cache, np.asarray(upstream, dtype=np.float64)[None, :])
        return grads.input[0]


class IdentityExtractor:
    def forward(self, x):
        return np.array(x, dtype=np.float64)

    def vjp(self, x, upstream):
        return np.array(upstream, dtype=np.float64)


class LinearExtractor:
    """``phi(x) = B x`` with a fixed seeded matrix."""

    def __init__(self, input_dim, feature_dim=None, seed=1):
        feature_dim = input_dim if feature_dim is None else feature_dim
        self.B = Rng(seed).normal((feature_dim, input_dim)) / np.sqrt(input_dim)

    def forward(self, x):
        return self.B @ np.asarray(x, dtype=np.float64)

    def vjp(self, x, upstream):
        return self.B.T @ np.asarray(upstream, dtype=np.float64)


GENERATORS = {
    "identity": lambda latent_dim, seed: IdentityGenerator(latent_dim),
    "linear": lambda latent_dim, seed: LinearGenerator(latent_dim, seed=seed, orthonormal=True),
    "toy-mlp": lambda latent_dim, seed: MlpGenerator(latent_dim, seed=seed),
}

EXTRACTORS = {
    "identity": lambda input_dim, seed: IdentityExtractor(),
    "linear": lambda input_dim, seed: LinearExtractor(input_dim, seed=seed),
}


def make_generator(name, latent_dim, seed=0):
    try:
        return GENERATORS[name](latent_dim, seed)
    except KeyError:
        raise ValueError(f"unknown generator {name!r}; choose from {sorted(GENERATORS)}") from None


def make_extractor(name, input_dim, seed=1):
    try:
        return EXTRACTORS[name](input_dim, seed)
    except KeyError:
        raise ValueError(f"unknown extractor {name!r}; choose from {sorted(EXTRACTORS)}") from None
