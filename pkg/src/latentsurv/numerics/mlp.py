"""Fully connected network with batch normalization and inverted dropout.

Each layer computes affine -> batch norm (optional) -> activation -> dropout.
Dropout is never applied after the final layer. All arithmetic is float64.
"""
from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "linear", "tanh")
BN_MOMENTUM = 0.9
BN_EPS = 1e-5


@dataclass
class DenseLayer:
    weight: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray
    activation: str = "relu"
    gamma: np.ndarray = None
    beta: np.ndarray = None
    running_mean: np.ndarray = None
    running_var: np.ndarray = None

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ValueError("weight must be (in, out) and bias (out,)")

    @property
    def batch_norm(self):
        return self.gamma is not None

    @property
    def fan_in(self):
        return self.weight.shape[0]

    @property
    def fan_out(self):
        return self.weight.shape[1]

    def param_names(self):
        return ("weight", "bias", "gamma", "beta") if self.batch_norm else ("weight", "bias")


@dataclass
class MlpNetwork:
    layers: list
    dropout_rate: float = 0.0
    mode: str = "train"
    bn_momentum: float = BN_MOMENTUM
    bn_eps: float = BN_EPS

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got {self.mode!r}")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.fan_out != b.fan_in:
                raise ValueError(f"incompatible layer widths {a.fan_out} -> {b.fan_in}")

    @property
    def input_dim(self):
        return self.layers[0].fan_in

    @property
    def output_dim(self):
        return self.layers[-1].fan_out

    def train(self):
        self.mode = "train"
        return self

    def eval(self):
        self.mode = "eval"
        return self

    def parameters(self):
        """Trainable arrays in a fixed order (layer by layer)."""
        return [getattr(layer, name) for layer in self.layers for name in layer.param_names()]

    def get_flat(self):
        return np.concatenate([p.ravel() for p in self.parameters()])

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        pos = 0
        for layer in self.layers:
            for name in layer.param_names():
                p = getattr(layer, name)
                setattr(layer, name, flat[pos:pos + p.size].reshape(p.shape).copy())
                pos += p.size
        if pos != flat.size:
            raise ValueError(f"expected {pos} parameters, got {flat.size}")

    def copy(self):
        layers = [
            DenseLayer(**{k: (v.copy() if isinstance(v, np.ndarray) else v)
                          for k, v in vars(layer).items()})
            for layer in self.layers
        ]
        return MlpNetwork(layers, self.dropout_rate, self.mode, self.bn_momentum, self.bn_eps)


@dataclass
class MlpGradients:
    layers: list  # one dict per layer keyed like DenseLayer.param_names()
    input: np.ndarray

    def flat(self, net):
        return np.concatenate(
            [self.layers[i][name].ravel()
             for i, layer in enumerate(net.layers) for name in layer.param_names()]
        )


@dataclass
class _LayerCache:
    x: np.ndarray
    pre: np.ndarray
    xhat: np.ndarray = None
    inv_std: np.ndarray = None
    act_in: np.ndarray = None
    act_out: np.ndarray = None
    mask: np.ndarray = None


@dataclass
class MlpCache:
    mode: str
    layers: list = field(default_factory=list)


def build_mlp(widths, rng, dropout_rate=0.0, batch_norm=True, hidden_activation="relu",
              output_activation="linear"):
    """Network with the given layer widths, e.g. ``(d, 256, 128, 1)``.

    Weights are drawn from U(-sqrt(6/fan_in), sqrt(6/fan_in)); biases start at
    zero. Batch norm is attached to every hidden layer when requested.
    """
    layers = []
    n = len(widths) - 1
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        last = i == n - 1
        limit = np.sqrt(6.0 / fan_in)
        layer = DenseLayer(
            weight=rng.uniform((fan_in, fan_out), -limit, limit),
            bias=np.zeros(fan_out),
            activation=output_activation if last else hidden_activation,
        )
        if batch_norm and not last:
            layer.gamma = np.ones(fan_out)
            layer.beta = np.zeros(fan_out)
            layer.running_mean = np.zeros(fan_out)
            layer.running_var = np.ones(fan_out)
        layers.append(layer)
    return MlpNetwork(layers, dropout_rate=dropout_rate)


def _activate(name, a):
    if name == "relu":
        return np.maximum(a, 0.0)
    if name == "tanh":
        return np.tanh(a)
    return a


def _activate_grad(name, a_in, a_out, upstream):
    if name == "relu":
        return upstream * (a_in > 0.0)
    if name == "tanh":
        return upstream * (1.0 - a_out * a_out)
    return upstream


def mlp_forward(net, batch, rng=None):
    """Forward pass. Returns ``(outputs, cache)``.

    In train mode batch statistics are used, running statistics are updated
    and inverted dropout masks are drawn from ``rng``. Eval mode is a pure
    function of the input.
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ValueError(f"expected input of shape (n, {net.input_dim}), got {x.shape}")
    train = net.mode == "train"
    n = x.shape[0]
    if train and n < 2 and any(layer.batch_norm for layer in net.layers):
        raise ValueError("train-mode batch norm needs at least 2 samples")
    if train and net.dropout_rate > 0.0 and rng is None:
        raise ValueError("train-mode dropout needs an rng")

    cache = MlpCache(net.mode)
    last = len(net.layers) - 1
    for i, layer in enumerate(net.layers):
        lc = _LayerCache(x=x, pre=x @ layer.weight + layer.bias)
        a = lc.pre
        if layer.batch_norm:
            if train:
                mu = a.mean(axis=0)
                var = a.var(axis=0)
                m = net.bn_momentum
                layer.running_mean = m * layer.running_mean + (1.0 - m) * mu
                layer.running_var = m * layer.running_var + (1.0 - m) * var * n / (n - 1)
            else:
                mu, var = layer.running_mean, layer.running_var
            lc.inv_std = 1.0 / np.sqrt(var + net.bn_eps)
            lc.xhat = (a - mu) * lc.inv_std
            a = layer.gamma * lc.xhat + layer.beta
        lc.act_in = a
        a = _activate(layer.activation, a)
        lc.act_out = a
        if train and i != last and net.dropout_rate > 0.0:
            keep = 1.0 - net.dropout_rate
            lc.mask = (rng.uniform(a.shape) >= net.dropout_rate) / keep
            a = a * lc.mask
        cache.layers.append(lc)
        x = a
    return x, cache


def mlp_backward(net, cache, d_out):
    """Exact gradients of a train-mode forward pass.

    ``d_out`` is dLoss/dOutput with the output's shape. Batch-norm gradients
    include the dependence of the batch mean and variance on every sample.
    """
    if cache.mode != "train":
        raise ValueError("backward requires a train-mode cache")
    g = np.asarray(d_out, dtype=np.float64)
    if g.ndim == 1:
        g = g[:, None]
    grads = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        layer, lc = net.layers[i], cache.layers[i]
        if lc.mask is not None:
            g = g * lc.mask
        g = _activate_grad(layer.activation, lc.act_in, lc.act_out, g)
        lg = {}
        if layer.batch_norm:
            lg["gamma"] = (g * lc.xhat).sum(axis=0)
            lg["beta"] = g.sum(axis=0)
            dxhat = g * layer.gamma
            n = dxhat.shape[0]
            g = (lc.inv_std / n) * (
                n * dxhat - dxhat.sum(axis=0) - lc.xhat * (dxhat * lc.xhat).sum(axis=0)
            )
        lg["weight"] = lc.x.T @ g
        lg["bias"] = g.sum(axis=0)
        grads[i] = lg
        g = g @ layer.weight.T
    return MlpGradients(grads, g)
