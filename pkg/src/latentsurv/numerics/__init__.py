from .adam import AdamState, adam_step
from .gradcheck import finite_diff_grad, relative_error
from .mlp import DenseLayer, MlpGradients, MlpNetwork, build_mlp, mlp_backward, mlp_forward
from .rng import Rng

__all__ = [
    "AdamState",
    "DenseLayer",
    "MlpGradients",
    "MlpNetwork",
    "Rng",
    "adam_step",
    "build_mlp",
    "finite_diff_grad",
    "mlp_backward",
    "mlp_forward",
    "relative_error",
]
