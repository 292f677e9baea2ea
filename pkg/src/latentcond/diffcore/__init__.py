from .mlp import Mlp, init_mlp, mlp_apply, mlp_forward
from .optim import Adam, Momentum
from .rng import RngStream, ZeroNoise
from .tensor import GradTape, Tensor, grad_scalar, value_and_grad

__all__ = [
    "Adam",
    "GradTape",
    "Mlp",
    "Momentum",
    "RngStream",
    "Tensor",
    "ZeroNoise",
    "grad_scalar",
    "init_mlp",
    "mlp_apply",
    "mlp_forward",
    "value_and_grad",
]
