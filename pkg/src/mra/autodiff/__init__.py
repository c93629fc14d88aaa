from mra.autodiff.checkpoint import load_checkpoint, save_checkpoint
from mra.autodiff.gumbel import gumbel_softmax
from mra.autodiff.nn import ParamSet
from mra.autodiff.optim import Adam, AdamState, adam_step, adam_update
from mra.autodiff.tensor import (
    Tape,
    Tensor,
    as_tensor,
    backward,
    concat,
    detach,
    exp,
    grad,
    log,
    log_softmax,
    matmul,
    relu,
    softmax,
    stack,
    straight_through,
    take_along,
    tanh,
)

__all__ = [
    "Adam", "AdamState", "ParamSet", "Tape", "Tensor", "adam_step", "adam_update", "as_tensor",
    "backward", "concat", "detach", "exp", "grad", "gumbel_softmax", "load_checkpoint", "log",
    "log_softmax", "matmul", "relu", "save_checkpoint", "softmax", "stack", "straight_through",
    "take_along", "tanh",
]
