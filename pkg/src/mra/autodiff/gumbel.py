from __future__ import annotations

import numpy as np

from mra.autodiff.tensor import Tensor, as_tensor, softmax, straight_through
from mra.errors import ParameterError

_TINY = 1e-20


def sample_gumbel(shape, rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
    u = rng.random(shape)
    return (-np.log(-np.log(u + _TINY) + _TINY)).astype(dtype)


def gumbel_softmax(logits, temperature: float, hard: bool, rng: np.random.Generator) -> Tensor:
    """Relaxed categorical sample over the last axis.

    With ``hard`` the forward value is the exact one-hot of the relaxed
    sample's argmax and the gradient is that of the relaxed sample.
    """
    if not temperature > 0:
        raise ParameterError(f"temperature must be > 0, got {temperature}")
    logits = as_tensor(logits)
    noise = sample_gumbel(logits.shape, rng, logits.dtype)
    soft = softmax((logits + noise) * (1.0 / temperature), axis=-1)
    if not hard:
        return soft
    idx = soft.data.argmax(axis=-1)
    onehot = np.zeros_like(soft.data)
    np.put_along_axis(onehot, idx[..., None], 1.0, axis=-1)
    return straight_through(soft, onehot)
