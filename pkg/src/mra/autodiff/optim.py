"""Adam with bias correction."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from mra.autodiff.tensor import Tensor
from mra.errors import DimensionError


@dataclass
class AdamState:
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, arrays: Sequence[np.ndarray], **kw) -> "AdamState":
        return cls(m=[np.zeros_like(a) for a in arrays], v=[np.zeros_like(a) for a in arrays], **kw)


def adam_update(arrays: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState,
                lr: float) -> tuple[list[np.ndarray], AdamState]:
    """Functional Adam step: returns new parameter arrays and a new state."""
    if len(arrays) != len(grads) or len(arrays) != len(state.m):
        raise DimensionError("parameter, gradient and state counts differ")
    step = state.step + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** step
    c2 = 1.0 - b2 ** step
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(arrays, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise DimensionError(f"shape mismatch in adam: {p.shape} vs {g.shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        upd = lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_p.append((p - upd).astype(p.dtype))
        new_m.append(m.astype(p.dtype))
        new_v.append(v.astype(p.dtype))
    return new_p, AdamState(step, new_m, new_v, b1, b2, state.eps)


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: AdamState,
              lr: float) -> AdamState:
    """Descend ``params`` in place (rebinding ``.data``); returns the new state."""
    new, state = adam_update([p.data for p in params], grads, state, lr)
    for p, a in zip(params, new):
        p.data = a
    return state


class Adam:
    """Stateful wrapper; ``ascend=True`` flips the sign of incoming gradients."""

    def __init__(self, params: Sequence[Tensor], lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.state = AdamState.zeros_like([p.data for p in self.params], beta1=betas[0],
                                          beta2=betas[1], eps=eps)

    def step(self, grads: Sequence[np.ndarray], ascend: bool = False) -> None:
        if ascend:
            grads = [-g for g in grads]
        self.state = adam_step(self.params, grads, self.state, self.lr)

    def reset(self) -> None:
        self.state = AdamState.zeros_like([p.data for p in self.params], beta1=self.state.beta1,
                                          beta2=self.state.beta2, eps=self.state.eps)
