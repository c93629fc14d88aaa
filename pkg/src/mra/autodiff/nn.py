"""Named parameter collections and the few layers the networks use."""
from __future__ import annotations

from typing import Iterator, Mapping

import numpy as np

from mra.autodiff.tensor import Tensor, as_tensor, concat, matmul, relu, reshape


class ParamSet:
    """Ordered ``name -> Tensor`` mapping."""

    def __init__(self, items: Mapping[str, np.ndarray] | None = None, dtype=np.float32):
        self._t: dict[str, Tensor] = {}
        self.dtype = dtype
        for k, v in (items or {}).items():
            self.add(k, v)

    def add(self, name: str, array) -> Tensor:
        if name in self._t:
            raise KeyError(f"duplicate parameter {name}")
        t = Tensor(np.asarray(array, dtype=self.dtype), name=name)
        self._t[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._t[name]

    def __contains__(self, name: str) -> bool:
        return name in self._t

    def __iter__(self) -> Iterator[str]:
        return iter(self._t)

    def __len__(self) -> int:
        return len(self._t)

    def names(self) -> list[str]:
        return list(self._t)

    def tensors(self, prefix: str = "") -> list[Tensor]:
        return [t for k, t in self._t.items() if k.startswith(prefix)]

    def select(self, prefixes) -> list[Tensor]:
        if isinstance(prefixes, str):
            prefixes = (prefixes,)
        return [t for k, t in self._t.items() if k.startswith(tuple(prefixes))]

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self._t.items()}

    def load(self, arrays: Mapping[str, np.ndarray], strict: bool = True) -> None:
        for k, t in self._t.items():
            if k in arrays:
                a = np.asarray(arrays[k], dtype=t.dtype)
                if a.shape != t.shape:
                    raise ValueError(f"{k}: shape {a.shape} != {t.shape}")
                t.data = a.copy()
            elif strict:
                raise KeyError(f"missing parameter {k}")

    def copy(self) -> "ParamSet":
        return ParamSet(self.arrays(), dtype=self.dtype)

    def num_params(self) -> int:
        return sum(t.size for t in self._t.values())


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(fan_in, fan_out))


def add_linear(ps: ParamSet, name: str, fan_in: int, fan_out: int, rng: np.random.Generator,
               bias: bool = True, scale: float = 1.0) -> None:
    ps.add(f"{name}/w", glorot(rng, fan_in, fan_out) * scale)
    if bias:
        ps.add(f"{name}/b", np.zeros(fan_out))


def linear(x, ps: ParamSet, name: str) -> Tensor:
    x = as_tensor(x)
    if x.ndim == 1:
        return reshape(linear(reshape(x, (1, -1)), ps, name), (-1,))
    y = matmul(x, ps[f"{name}/w"])
    b = f"{name}/b"
    return y + ps[b] if b in ps else y


def add_mlp(ps: ParamSet, name: str, sizes: list[int], rng: np.random.Generator,
            out_scale: float = 1.0) -> None:
    for i in range(len(sizes) - 1):
        last = i == len(sizes) - 2
        add_linear(ps, f"{name}/l{i}", sizes[i], sizes[i + 1], rng, scale=out_scale if last else 1.0)


def mlp(x, ps: ParamSet, name: str, n_layers: int) -> Tensor:
    for i in range(n_layers):
        x = linear(x, ps, f"{name}/l{i}")
        if i < n_layers - 1:
            x = relu(x)
    return x


def cat(*xs) -> Tensor:
    return concat(xs, axis=-1)
