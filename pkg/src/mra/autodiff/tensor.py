"""Dense tensors with a define-by-run reverse-mode tape.

Operations record themselves on the innermost active :class:`Tape`; outside a
tape they are plain numpy computations. Leaves are tracked only when watched,
which is how parameters get frozen: an unwatched tensor is a constant.

    with Tape() as tape:
        tape.watch(w)
        loss = ((x @ w) ** 2).sum()
    (gw,) = backward(tape, loss, [w])
"""
from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

from mra.errors import ContractError, DimensionError

_local = threading.local()


def _stack() -> list:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape() -> "Tape | None":
    stack = _stack()
    return stack[-1] if stack else None


class Node:
    __slots__ = ("op", "inputs", "vjp")

    def __init__(self, op: str, inputs: tuple, vjp: Callable | None):
        self.op = op
        self.inputs = inputs
        self.vjp = vjp

    def __repr__(self) -> str:
        return f"Node({self.op}, inputs={self.inputs})"


class Tape:
    """Ordered operation records; a node's inputs always precede it."""

    def __init__(self):
        self.nodes: list[Node] = []
        self._leaves: dict[int, int] = {}
        self._leaf_refs: list[Tensor] = []

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _stack().pop()

    def watch(self, *tensors) -> None:
        for t in _flatten(tensors):
            if id(t) in self._leaves or t._tape is self:
                continue
            self._leaves[id(t)] = len(self.nodes)
            self._leaf_refs.append(t)
            self.nodes.append(Node("leaf", (), None))

    def index(self, t: "Tensor") -> int | None:
        if t._tape is self:
            return t._node
        return self._leaves.get(id(t))

    def record(self, op: str, inputs: tuple, vjp: Callable) -> int:
        self.nodes.append(Node(op, inputs, vjp))
        return len(self.nodes) - 1

    def __len__(self) -> int:
        return len(self.nodes)


def _flatten(items) -> Iterable["Tensor"]:
    for it in items:
        if isinstance(it, Tensor):
            yield it
        else:
            yield from _flatten(it)


class Tensor:
    __slots__ = ("data", "_tape", "_node", "name")

    def __init__(self, data, dtype=None, name: str | None = None):
        arr = np.array(data, dtype=dtype, copy=True) if dtype is not None else np.array(data, copy=True)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float32)
        self.data = arr
        self._tape = None
        self._node = None
        self.name = name

    # -- introspection -----------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"

    def __len__(self) -> int:
        return len(self.data)

    # -- operators ---------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, idx):
        return getitem(self, idx)

    # -- method forms ------------------------------------------------------
    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def relu(self):
        return relu(self)

    def tanh(self):
        return tanh(self)

    def detach(self):
        return detach(self)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    t = Tensor.__new__(Tensor)
    arr = np.asarray(x, dtype=dtype)
    if arr.dtype.kind != "f":
        arr = arr.astype(np.float32)
    t.data = arr
    t._tape = None
    t._node = None
    t.name = None
    return t


def _make(op: str, data: np.ndarray, inputs: Sequence[Tensor], vjp: Callable) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out._tape = None
    out._node = None
    out.name = None
    tape = active_tape()
    if tape is not None:
        idxs = tuple(tape.index(t) for t in inputs)
        if any(i is not None for i in idxs):
            out._tape = tape
            out._node = tape.record(op, idxs, vjp)
    return out


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    b = as_tensor(b)
    return as_tensor(a, like=b), b


def unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise -------------------------------------------------------------
def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    sa, sb = a.shape, b.shape
    return _make("add", a.data + b.data, (a, b), lambda g: (unbroadcast(g, sa), unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    sa, sb = a.shape, b.shape
    return _make("sub", a.data - b.data, (a, b), lambda g: (unbroadcast(g, sa), unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    ad, bd = a.data, b.data
    return _make("mul", ad * bd, (a, b),
                 lambda g: (unbroadcast(g * bd, ad.shape), unbroadcast(g * ad, bd.shape)))


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    ad, bd = a.data, b.data
    out = ad / bd
    return _make("div", out, (a, b),
                 lambda g: (unbroadcast(g / bd, ad.shape), unbroadcast(-g * out / bd, bd.shape)))


def neg(a: Tensor) -> Tensor:
    return _make("neg", -a.data, (a,), lambda g: (-g,))


def power(a: Tensor, p: float) -> Tensor:
    ad = a.data
    p = float(p)
    return _make("pow", ad ** p, (a,), lambda g: (g * p * ad ** (p - 1.0),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make("exp", out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    ad = a.data
    return _make("log", np.log(ad), (a,), lambda g: (g / ad,))


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0)
    return _make("relu", out, (a,), lambda g: (g * (out > 0),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _make("tanh", out, (a,), lambda g: (g * (1 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-a.data))
    return _make("sigmoid", out, (a,), lambda g: (g * out * (1 - out),))


def detach(a: Tensor) -> Tensor:
    return as_tensor(a.data)


def straight_through(soft: Tensor, hard: np.ndarray) -> Tensor:
    """Forward value ``hard``; gradient passes to ``soft`` unchanged."""
    hard = np.asarray(hard, dtype=soft.dtype)
    if hard.shape != soft.shape:
        raise DimensionError(f"straight_through shapes {soft.shape} vs {hard.shape}")
    return _make("straight_through", hard, (soft,), lambda g: (g,))


# -- linear algebra ----------------------------------------------------------
def matmul(a, b) -> Tensor:
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs operands of rank >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    tape = active_tape()
    need_a = tape is not None and tape.index(a) is not None
    need_b = tape is not None and tape.index(b) is not None

    def mm(x, w):
        if w.ndim == 2 and x.ndim > 2:
            return (x.reshape(-1, x.shape[-1]) @ w).reshape(x.shape[:-1] + (w.shape[-1],))
        return x @ w

    def vjp(g):
        ga = unbroadcast(mm(g, np.swapaxes(bd, -1, -2)), ad.shape) if need_a else None
        if not need_b:
            gb = None
        elif bd.ndim == 2:
            # one GEMM over the flattened batch instead of per-sample outer products
            a2 = np.broadcast_to(ad, g.shape[:-1] + ad.shape[-1:]).reshape(-1, ad.shape[-1])
            gb = a2.T @ g.reshape(-1, g.shape[-1])
        else:
            gb = unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape)
        return ga, gb

    return _make("matmul", mm(ad, bd), (a, b), vjp)


# -- reductions and shape ----------------------------------------------------
def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = a.shape
    out = np.sum(a.data, axis=axis, keepdims=keepdims, dtype=np.float64).astype(a.dtype)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).astype(g.dtype, copy=True),)

    return _make("sum", out, (a,), vjp)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([a.shape[ax] for ax in axes]))
    return tsum(a, axis, keepdims) * (1.0 / n)


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return _make("reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return _make("transpose", np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def swapaxes(a: Tensor, ax1: int, ax2: int) -> Tensor:
    return _make("swapaxes", np.swapaxes(a.data, ax1, ax2), (a,),
                 lambda g: (np.swapaxes(g, ax1, ax2),))


def expand_dims(a: Tensor, axis: int) -> Tensor:
    return reshape(a, np.expand_dims(a.data, axis).shape)


def getitem(a: Tensor, idx) -> Tensor:
    shape, dtype = a.shape, a.dtype

    def vjp(g):
        out = np.zeros(shape, dtype=dtype)
        np.add.at(out, idx, g)
        return (out,)

    return _make("getitem", a.data[idx], (a,), vjp)


def take_along(a: Tensor, index: np.ndarray, axis: int = -1) -> Tensor:
    """Gather ``a`` at integer ``index`` along ``axis`` (index keeps that axis)."""
    index = np.asarray(index)
    shape, dtype = a.shape, a.dtype

    def vjp(g):
        out = np.zeros(shape, dtype=dtype)
        np.put_along_axis(out, index, g, axis=axis)
        return (out,)

    return _make("take_along", np.take_along_axis(a.data, index, axis=axis), (a,), vjp)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    dtype = np.result_type(*[t.dtype for t in ts])
    datas = [t.data.astype(dtype, copy=False) for t in ts]
    sizes = [d.shape[axis] for d in datas]
    splits = np.cumsum(sizes)[:-1]
    return _make("concat", np.concatenate(datas, axis=axis), ts,
                 lambda g: tuple(np.split(g, splits, axis=axis)))


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    n = len(ts)
    return _make("stack", np.stack([t.data for t in ts], axis=axis), ts,
                 lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)))


# -- normalized exponentials -------------------------------------------------
def _check_axis(a: Tensor, axis: int) -> None:
    if a.ndim == 0 or not -a.ndim <= axis < a.ndim:
        raise DimensionError(f"axis {axis} invalid for shape {a.shape}")
    if a.shape[axis] == 0:
        raise DimensionError("softmax over an empty axis")


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    _check_axis(a, axis)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    ez = np.exp(z)
    out = ez / ez.sum(axis=axis, keepdims=True)
    return _make("softmax", out, (a,),
                 lambda g: (out * (g - (g * out).sum(axis=axis, keepdims=True)),))


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    _check_axis(a, axis)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    sm = np.exp(out)
    return _make("log_softmax", out, (a,),
                 lambda g: (g - sm * g.sum(axis=axis, keepdims=True),))


# -- backward ----------------------------------------------------------------
def backward(tape: Tape, loss: Tensor, wrt: Sequence[Tensor]) -> list[np.ndarray]:
    """Gradients of scalar ``loss`` w.r.t. each tensor in ``wrt``.

    Pure: the tape is not modified, so repeated calls agree exactly. Leaves
    the loss does not depend on (or that were never watched) get zeros.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._tape is None:
        return [np.zeros_like(t.data) for t in wrt]
    if loss._tape is not tape:
        raise ContractError("loss was recorded on a different tape")
    n = loss._node + 1
    grads: list = [None] * n
    grads[loss._node] = np.ones_like(loss.data)
    nodes = tape.nodes
    for i in range(n - 1, -1, -1):
        g = grads[i]
        if g is None:
            continue
        node = nodes[i]
        if node.vjp is None:
            continue
        for j, gj in zip(node.inputs, node.vjp(g)):
            if j is None:
                continue
            grads[j] = gj if grads[j] is None else grads[j] + gj
    result = []
    for t in wrt:
        j = tape.index(t)
        if j is None or j >= n or grads[j] is None:
            result.append(np.zeros_like(t.data))
        else:
            result.append(np.asarray(grads[j], dtype=t.dtype).reshape(t.shape))
    return result


def grad(fn: Callable[..., Tensor], params: Sequence[Tensor]) -> tuple[Tensor, list[np.ndarray]]:
    """Run ``fn()`` on a fresh tape watching ``params``; return (loss, grads)."""
    with Tape() as tape:
        tape.watch(params)
        loss = fn()
    return loss, backward(tape, loss, params)
