"""Reverse-mode differentiation over numpy arrays.

Every primitive records its parents and a closure computing vector-Jacobian
products. ``Tensor.backward`` walks the recorded graph once in reverse
topological order; afterwards the interior nodes are released, so a second
backward over the same graph raises :class:`GraphConsumedError`.
"""
from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


class GraphConsumedError(RuntimeError):
    pass


_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_vjp", "_consumed")
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable | None = None
        self._consumed = False

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
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

    @property
    def is_leaf(self) -> bool:
        return self._vjp is None

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    # -- backward ------------------------------------------------------
    def backward(self, grad=None) -> None:
        if self.data.size != 1 and grad is None:
            raise ShapeError(f"backward needs a scalar loss, got shape {self.shape}")
        if self._consumed:
            raise GraphConsumedError("graph was already differentiated; run the forward pass again")
        order = _topo_order(self)
        seed = np.ones_like(self.data) if grad is None else np.asarray(grad, dtype=self.dtype)
        grads: dict[int, np.ndarray] = {id(self): seed}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if node._vjp is None:
                if g is not None and node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            if node._consumed:
                raise GraphConsumedError("graph was already differentiated; run the forward pass again")
            if g is not None:
                pgrads = node._vjp(g)
                for p, pg in zip(node._parents, pgrads):
                    if pg is None or not p.requires_grad:
                        continue
                    if pg.shape != p.shape:
                        raise ShapeError(f"internal: grad shape {pg.shape} != {p.shape}")
                    key = id(p)
                    if key in grads:
                        grads[key] = grads[key] + pg
                    else:
                        grads[key] = pg
            node._consumed = True
            node._vjp = _consumed_vjp
            node._parents = ()

    # -- operators -----------------------------------------------------
    def __add__(self, o):
        return add(self, o)

    def __radd__(self, o):
        return add(o, self)

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    def __rmul__(self, o):
        return mul(o, self)

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(o, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, o):
        return matmul(self, o)

    def __rmatmul__(self, o):
        return matmul(o, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)


def _consumed_vjp(g):
    raise GraphConsumedError("graph was already differentiated; run the forward pass again")


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def astensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _record(data: np.ndarray, parents: Sequence[Tensor], vjp: Callable) -> Tensor:
    out = Tensor(data)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, astensor(b, like=a)
    b = astensor(b)
    return astensor(a, like=b), b


# -- elementwise binary -------------------------------------------------
def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast("add", a, b)
    return _record(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast("sub", a, b)
    return _record(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast("mul", a, b)
    return _record(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast("div", a, b)
    out = a.data / b.data

    def vjp(g):
        ga = g / b.data
        return _unbroadcast(ga, a.shape), _unbroadcast(-ga * out, b.shape)

    return _record(out, (a, b), vjp)


def neg(a: Tensor) -> Tensor:
    return _record(-a.data, (a,), lambda g: (-g,))


def where(mask, a, b) -> Tensor:
    """Select ``a`` where the constant boolean ``mask`` holds, else ``b``."""
    a, b = _pair(a, b)
    mask = np.asarray(mask, dtype=bool)
    out = np.where(mask, a.data, b.data)
    return _record(
        out,
        (a, b),
        lambda g: (
            _unbroadcast(np.where(mask, g, 0.0), a.shape),
            _unbroadcast(np.where(mask, 0.0, g), b.shape),
        ),
    )


# -- matmul -------------------------------------------------------------
def matmul(a, b) -> Tensor:
    a, b = _pair(a, b)
    if a.ndim == 0 or b.ndim == 0:
        raise ShapeError(f"matmul: scalar operand, shapes {a.shape} and {b.shape}")
    ka = a.shape[-1]
    kb = b.shape[0] if b.ndim == 1 else b.shape[-2]
    if ka != kb:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from None

    def vjp(g):
        ad = a.data[None, :] if a.ndim == 1 else a.data
        bd = b.data[:, None] if b.ndim == 1 else b.data
        g2 = g
        if a.ndim == 1:
            g2 = g2[..., None, :]
        if b.ndim == 1:
            g2 = g2[..., None]
        ga = g2 @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g2
        if a.ndim == 1:
            ga = ga[..., 0, :]
        if b.ndim == 1:
            gb = gb[..., 0]
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _record(out, (a, b), vjp)


# -- elementwise unary --------------------------------------------------
def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _record(np.where(mask, a.data, 0.0).astype(a.dtype), (a,), lambda g: (g * mask,))


def sigmoid(a: Tensor) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _record(out, (a,), lambda g: (g * out * (1.0 - out),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _record(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    return _record(np.log(a.data), (a,), lambda g: (g / a.data,))


def sin(a: Tensor) -> Tensor:
    return _record(np.sin(a.data), (a,), lambda g: (g * np.cos(a.data),))


def cos(a: Tensor) -> Tensor:
    return _record(np.cos(a.data), (a,), lambda g: (-g * np.sin(a.data),))


def square(a: Tensor) -> Tensor:
    return _record(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


def sqrt(a: Tensor) -> Tensor:
    """Square root; the derivative at exactly zero is taken as zero."""
    out = np.sqrt(a.data)

    def vjp(g):
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, 0.5 * g / safe, 0.0),)

    return _record(out, (a,), vjp)


def tabs(a: Tensor) -> Tensor:
    return _record(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


# -- reductions ---------------------------------------------------------
def _expand_reduced(g: np.ndarray, shape, axis, keepdims: bool) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g, shape)
    if not keepdims:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(ax % len(shape) for ax in axes)
        g = np.expand_dims(g, axes)
    return np.broadcast_to(g, shape)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = np.sum(a.data, axis=axis, keepdims=keepdims)
    return _record(np.asarray(out), (a,), lambda g: (np.array(_expand_reduced(g, a.shape, axis, keepdims)),))


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = np.mean(a.data, axis=axis, keepdims=keepdims)
    n = a.data.size // max(np.asarray(out).size, 1)
    return _record(
        np.asarray(out),
        (a,),
        lambda g: (np.array(_expand_reduced(g, a.shape, axis, keepdims)) / n,),
    )


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)
    return _record(out, (a,), lambda g: (out * (g - (g * out).sum(axis=axis, keepdims=True)),))


# -- structural ---------------------------------------------------------
def reshape(a: Tensor, shape) -> Tensor:
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {a.shape} into {tuple(shape)}") from None
    return _record(out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes=None) -> Tensor:
    out = np.transpose(a.data, axes)
    inv = None if axes is None else np.argsort(axes)
    return _record(out, (a,), lambda g: (np.transpose(g, inv),))


def swapaxes(a: Tensor, i: int, j: int) -> Tensor:
    return _record(np.swapaxes(a.data, i, j), (a,), lambda g: (np.swapaxes(g, i, j),))


def broadcast_to(a: Tensor, shape) -> Tensor:
    try:
        out = np.broadcast_to(a.data, shape)
    except ValueError:
        raise ShapeError(f"broadcast: cannot broadcast {a.shape} to {tuple(shape)}") from None
    return _record(np.array(out), (a,), lambda g: (_unbroadcast(g, a.shape),))


def _is_advanced(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def getitem(a: Tensor, idx) -> Tensor:
    out = a.data[idx]
    advanced = _is_advanced(idx)

    def vjp(g):
        ga = np.zeros_like(a.data)
        if advanced:
            np.add.at(ga, idx, g)
        else:
            ga[idx] += g
        return (ga,)

    return _record(np.array(out), (a,), vjp)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [astensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in ts]}") from None
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _record(out, ts, vjp)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [astensor(t) for t in tensors]
    try:
        out = np.stack([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError(f"stack: incompatible shapes {[t.shape for t in ts]}") from None

    def vjp(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(ts)))

    return _record(out, ts, vjp)


def custom(data: np.ndarray, parents: Sequence[Tensor], vjp: Callable) -> Tensor:
    """Record a fused operation with a hand-written vector-Jacobian product.

    ``vjp(g)`` must return one gradient (or ``None``) per parent.
    """
    return _record(data, parents, vjp)
