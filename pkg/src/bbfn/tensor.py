"""Dense tensors with define-by-run reverse-mode autodiff.

Every differentiable op returns a new :class:`Tensor` that remembers its
parents and a closure mapping the output gradient to parent gradients.
Each recorded node carries a creation stamp, so :func:`backward` can replay
the tape in exact reverse execution order.

Broadcasting is deliberately narrow. A binary op accepts operands whose
shapes are equal, where one side is a scalar, where one shape is a suffix
of the other (a vector added over rows), or where both have the same rank
and every mismatched axis is 1 on one side (keepdims style). Anything else
raises :class:`DimensionError`.
"""

from __future__ import annotations

import itertools
from typing import Iterable, Sequence

import numpy as np

from . import kernels

_stamps = itertools.count()


class DimensionError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class GraphError(RuntimeError):
    """Misuse of the autodiff tape (non-scalar root, reused graph, ...)."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_stamp", "_spent")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self._stamp = -1
        self._spent = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        if self.data.size != 1:
            raise GraphError(f"expected a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    # operators
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
        if isinstance(other, Tensor):
            raise TypeError("division is only supported by a python scalar")
        return mul(self, 1.0 / other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _result(data: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
        out._stamp = next(_stamps)
    return out


# ---------------------------------------------------------------------------
# broadcasting helpers

def _broadcast_shape(sa: tuple, sb: tuple) -> tuple:
    if sa == sb:
        return sa
    na, nb = int(np.prod(sa)), int(np.prod(sb))
    if (na == 1 and len(sa) <= len(sb)) or (nb == 1 and len(sb) <= len(sa)):
        return np.broadcast_shapes(sa, sb)
    if len(sa) != len(sb):
        short, long_ = (sa, sb) if len(sa) < len(sb) else (sb, sa)
        if long_[len(long_) - len(short):] == short:
            return long_
    elif all(x == y or x == 1 or y == 1 for x, y in zip(sa, sb)):
        return np.broadcast_shapes(sa, sb)
    raise DimensionError(f"cannot broadcast shapes {sa} and {sb}")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    if lead > 0:
        g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape(a.shape, b.shape)
    return _result(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape(a.shape, b.shape)
    return _result(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape(a.shape, b.shape)
    return _result(a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    b = as_tensor(b)
    return as_tensor(a, like=b), b


def sigmoid(x: Tensor) -> Tensor:
    s = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _result(s, (x,), lambda g: (g * s * (1.0 - s),))


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    return _result(t, (x,), lambda g: (g * (1.0 - t * t),))


def relu(x: Tensor) -> Tensor:
    pos = x.data > 0
    return _result(np.where(pos, x.data, 0).astype(x.dtype, copy=False), (x,), lambda g: (g * pos,))


def exp(x: Tensor) -> Tensor:
    e = np.exp(x.data)
    return _result(e, (x,), lambda g: (g * e,))


def log(x: Tensor) -> Tensor:
    return _result(np.log(x.data), (x,), lambda g: (g / x.data,))


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values; the gradient is zero wherever the clamp is active."""
    inside = (x.data >= lo) & (x.data <= hi)
    return _result(np.clip(x.data, lo, hi), (x,), lambda g: (g * inside,))


def abs_(x: Tensor) -> Tensor:
    sgn = np.sign(x.data)
    return _result(np.abs(x.data), (x,), lambda g: (g * sgn,))


_UNARY = {"sigmoid": sigmoid, "tanh": tanh, "relu": relu, "exp": exp, "log": log, "abs": abs_}
_BINARY = {"add": add, "sub": sub, "mul": mul}


def elementwise(op_kind: str, a: Tensor, b: Tensor | None = None) -> Tensor:
    """Dispatch an elementwise op by name (sigmoid, tanh, relu, add, sub, mul, ...)."""
    if op_kind in _UNARY:
        if b is not None:
            raise TypeError(f"{op_kind} takes a single operand")
        return _UNARY[op_kind](a)
    if op_kind in _BINARY:
        if b is None:
            raise TypeError(f"{op_kind} needs two operands")
        return _BINARY[op_kind](a, b)
    raise ValueError(f"unknown elementwise op {op_kind!r}")


# ---------------------------------------------------------------------------
# linear algebra and shape ops

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b`` for [..., m, k] by [k, n] (shared weight) or matching batch dims."""
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    if b.ndim > 2 and b.shape[:-2] != a.shape[:-2]:
        raise DimensionError(f"matmul batch dims differ: {a.shape} @ {b.shape}")
    A, B = a.data, b.data

    def back(g):
        da = g @ np.swapaxes(B, -1, -2)
        if B.ndim == 2:
            db = A.reshape(-1, A.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            db = np.swapaxes(A, -1, -2) @ g
        return da, db

    return _result(A @ B, (a, b), back)


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = x.shape

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _result(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), back)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = x.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = int(np.prod([x.shape[i] for i in axes]))
    return mul(sum_(x, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return _result(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def swapaxes(x: Tensor, a1: int, a2: int) -> Tensor:
    return _result(np.swapaxes(x.data, a1, a2), (x,), lambda g: (np.swapaxes(g, a1, a2),))


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    xs = list(xs)
    sizes = [t.shape[axis] for t in xs]
    cuts = np.cumsum(sizes)[:-1]
    return _result(np.concatenate([t.data for t in xs], axis=axis), xs,
                   lambda g: tuple(np.split(g, cuts, axis=axis)))


def getitem(x: Tensor, index) -> Tensor:
    """Basic (slice / integer) indexing; advanced indexing is rejected."""
    idx = index if isinstance(index, tuple) else (index,)
    if any(not isinstance(i, (int, slice, type(Ellipsis), type(None))) for i in idx):
        raise TypeError("only basic slicing is differentiable")

    def back(g):
        full = np.zeros_like(x.data)
        full[index] += g
        return (full,)

    return _result(x.data[index], (x,), back)


def gather_rows(table: Tensor, ids) -> Tensor:
    """Row lookup ``table[ids]`` for an integer array of any shape."""
    ids = np.asarray(ids)
    if ids.dtype.kind not in "iu":
        raise TypeError("row ids must be integers")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"row id out of range for table with {table.shape[0]} rows")

    def back(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        return (full,)

    return _result(table.data[ids], (table,), back)


# ---------------------------------------------------------------------------
# fused ops backed by kernels

def softmax_lastdim(x: Tensor, mask=None) -> Tensor:
    """Softmax over the last axis.

    ``mask`` is a boolean array broadcastable to ``x.shape``; False entries
    (and ``-inf`` inputs) get probability 0. A row with nothing left raises.
    """
    if x.shape[-1] < 1:
        raise DimensionError("softmax over an empty axis")
    shape = x.shape
    x2 = x.data.reshape(-1, shape[-1])
    m2 = np.ones(x2.shape, dtype=bool) if mask is None else \
        np.broadcast_to(np.asarray(mask, dtype=bool), shape).reshape(x2.shape)
    p = kernels.softmax_forward(x2, m2)

    def back(g):
        return (kernels.softmax_backward(g.reshape(p.shape), p).reshape(shape),)

    return _result(p.reshape(shape), (x,), back)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError(f"layer_norm affine shapes {gamma.shape}/{beta.shape} do not match width {d}")
    if eps <= 0:
        raise ValueError("eps must be positive")
    shape = x.shape
    y, xhat, rstd = kernels.layer_norm_forward(x.data.reshape(-1, d), gamma.data, beta.data, eps)

    def back(g):
        dx, dgamma, dbeta = kernels.layer_norm_backward(g.reshape(-1, d), xhat, rstd, gamma.data)
        return dx.reshape(shape), dgamma, dbeta

    return _result(y.reshape(shape), (x, gamma, beta), back)


def gru_scan(gi: Tensor, U: Tensor, bh: Tensor, mask, reverse: bool = False) -> Tensor:
    """One GRU direction over precomputed input gates ``gi`` [N, T, 3h]."""
    N, T, h3 = gi.shape
    if h3 % 3 or U.shape != (h3 // 3, h3) or bh.shape != (h3,):
        raise DimensionError(f"gru_scan shapes gi={gi.shape} U={U.shape} b={bh.shape} are inconsistent")
    m = np.asarray(mask, dtype=bool)
    if m.shape != (N, T):
        raise DimensionError(f"gru mask shape {m.shape} != {(N, T)}")
    out, saved = kernels.gru_scan_forward(gi.data, U.data, bh.data, m, reverse)

    def back(g):
        return kernels.gru_scan_backward(g, U.data, m, reverse, saved)

    return _result(out, (gi, U, bh), back)


# ---------------------------------------------------------------------------
# backward sweep

def _tape(root: Tensor) -> list[Tensor]:
    seen: set[int] = set()
    nodes = []
    stack = [root]
    while stack:
        t = stack.pop()
        if id(t) in seen or t._backward is None:
            continue
        seen.add(id(t))
        nodes.append(t)
        stack.extend(p for p in t._parents if p.requires_grad)
    nodes.sort(key=lambda t: t._stamp, reverse=True)
    return nodes


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every leaf reachable from the scalar ``loss``.

    Gradients accumulate into existing ``.grad`` buffers. Running backward
    twice from the same root is refused; rebuild the forward pass instead.
    """
    if not loss.requires_grad:
        raise GraphError("loss does not depend on any tensor that requires grad")
    if loss.data.size != 1:
        raise GraphError(f"backward needs a scalar root, got shape {loss.shape}")
    if loss._spent:
        raise GraphError("backward already ran on this graph")
    loss._spent = True
    seed = np.ones_like(loss.data)
    if loss._backward is None:
        _accumulate(loss, seed)
        return
    pending: dict[int, np.ndarray] = {id(loss): seed}
    for node in _tape(loss):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            pg = np.asarray(pg, dtype=parent.dtype).reshape(parent.shape)
            if parent._backward is None:
                _accumulate(parent, pg)
            elif id(parent) in pending:
                pending[id(parent)] = pending[id(parent)] + pg
            else:
                pending[id(parent)] = pg


def _accumulate(leaf: Tensor, g: np.ndarray):
    leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g


def zero_grad(params: Iterable[Tensor]):
    for p in params:
        p.grad = None
