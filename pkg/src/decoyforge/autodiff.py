"""Reverse-mode automatic differentiation over dense float64 arrays.

A Tensor wraps a numpy array and remembers how it was produced; backward()
walks the recorded graph once in reverse topological order, accumulates
vector-Jacobian products, and then frees the graph. Gradients are plain
numpy arrays (no higher-order differentiation). Independent graphs can be
evaluated concurrently; a single graph is not thread-safe.

Gradients are taken w.r.t. parameters and, when a position tensor is
created with requires_grad, w.r.t. input coordinates (used by the
energy-score evaluation path).
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from ._kernels import scatter_add_rows
from .errors import IndexOutOfRange, NotAScalar, ShapeMismatch, ZeroVector

__all__ = [
    "Tensor", "tensor", "grad",
    "add", "sub", "mul", "div", "neg", "matmul",
    "sum", "mean", "exp", "log", "sqrt", "power", "cos", "clip",
    "concat", "reshape", "gather", "scatter_add",
    "logsumexp", "sigmoid", "tanh", "cosine_similarity",
]


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjps", "_freed")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _vjps=()):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._vjps = _vjps
        self._freed = False

    # -- basic introspection --

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise NotAScalar(f"item() on shape {self.data.shape}")
        return float(self.data.reshape(())[()])

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    # -- operator sugar --

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

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

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    # -- backward pass --

    def backward(self):
        """Reverse-mode sweep from this scalar; frees the graph afterwards."""
        if self.data.size != 1:
            raise NotAScalar(f"backward requires a scalar, got shape {self.data.shape}")
        if self._freed:
            raise RuntimeError("graph already freed by a previous backward()")
        order = _topo_order(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
            for parent, vjp in zip(node._parents, node._vjps):
                if not (parent.requires_grad or parent._parents):
                    continue
                contribution = vjp(g)
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + contribution
                else:
                    grads[key] = contribution
        for node in order:
            if node._parents or node is self:
                node._freed = True
                node._parents = ()
                node._vjps = ()


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents: Sequence[Tensor], vjps) -> Tensor:
    if any(p.requires_grad or p._parents for p in parents):
        return Tensor(data, requires_grad=False, _parents=tuple(parents), _vjps=tuple(vjps))
    return Tensor(data)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `g` down to `shape` (reverses numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_op(a, b, fwd, vjp_a, vjp_b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        data = fwd(a.data, b.data)
    except ValueError as exc:
        raise ShapeMismatch(f"{a.data.shape} vs {b.data.shape}: {exc}")
    return _make(
        data,
        (a, b),
        (
            lambda g: _unbroadcast(vjp_a(g, a.data, b.data), a.data.shape),
            lambda g: _unbroadcast(vjp_b(g, a.data, b.data), b.data.shape),
        ),
    )


# -- arithmetic ---------------------------------------------------------------


def add(a, b) -> Tensor:
    return _broadcast_op(a, b, np.add, lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b) -> Tensor:
    return _broadcast_op(a, b, np.subtract, lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b) -> Tensor:
    return _broadcast_op(a, b, np.multiply, lambda g, x, y: g * y, lambda g, x, y: g * x)


def div(a, b) -> Tensor:
    return _broadcast_op(
        a, b, np.divide, lambda g, x, y: g / y, lambda g, x, y: -g * x / (y * y)
    )


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return _make(-a.data, (a,), (lambda g: -g,))


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeMismatch(f"matmul needs 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    return _make(
        ad @ bd,
        (a, b),
        (lambda g: g @ bd.T, lambda g: ad.T @ g),
    )


# -- reductions ---------------------------------------------------------------


def sum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    xd = x.data

    def vjp(g):
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(g, axis)
        return np.broadcast_to(gg, xd.shape).copy()

    return _make(xd.sum(axis=axis, keepdims=keepdims), (x,), (vjp,))


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    if axis is None:
        count = x.data.size
    else:
        count = x.data.shape[axis]
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def logsumexp(x, axis=None, keepdims: bool = False) -> Tensor:
    """Numerically stable log(sum(exp(x))); gradient is softmax(x)."""
    x = _as_tensor(x)
    xd = x.data
    m = xd.max(axis=axis, keepdims=True)
    out = m + np.log(np.exp(xd - m).sum(axis=axis, keepdims=True))
    soft = np.exp(xd - out)
    if not keepdims:
        out = out.squeeze() if axis is None else out.squeeze(axis=axis)

    def vjp(g):
        if axis is None:
            return soft * g
        gg = g if keepdims else np.expand_dims(g, axis)
        return soft * gg

    return _make(out, (x,), (vjp,))


# -- elementwise --------------------------------------------------------------


def exp(x) -> Tensor:
    x = _as_tensor(x)
    out = np.exp(x.data)
    return _make(out, (x,), (lambda g: g * out,))


def log(x) -> Tensor:
    x = _as_tensor(x)
    xd = x.data
    return _make(np.log(xd), (x,), (lambda g: g / xd,))


def sqrt(x) -> Tensor:
    x = _as_tensor(x)
    out = np.sqrt(x.data)
    return _make(out, (x,), (lambda g: g * 0.5 / out,))


def power(x, p: float) -> Tensor:
    x = _as_tensor(x)
    xd = x.data
    p = float(p)
    return _make(xd**p, (x,), (lambda g: g * p * xd ** (p - 1.0),))


def cos(x) -> Tensor:
    x = _as_tensor(x)
    xd = x.data
    return _make(np.cos(xd), (x,), (lambda g: -g * np.sin(xd),))


def clip(x, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; gradient passes through the interior."""
    x = _as_tensor(x)
    xd = x.data
    mask = (xd >= lo) & (xd <= hi)
    return _make(np.clip(xd, lo, hi), (x,), (lambda g: g * mask,))


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    xd = x.data
    t = np.exp(-np.abs(xd))  # overflow-safe on both tails
    out = np.where(xd >= 0, 1.0 / (1.0 + t), t / (1.0 + t))
    return _make(out, (x,), (lambda g: g * out * (1.0 - out),))


def tanh(x) -> Tensor:
    x = _as_tensor(x)
    out = np.tanh(x.data)
    return _make(out, (x,), (lambda g: g * (1.0 - out * out),))


# -- structure ops ------------------------------------------------------------


def reshape(x, shape) -> Tensor:
    x = _as_tensor(x)
    old = x.data.shape
    return _make(x.data.reshape(shape), (x,), (lambda g: g.reshape(old),))


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    parts = [_as_tensor(t) for t in tensors]
    datas = [p.data for p in parts]
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + sizes)

    def make_vjp(k):
        sl = [slice(None)] * datas[0].ndim
        sl[axis] = slice(int(offsets[k]), int(offsets[k + 1]))
        sl = tuple(sl)
        return lambda g: g[sl]

    return _make(
        np.concatenate(datas, axis=axis), tuple(parts), tuple(make_vjp(k) for k in range(len(parts)))
    )


def gather(x, index) -> Tensor:
    """Row gather along axis 0; backward scatter-adds into the source."""
    x = _as_tensor(x)
    idx = np.asarray(index, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeMismatch(f"gather index must be 1-d, got {idx.shape}")
    n = x.data.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexOutOfRange(f"gather index outside [0, {n})")
    xd_shape = x.data.shape

    def vjp(g):
        if len(xd_shape) == 2:
            return scatter_add_rows(g, idx, xd_shape[0])
        out = np.zeros(xd_shape, dtype=np.float64)
        np.add.at(out, idx, g)
        return out

    return _make(x.data[idx], (x,), (vjp,))


def scatter_add(values, index, n_rows: int) -> Tensor:
    """Accumulate value rows into an (n_rows, d) zero tensor at `index`."""
    values = _as_tensor(values)
    idx = np.asarray(index, dtype=np.int64)
    if values.ndim != 2 or idx.ndim != 1 or idx.shape[0] != values.data.shape[0]:
        raise ShapeMismatch(
            f"scatter_add needs values (e, d) and index (e,), got {values.shape}, {idx.shape}"
        )
    if idx.size and (idx.min() < 0 or idx.max() >= n_rows):
        raise IndexOutOfRange(f"scatter index outside [0, {n_rows})")
    return _make(
        scatter_add_rows(values.data, idx, n_rows), (values,), (lambda g: g[idx],)
    )


# -- composites ---------------------------------------------------------------


def cosine_similarity(a, b, eps: float = 0.0) -> Tensor:
    """Cosine similarity of two 1-d embeddings (scalar tensor)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeMismatch(f"cosine_similarity needs equal 1-d shapes, got {a.shape}, {b.shape}")
    na = float(np.linalg.norm(a.data))
    nb = float(np.linalg.norm(b.data))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine similarity undefined for zero vectors")
    dot = sum(mul(a, b))
    denom = mul(sqrt(sum(mul(a, a))), sqrt(sum(mul(b, b))))
    return div(dot, add(denom, eps) if eps else denom)


def grad(output: Tensor, wrt: Sequence[Tensor]) -> list[np.ndarray]:
    """Gradients of a scalar output w.r.t. `wrt`; zeros for unreached inputs.

    Consumes the graph (single backward pass).
    """
    for t in wrt:
        t.zero_grad()
        if not t.requires_grad:
            raise ValueError("grad targets must have requires_grad=True")
    output.backward()
    return [t.grad if t.grad is not None else np.zeros_like(t.data) for t in wrt]
