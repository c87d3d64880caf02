"""Dense float64 tensors with reverse-mode automatic differentiation.

The graph is rebuilt on every forward pass: each operation returns a new
Tensor that remembers its parents and a closure implementing its backward
rule. ``backward`` walks the recorded operations once, in reverse
topological order, and accumulates gradients into every tensor that
requires them. Everything is single-threaded and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ShapeMismatchError


class Tensor:
    """A float64 array plus the bookkeeping needed for backpropagation."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False, *, _parents=(), _op="leaf", _validate=True):
        arr = np.asarray(data, dtype=np.float64)
        if _validate and not np.all(np.isfinite(arr)):
            raise ContractError("tensor values must be finite")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = _parents
        self._backward = None
        self._op = _op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=False, _validate=False)

    def item(self) -> float:
        return float(self.data)

    def accumulate_grad(self, value: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += value

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, op={self._op}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value, requires_grad=False)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    g = grad
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _elementwise_shapes(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatchError(op, a.shape, b.shape) from None


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _elementwise_shapes("add", a, b)
    out = Tensor(a.data + b.data, a.requires_grad or b.requires_grad,
                 _parents=(a, b), _op="add", _validate=False)

    def _back():
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(out.grad, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(out.grad, b.shape))

    out._backward = _back
    return out


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _elementwise_shapes("sub", a, b)
    out = Tensor(a.data - b.data, a.requires_grad or b.requires_grad,
                 _parents=(a, b), _op="sub", _validate=False)

    def _back():
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(out.grad, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(-out.grad, b.shape))

    out._backward = _back
    return out


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _elementwise_shapes("mul", a, b)
    out = Tensor(a.data * b.data, a.requires_grad or b.requires_grad,
                 _parents=(a, b), _op="mul", _validate=False)

    def _back():
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(b.data * out.grad, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(a.data * out.grad, b.shape))

    out._backward = _back
    return out


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError("matmul", a.shape, b.shape)
    out = Tensor(a.data @ b.data, a.requires_grad or b.requires_grad,
                 _parents=(a, b), _op="matmul", _validate=False)

    def _back():
        if a.requires_grad:
            a.accumulate_grad(out.grad @ b.data.T)
        if b.requires_grad:
            b.accumulate_grad(a.data.T @ out.grad)

    out._backward = _back
    return out


def relu(x) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(np.maximum(x.data, 0.0), x.requires_grad,
                 _parents=(x,), _op="relu", _validate=False)

    def _back():
        if x.requires_grad:
            # Strict inequality: gradient is zero at exactly 0.
            x.accumulate_grad(out.grad * (x.data > 0.0))

    out._backward = _back
    return out


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    # Split formulation stays finite for any finite input.
    d = x.data
    val = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.clip(d, 0, None))),
                   np.exp(np.clip(d, None, 0)) / (1.0 + np.exp(np.clip(d, None, 0))))
    out = Tensor(val, x.requires_grad, _parents=(x,), _op="sigmoid", _validate=False)

    def _back():
        if x.requires_grad:
            x.accumulate_grad(out.grad * out.data * (1.0 - out.data))

    out._backward = _back
    return out


def tanh(x) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(np.tanh(x.data), x.requires_grad, _parents=(x,), _op="tanh", _validate=False)

    def _back():
        if x.requires_grad:
            x.accumulate_grad(out.grad * (1.0 - out.data * out.data))

    out._backward = _back
    return out


def reshape(x, shape) -> Tensor:
    x = _as_tensor(x)
    shape = tuple(shape)
    if int(np.prod(shape)) != x.size:
        raise ShapeMismatchError("reshape", x.shape, shape)
    out = Tensor(x.data.reshape(shape), x.requires_grad,
                 _parents=(x,), _op="reshape", _validate=False)

    def _back():
        if x.requires_grad:
            x.accumulate_grad(out.grad.reshape(x.shape))

    out._backward = _back
    return out


def rows(x, start: int, stop: int) -> Tensor:
    """Contiguous row slice along axis 0."""
    x = _as_tensor(x)
    if not (0 <= start < stop <= x.shape[0]):
        raise ShapeMismatchError("rows", x.shape, (start, stop))
    out = Tensor(x.data[start:stop], x.requires_grad,
                 _parents=(x,), _op="rows", _validate=False)

    def _back():
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[start:stop] = out.grad
            x.accumulate_grad(full)

    out._backward = _back
    return out


def col(x, index: int) -> Tensor:
    """Single column of a 2-D tensor, kept as a column vector."""
    x = _as_tensor(x)
    if x.data.ndim != 2 or not (0 <= index < x.shape[1]):
        raise ShapeMismatchError("col", x.shape, (index,))
    out = Tensor(x.data[:, index:index + 1], x.requires_grad,
                 _parents=(x,), _op="col", _validate=False)

    def _back():
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[:, index:index + 1] = out.grad
            x.accumulate_grad(full)

    out._backward = _back
    return out


def concat_cols(tensors) -> Tensor:
    """Concatenate 2-D tensors with equal row counts along axis 1."""
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ContractError("concat_cols needs at least one tensor")
    nrows = tensors[0].shape[0]
    for t in tensors:
        if t.data.ndim != 2 or t.shape[0] != nrows:
            raise ShapeMismatchError("concat_cols", tensors[0].shape, t.shape)
    out = Tensor(np.concatenate([t.data for t in tensors], axis=1),
                 any(t.requires_grad for t in tensors),
                 _parents=tuple(tensors), _op="concat_cols", _validate=False)
    widths = [t.shape[1] for t in tensors]

    def _back():
        offset = 0
        for t, w in zip(tensors, widths):
            if t.requires_grad:
                t.accumulate_grad(out.grad[:, offset:offset + w])
            offset += w

    out._backward = _back
    return out


def sum_all(x) -> Tensor:
    """Sum of all elements, as a scalar tensor."""
    x = _as_tensor(x)
    out = Tensor(np.sum(x.data), x.requires_grad, _parents=(x,), _op="sum_all", _validate=False)

    def _back():
        if x.requires_grad:
            x.accumulate_grad(np.full_like(x.data, out.grad))

    out._backward = _back
    return out


def mse_loss(pred, target) -> Tensor:
    """Mean over all elements of the squared difference."""
    pred, target = _as_tensor(pred), _as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeMismatchError("mse_loss", pred.shape, target.shape)
    if target.requires_grad:
        raise ContractError("mse_loss target must not require gradients")
    diff = pred.data - target.data
    out = Tensor(np.mean(diff * diff), pred.requires_grad,
                 _parents=(pred,), _op="mse_loss", _validate=False)

    def _back():
        if pred.requires_grad:
            pred.accumulate_grad(out.grad * 2.0 * diff / diff.size)

    out._backward = _back
    return out


@dataclass
class Tape:
    """Executed operations in topological order (inputs before consumers)."""

    nodes: list

    def __len__(self) -> int:
        return len(self.nodes)


def build_tape(root: Tensor) -> Tape:
    """Collect the gradient-carrying subgraph below `root`, leaves first."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            stack.append((parent, False))
    return Tape(order)


def backward(loss: Tensor) -> Tape:
    """Populate `grad` on every requires_grad tensor reachable from `loss`.

    Gradients accumulate across calls; zero them between passes when a
    fresh gradient is wanted. Returns the tape that was traversed.
    """
    if loss.data.ndim != 0:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any tensor requiring gradients")
    tape = build_tape(loss)
    # Op outputs start each pass fresh; leaf tensors keep accumulating so
    # repeated passes (after zeroing) reproduce identical gradients.
    for node in tape.nodes:
        if node._backward is not None:
            node.grad = None
    loss.accumulate_grad(np.ones_like(loss.data))
    for node in reversed(tape.nodes):
        if node._backward is not None and node.grad is not None:
            node._backward()
    return tape
