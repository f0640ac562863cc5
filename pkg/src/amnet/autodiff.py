"""Reverse-mode automatic differentiation over dense float64 arrays.

A :class:`Tensor` wraps a NumPy array and, when gradient tracking is on,
remembers the tensors and local-gradient closure that produced it.
:func:`backward` linearises the graph behind a scalar result into a
:class:`Tape` (inputs always precede the operations that consume them) and
replays it once in reverse, accumulating gradients additively across
fan-out. The graph is rebuilt on every forward pass, so recurrent models
unrolled over varying window lengths need no special casing.

Only the broadcasting the model actually needs is supported: an operand
may broadcast up to the other operand's shape (leading batch axes or
size-1 axes), and scalars combine with anything. Outer-style expansions,
where the result matches neither input, are rejected loudly.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, DomainError

Array = np.ndarray

_GRAD_ENABLED = True


class no_grad:
    """Context manager that disables graph recording inside its block."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


class Tensor:
    """Dense n-dimensional float64 array with optional gradient tracking.

    Leaf tensors are validated to be finite on construction; intermediate
    results skip the check for speed (the training loop re-checks the loss
    every step, so non-finite values are detected, never silent).
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_grad_fn")

    def __init__(self, data, requires_grad: bool = False):
        self.data: Array = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(self.data)):
            raise DomainError("tensor initialised with non-finite entries")
        self.requires_grad = bool(requires_grad)
        self.grad: Array | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._grad_fn: Callable[[Array], tuple] | None = None

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- operators -----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_lift(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    # -- structural ops as methods --------------------------------------------

    def sum(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        return tensor_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, shape: Sequence[int]) -> "Tensor":
        return reshape(self, shape)

    def transpose(self) -> "Tensor":
        return transpose(self)

    def slice_axis(self, axis: int, start: int, stop: int) -> "Tensor":
        return slice_axis(self, axis, start, stop)


def _lift(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _make(data: Array, parents: tuple[Tensor, ...], grad_fn) -> Tensor:
    """Build an op result, recording parents only when gradients flow."""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._grad_fn = grad_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._grad_fn = None
    return out


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Reduce a broadcast gradient back to the operand's original shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _elementwise_shape(a: Tensor, b: Tensor, op_name: str) -> tuple[int, ...]:
    try:
        out_shape = np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise DimensionError(
            f"{op_name}: shapes {a.shape} and {b.shape} are not compatible"
        ) from None
    if (
        a.data.shape != out_shape
        and b.data.shape != out_shape
        and a.data.size > 1
        and b.data.size > 1
    ):
        raise DimensionError(
            f"{op_name}: outer-style broadcast of {a.shape} with {b.shape} "
            "is rejected; expand one operand explicitly"
        )
    return out_shape


# -- elementwise arithmetic ---------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _elementwise_shape(a, b, "add")
    ash, bsh = a.data.shape, b.data.shape

    def grad_fn(g):
        return _unbroadcast(g, ash), _unbroadcast(g, bsh)

    return _make(a.data + b.data, (a, b), grad_fn)


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _elementwise_shape(a, b, "sub")
    ash, bsh = a.data.shape, b.data.shape

    def grad_fn(g):
        return _unbroadcast(g, ash), _unbroadcast(-g, bsh)

    return _make(a.data - b.data, (a, b), grad_fn)


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _elementwise_shape(a, b, "mul")
    ad, bd = a.data, b.data

    def grad_fn(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _make(ad * bd, (a, b), grad_fn)


def div(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _elementwise_shape(a, b, "div")
    ad, bd = a.data, b.data

    def grad_fn(g):
        ga = _unbroadcast(g / bd, ad.shape)
        gb = _unbroadcast(-g * ad / (bd * bd), bd.shape)
        return ga, gb

    return _make(ad / bd, (a, b), grad_fn)


def neg(a: Tensor) -> Tensor:
    a = _lift(a)

    def grad_fn(g):
        return (-g,)

    return _make(-a.data, (a,), grad_fn)


# -- linear algebra -----------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Matrix product with optional shared leading batch axes.

    Accepts ``[..., m, k] @ [..., k, n]`` where the leading axes match, or
    where one operand is an unbatched matrix broadcast across the batch.
    """
    a, b = _lift(a), _lift(b)
    ad, bd = a.data, b.data
    if ad.ndim < 2 or bd.ndim < 2:
        raise DimensionError(f"matmul needs matrices, got {a.shape} and {b.shape}")
    if ad.shape[-1] != bd.shape[-2]:
        raise DimensionError(
            f"matmul: inner dimensions differ for shapes {a.shape} and {b.shape}"
        )
    la, lb = ad.shape[:-2], bd.shape[:-2]
    if la and lb and la != lb:
        raise DimensionError(
            f"matmul: batch dimensions differ for shapes {a.shape} and {b.shape}"
        )

    def grad_fn(g):
        ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape)
        gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape)
        return ga, gb

    return _make(ad @ bd, (a, b), grad_fn)


def transpose(a: Tensor) -> Tensor:
    """Swap the two trailing axes (matrix transpose, batch aware)."""
    a = _lift(a)
    if a.ndim < 2:
        raise DimensionError(f"transpose needs at least 2 dims, got {a.shape}")

    def grad_fn(g):
        return (np.swapaxes(g, -1, -2),)

    return _make(np.swapaxes(a.data, -1, -2).copy(), (a,), grad_fn)


# -- structural ops -----------------------------------------------------------


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    a = _lift(a)
    shape = tuple(int(s) for s in shape)
    if math.prod(shape) != a.size:
        raise DimensionError(f"cannot reshape {a.shape} into {shape}")
    old = a.data.shape

    def grad_fn(g):
        return (g.reshape(old),)

    return _make(a.data.reshape(shape), (a,), grad_fn)


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    parts = tuple(_lift(t) for t in tensors)
    if not parts:
        raise ContractError("concat of zero tensors")
    datas = [p.data for p in parts]
    try:
        out = np.concatenate(datas, axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: {exc}") from None
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        return tuple(np.split(g, offsets, axis=axis))

    return _make(out, parts, grad_fn)


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    a = _lift(a)
    axis = axis if axis >= 0 else a.ndim + axis
    if not 0 <= axis < a.ndim:
        raise DimensionError(f"slice axis {axis} out of range for {a.shape}")
    dim = a.shape[axis]
    if not (0 <= start < stop <= dim):
        raise DimensionError(
            f"slice [{start}:{stop}] out of range for axis {axis} of {a.shape}"
        )
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    full_shape = a.data.shape

    def grad_fn(g):
        gz = np.zeros(full_shape, dtype=np.float64)
        gz[index] = g
        return (gz,)

    return _make(a.data[index].copy(), (a,), grad_fn)


def tensor_sum(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = _lift(a)
    shape = a.data.shape

    def grad_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return _make(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), grad_fn)


def tensor_mean(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = _lift(a)
    shape = a.data.shape
    count = a.size if axis is None else shape[axis]
    if count == 0:
        raise ContractError("mean of an empty tensor")

    def grad_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, shape),)

    return _make(np.mean(a.data, axis=axis, keepdims=keepdims), (a,), grad_fn)


# -- nonlinearities -----------------------------------------------------------


def _stable_sigmoid(x: Array) -> Array:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    np.divide(1.0, 1.0 + np.exp(-x, where=pos, out=np.zeros_like(x)), out=out, where=pos)
    ex = np.exp(x, where=~pos, out=np.zeros_like(x))
    np.divide(ex, 1.0 + ex, out=out, where=~pos)
    return out


def sigmoid(a: Tensor) -> Tensor:
    a = _lift(a)
    out = _stable_sigmoid(a.data)

    def grad_fn(g):
        return (g * out * (1.0 - out),)

    return _make(out, (a,), grad_fn)


def tanh(a: Tensor) -> Tensor:
    a = _lift(a)
    out = np.tanh(a.data)

    def grad_fn(g):
        return (g * (1.0 - out * out),)

    return _make(out, (a,), grad_fn)


def relu(a: Tensor) -> Tensor:
    a = _lift(a)
    mask = a.data > 0

    def grad_fn(g):
        return (g * mask,)

    return _make(np.where(mask, a.data, 0.0), (a,), grad_fn)


def softplus(a: Tensor) -> Tensor:
    """log(1 + exp(x)), computed without overflow."""
    a = _lift(a)
    ad = a.data

    def grad_fn(g):
        return (g * _stable_sigmoid(ad),)

    return _make(np.logaddexp(0.0, ad), (a,), grad_fn)


def exp(a: Tensor) -> Tensor:
    a = _lift(a)
    out = np.exp(a.data)

    def grad_fn(g):
        return (g * out,)

    return _make(out, (a,), grad_fn)


def log(a: Tensor) -> Tensor:
    a = _lift(a)
    if np.any(a.data <= 0):
        raise DomainError("log of a non-positive value")
    ad = a.data

    def grad_fn(g):
        return (g / ad,)

    return _make(np.log(ad), (a,), grad_fn)


def sqrt(a: Tensor) -> Tensor:
    a = _lift(a)
    if np.any(a.data < 0):
        raise DomainError("sqrt of a negative value")
    out = np.sqrt(a.data)

    def grad_fn(g):
        return (g * 0.5 / out,)

    return _make(out, (a,), grad_fn)


def square(a: Tensor) -> Tensor:
    a = _lift(a)
    ad = a.data

    def grad_fn(g):
        return (g * 2.0 * ad,)

    return _make(ad * ad, (a,), grad_fn)


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis, computed with max-subtraction."""
    a = _lift(a)
    if a.ndim < 1:
        raise DimensionError("softmax needs at least one axis")
    shifted = a.data - np.max(a.data, axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=-1, keepdims=True)

    def grad_fn(g):
        inner = np.sum(g * out, axis=-1, keepdims=True)
        return ((g - inner) * out,)

    return _make(out, (a,), grad_fn)


# -- the tape and backward ----------------------------------------------------


class Tape:
    """Topologically ordered record of the operations behind one result."""

    __slots__ = ("nodes",)

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    def __len__(self) -> int:
        return len(self.nodes)


def trace(root: Tensor) -> Tape:
    """Linearise the graph reachable from ``root`` into a Tape."""
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return Tape(order)


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every tracked tensor the scalar loss depends on."""
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any tensor that requires grad")
    tape = trace(loss)
    if loss.grad is None:
        loss.grad = np.ones_like(loss.data)
    else:
        loss.grad = loss.grad + np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        if node._grad_fn is None or node.grad is None:
            continue
        for parent, grad in zip(node._parents, node._grad_fn(node.grad)):
            if grad is None or not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.data)
            parent.grad += grad


def zero_grads(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.grad = None


def grad_check(
    f: Callable[..., Tensor], inputs: Sequence[Tensor], eps: float = 1e-5
) -> float:
    """Max relative error of analytic vs central-difference gradients.

    ``f`` must be a deterministic scalar-valued function of its tensor
    arguments. The error for each entry is
    ``|analytic - numeric| / max(1, |numeric|)``.
    """
    inputs = list(inputs)
    for t in inputs:
        if not t.requires_grad:
            raise ContractError("grad_check inputs must require grad")
        t.grad = None
    out = f(*inputs)
    if out.data.size != 1:
        raise ContractError("grad_check expects a scalar-valued function")
    backward(out)
    analytic = [
        t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in inputs
    ]

    worst = 0.0
    with no_grad():
        for t, ga in zip(inputs, analytic):
            flat = t.data.reshape(-1)
            ga_flat = ga.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                hi = float(f(*inputs).data)
                flat[i] = orig - eps
                lo = float(f(*inputs).data)
                flat[i] = orig
                numeric = (hi - lo) / (2.0 * eps)
                if not np.isfinite(numeric):
                    raise DomainError("non-finite value in finite-difference probe")
                rel = abs(ga_flat[i] - numeric) / max(1.0, abs(numeric))
                if rel > worst:
                    worst = rel
    return worst
