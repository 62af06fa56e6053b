"""
Reverse-mode automatic differentiation over numpy arrays

A Tensor wraps an ndarray and, while gradient recording is enabled, remembers the
tensors it was computed from together with a closure mapping the output gradient to
input gradients. `backward()` orders the recorded graph into a ComputationTape and
walks it in reverse.
"""

from __future__ import annotations

import math
import threading
from collections.abc import Callable, Iterator, Sequence
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from src.exceptions import ContractError, DimensionError

BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]

_grad_state = threading.local()


def is_grad_enabled() -> bool:
    """Whether operations on the current thread record graph edges"""
    return getattr(_grad_state, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording on the current thread (inference, EMA, metrics)"""
    previous = is_grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = previous


def _as_float_array(data: Any, dtype: np.dtype | type | None = None) -> np.ndarray:
    array = np.asarray(data, dtype=dtype)
    if not np.issubdtype(array.dtype, np.floating):
        array = array.astype(np.float64)
    return array


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand shape"""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, size in enumerate(shape) if size == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(op: str, a: tuple[int, ...], b: tuple[int, ...]) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a, b)
    except ValueError as err:
        raise DimensionError(f"Operands of '{op}' do not broadcast", a, b) from err


def _normalize_axes(axis: int | Sequence[int] | None, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    normalized = []
    for ax in axes:
        if not -ndim <= ax < max(ndim, 1):
            raise DimensionError(f"Axis {ax} out of range for rank {ndim}")
        normalized.append(ax % ndim if ndim else 0)
    return tuple(normalized)


class Tensor:
    """N-dimensional array node of a differentiable computation"""

    __slots__ = ("_backward", "_needs", "_op", "_parents", "data", "grad", "name", "requires_grad")
    __array_ufunc__ = None  # numpy defers to Tensor's reflected operators

    def __init__(self, data: Any, requires_grad: bool = False, name: str | None = None, dtype: Any = None):
        self.data: np.ndarray = _as_float_array(data, dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._needs: tuple[bool, ...] = ()
        self._backward: BackwardFn | None = None
        self._op = "leaf"

    # ------------------------------------------------------------------ basics
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def detach(self) -> Tensor:
        return Tensor(self.data, requires_grad=False, dtype=self.dtype)

    def __repr__(self) -> str:
        grad_flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self._op}{grad_flag})"

    def __len__(self) -> int:
        return self.shape[0]

    @staticmethod
    def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward: BackwardFn, op: str) -> Tensor:
        out = Tensor(data, dtype=data.dtype)
        if is_grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._needs = tuple(p.requires_grad for p in parents)
            out._backward = backward
            out._op = op
        return out

    def _lift(self, other: Any) -> Tensor:
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.dtype))

    # ------------------------------------------------------------- elementwise
    def __add__(self, other: Any) -> Tensor:
        other = self._lift(other)
        _broadcast_shape("add", self.shape, other.shape)
        a_shape, b_shape = self.shape, other.shape

        def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            return _unbroadcast(g, a_shape), _unbroadcast(g, b_shape)

        return Tensor._result(self.data + other.data, (self, other), backward, "add")

    def __radd__(self, other: Any) -> Tensor:
        return self._lift(other) + self

    def __sub__(self, other: Any) -> Tensor:
        other = self._lift(other)
        _broadcast_shape("sub", self.shape, other.shape)
        a_shape, b_shape = self.shape, other.shape

        def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            return _unbroadcast(g, a_shape), _unbroadcast(-g, b_shape)

        return Tensor._result(self.data - other.data, (self, other), backward, "sub")

    def __rsub__(self, other: Any) -> Tensor:
        return self._lift(other) - self

    def __mul__(self, other: Any) -> Tensor:
        other = self._lift(other)
        _broadcast_shape("mul", self.shape, other.shape)
        a, b = self.data, other.data

        def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)

        return Tensor._result(a * b, (self, other), backward, "mul")

    def __rmul__(self, other: Any) -> Tensor:
        return self._lift(other) * self

    def __truediv__(self, other: Any) -> Tensor:
        other = self._lift(other)
        _broadcast_shape("div", self.shape, other.shape)
        a, b = self.data, other.data

        def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            return _unbroadcast(g / b, a.shape), _unbroadcast(-g * a / (b * b), b.shape)

        return Tensor._result(a / b, (self, other), backward, "div")

    def __rtruediv__(self, other: Any) -> Tensor:
        return self._lift(other) / self

    def __neg__(self) -> Tensor:
        return Tensor._result(-self.data, (self,), lambda g: (-g,), "neg")

    def __pow__(self, exponent: float) -> Tensor:
        if isinstance(exponent, Tensor):
            raise ContractError("Only scalar exponents are supported")
        a = self.data

        def backward(g: np.ndarray) -> tuple[np.ndarray]:
            return (g * exponent * a ** (exponent - 1),)

        return Tensor._result(a**exponent, (self,), backward, "pow")

    def exp(self) -> Tensor:
        out = np.exp(self.data)
        return Tensor._result(out, (self,), lambda g: (g * out,), "exp")

    def log(self) -> Tensor:
        a = self.data
        return Tensor._result(np.log(a), (self,), lambda g: (g / a,), "log")

    def sqrt(self) -> Tensor:
        out = np.sqrt(self.data)
        return Tensor._result(out, (self,), lambda g: (g * 0.5 / out,), "sqrt")

    def tanh(self) -> Tensor:
        out = np.tanh(self.data)
        return Tensor._result(out, (self,), lambda g: (g * (1.0 - out * out),), "tanh")

    def gelu(self) -> Tensor:
        """Tanh approximation of the Gaussian error linear unit"""
        a = self.data
        c = math.sqrt(2.0 / math.pi)
        inner = c * (a + 0.044715 * a**3)
        t = np.tanh(inner)
        out = 0.5 * a * (1.0 + t)

        def backward(g: np.ndarray) -> tuple[np.ndarray]:
            d_inner = c * (1.0 + 3 * 0.044715 * a * a)
            return (g * (0.5 * (1.0 + t) + 0.5 * a * (1.0 - t * t) * d_inner),)

        return Tensor._result(out, (self,), backward, "gelu")

    def masked_fill(self, blocked: np.ndarray, value: float) -> Tensor:
        """Replace entries where `blocked` is true by a constant"""
        try:
            blocked = np.broadcast_to(np.asarray(blocked, dtype=bool), self.shape)
        except ValueError as err:
            raise DimensionError("Mask does not broadcast to tensor", np.shape(blocked), self.shape) from err
        out = np.where(blocked, np.asarray(value, dtype=self.dtype), self.data)
        return Tensor._result(out, (self,), lambda g: (np.where(blocked, 0.0, g),), "masked_fill")

    # ------------------------------------------------------------------ matmul
    def __matmul__(self, other: Any) -> Tensor:
        other = self._lift(other)
        if self.ndim < 2 or other.ndim < 2:
            raise DimensionError("matmul needs operands of rank >= 2", self.shape, other.shape)
        if self.shape[-1] != other.shape[-2]:
            raise DimensionError("matmul inner dimensions differ", self.shape, other.shape)
        _broadcast_shape("matmul", self.shape[:-2], other.shape[:-2])
        a, b = self.data, other.data

        def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            ga = g @ np.swapaxes(b, -1, -2)
            gb = np.swapaxes(a, -1, -2) @ g
            return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

        return Tensor._result(a @ b, (self, other), backward, "matmul")

    def __rmatmul__(self, other: Any) -> Tensor:
        return self._lift(other) @ self

    # -------------------------------------------------------------- reductions
    def sum(self, axis: int | Sequence[int] | None = None, keepdims: bool = False) -> Tensor:
        shape = self.shape
        axes = _normalize_axes(axis, self.ndim)

        def backward(g: np.ndarray) -> tuple[np.ndarray]:
            if not keepdims:
                g = np.expand_dims(g, axes) if axes else g
            return (np.broadcast_to(g, shape),)

        out = self.data.sum(axis=axes if axes else None, keepdims=keepdims)
        return Tensor._result(np.asarray(out, dtype=self.dtype), (self,), backward, "sum")

    def mean(self, axis: int | Sequence[int] | None = None, keepdims: bool = False) -> Tensor:
        axes = _normalize_axes(axis, self.ndim)
        count = int(np.prod([self.shape[a] for a in axes])) if axes else 1
        if count == 0:
            raise DimensionError("mean over an empty axis", self.shape)
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # ---------------------------------------------------------------- movement
    def reshape(self, *shape: int | Sequence[int]) -> Tensor:
        target = tuple(shape[0]) if len(shape) == 1 and not isinstance(shape[0], int) else shape
        original = self.shape
        try:
            out = self.data.reshape(target)
        except ValueError as err:
            raise DimensionError("Cannot reshape", original, tuple(target)) from err
        return Tensor._result(out, (self,), lambda g: (g.reshape(original),), "reshape")

    def transpose(self, *axes: int) -> Tensor:
        order = tuple(axes) if axes else tuple(reversed(range(self.ndim)))
        inverse = tuple(np.argsort(order))
        out = np.transpose(self.data, order)
        return Tensor._result(out, (self,), lambda g: (np.transpose(g, inverse),), "transpose")

    def swapaxes(self, a: int, b: int) -> Tensor:
        order = list(range(self.ndim))
        order[a], order[b] = order[b], order[a]
        return self.transpose(*order)

    def __getitem__(self, index: Any) -> Tensor:
        shape, dtype = self.shape, self.dtype

        def backward(g: np.ndarray) -> tuple[np.ndarray]:
            full = np.zeros(shape, dtype=dtype)
            np.add.at(full, index, g)
            return (full,)

        return Tensor._result(np.asarray(self.data[index]), (self,), backward, "getitem")

    # ---------------------------------------------------------------- backward
    def backward(self) -> None:
        """Populate `.grad` of every leaf tensor reachable from this scalar"""
        if self.size != 1:
            raise ContractError(f"backward() needs a scalar loss, got shape {self.shape}")
        tape = ComputationTape.from_root(self)
        pending: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(tape.nodes):
            grad = pending.pop(id(node), None)
            if grad is None:
                continue
            if node._backward is None:
                grad = np.array(grad, dtype=node.dtype).reshape(node.shape)
                node.grad = grad if node.grad is None else node.grad + grad
                continue
            for parent, needed, parent_grad in zip(node._parents, node._needs, node._backward(grad), strict=True):
                if parent_grad is None or not needed:
                    continue
                key = id(parent)
                pending[key] = parent_grad if key not in pending else pending[key] + parent_grad


@dataclass
class ComputationTape:
    """Recorded operations in topological order (inputs before outputs)"""

    nodes: list[Tensor] = field(default_factory=list)

    @classmethod
    def from_root(cls, root: Tensor) -> ComputationTape:
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
            for parent, needed in zip(node._parents, node._needs, strict=True):
                if needed and id(parent) not in visited:
                    stack.append((parent, False))
        return cls(nodes=order)

    def __len__(self) -> int:
        return len(self.nodes)


class Parameter(Tensor):
    """Trainable leaf tensor"""

    __slots__ = ()

    def __init__(self, data: Any, name: str | None = None, dtype: Any = None):
        super().__init__(data, requires_grad=True, name=name, dtype=dtype)


# -------------------------------------------------------------------- free ops
def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ContractError("concat needs at least one tensor")
    ndim = tensors[0].ndim
    ax = axis % ndim
    for t in tensors[1:]:
        if t.ndim != ndim or t.shape[:ax] + t.shape[ax + 1 :] != tensors[0].shape[:ax] + tensors[0].shape[ax + 1 :]:
            raise DimensionError("concat operands differ off the join axis", tensors[0].shape, t.shape)
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum([0, *sizes])

    def backward(g: np.ndarray) -> list[np.ndarray]:
        return [np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=ax) for i in range(len(tensors))]

    out = np.concatenate([t.data for t in tensors], axis=ax)
    return Tensor._result(out, tuple(tensors), backward, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ContractError("stack needs at least one tensor")
    return concat([np_expand(t, axis) for t in tensors], axis=axis)


def np_expand(t: Tensor, axis: int) -> Tensor:
    shape = list(t.shape)
    shape.insert(axis % (t.ndim + 1), 1)
    return t.reshape(tuple(shape))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Max-shifted softmax; rows sum to one along `axis`"""
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"softmax axis {axis} out of range", x.shape)
    if x.shape[axis] == 0:
        raise DimensionError("softmax over an empty axis", x.shape)
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return Tensor._result(y, (x,), backward, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"log_softmax axis {axis} out of range", x.shape)
    if x.shape[axis] == 0:
        raise DimensionError("log_softmax over an empty axis", x.shape)
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - log_norm
    probs = np.exp(out)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return Tensor._result(out, (x,), backward, "log_softmax")


def l2_norm(x: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    """Euclidean norm with a zero subgradient at the origin"""
    norm = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True))
    safe = np.where(norm > 0, norm, 1.0)
    a = x.data

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        g = g if keepdims else np.expand_dims(g, axis)
        return (np.where(norm > 0, g * a / safe, 0.0),)

    out = norm if keepdims else np.squeeze(norm, axis=axis)
    return Tensor._result(np.asarray(out, dtype=x.dtype), (x,), backward, "l2_norm")


def where(condition: np.ndarray, a: Tensor, b: Tensor) -> Tensor:
    cond = np.asarray(condition, dtype=bool)
    shape = _broadcast_shape("where", a.shape, b.shape)
    cond = np.broadcast_to(cond, shape)
    a_shape, b_shape = a.shape, b.shape

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(np.where(cond, g, 0.0), a_shape), _unbroadcast(np.where(cond, 0.0, g), b_shape)

    return Tensor._result(np.where(cond, a.data, b.data), (a, b), backward, "where")
