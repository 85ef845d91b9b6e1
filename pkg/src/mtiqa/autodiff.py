"""Reverse-mode automatic differentiation over dense float64 numpy arrays.

A ``Tensor`` wraps an ndarray and remembers how it was produced; calling
``backward()`` on a scalar output walks the graph in reverse topological
order and accumulates gradients into every tensor that requires them.
All arithmetic is done in 64-bit floats so finite-difference checks can be
run at tight tolerances.
"""

from __future__ import annotations

import numpy as np
from dataclasses import dataclass, field
from typing import Callable

from scipy.special import ndtr as _ndtr

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible with an operation."""


class NonFiniteError(FloatingPointError):
    """Raised when a graph node holds NaN or infinite values."""


def _as_array(value) -> np.ndarray:
    return np.asarray(value, dtype=np.float64)


class Tensor:
    """A node in the computation graph.

    ``data`` is always a float64 ndarray (scalars have shape ``()``),
    ``grad`` is filled lazily during ``backward()`` and has the same shape.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._op = "leaf"

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
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(op={self._op}, shape={self.shape}, requires_grad={self.requires_grad})"

    # -- graph construction ----------------------------------------------------

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        """Backpropagate from this node; it must hold a single scalar."""
        if self.data.size != 1:
            raise ValueError(
                f"backward() requires a scalar seed, got shape {self.shape}"
            )
        order = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar --------------------------------------------------------

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
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def _toposort(root: Tensor) -> list[Tensor]:
    """Iterative depth-first topological order of the nodes feeding ``root``."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, int]] = [(root, 0)]
    while stack:
        node, child = stack[-1]
        if child < len(node._parents):
            stack[-1] = (node, child + 1)
            parent = node._parents[child]
            if id(parent) not in seen and parent._backward is not None:
                seen.add(id(parent))
                stack.append((parent, 0))
        else:
            stack.pop()
            if node._backward is not None:
                order.append(node)
    return order


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _node(data: np.ndarray, parents: tuple[Tensor, ...], op: str,
          backward: Callable[[np.ndarray], None]) -> Tensor:
    out = Tensor(data)
    out._op = op
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


# -- elementwise arithmetic ------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _node(data, (a, b), "add", backward)


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    data = a.data - b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _node(data, (a, b), "sub", backward)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _node(data, (a, b), "mul", backward)


def div(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    data = a.data / b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _node(data, (a, b), "div", backward)


# -- linear algebra ----------------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return _node(data, (a, b), "matmul", backward)


def transpose(a) -> Tensor:
    a = _wrap(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a 2-d tensor, got shape {a.shape}")
    data = a.data.T.copy()

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.T)

    return _node(data, (a,), "transpose", backward)


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    try:
        data = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}") from exc

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.reshape(a.shape))

    return _node(data, (a,), "reshape", backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat of an empty sequence")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(lo, hi)
                t._accumulate(g[tuple(index)])

    return _node(data, tuple(tensors), "concat", backward)


def getitem(a, key) -> Tensor:
    a = _wrap(a)
    data = a.data[key]
    if np.isscalar(data) or data.ndim == 0:
        data = np.asarray(data, dtype=np.float64)

    def backward(g):
        if a.requires_grad:
            scatter = np.zeros_like(a.data)
            scatter[key] += g
            a._accumulate(scatter)

    return _node(np.array(data, copy=True), (a,), "getitem", backward)


def take(a, indices, axis: int = 0) -> Tensor:
    """Row gather: ``out[i] = a[indices[i]]`` along the leading axis."""
    a = _wrap(a)
    if axis != 0:
        raise ShapeError("take currently supports axis=0 only")
    idx = np.asarray(indices, dtype=np.intp)
    data = np.take(a.data, idx, axis=0)

    def backward(g):
        if a.requires_grad:
            scatter = np.zeros_like(a.data)
            np.add.at(scatter, idx, g)
            a._accumulate(scatter)

    return _node(data, (a,), "take", backward)


def pick(a, columns) -> Tensor:
    """Per-row column gather from a matrix: ``out[i] = a[i, columns[i]]``."""
    a = _wrap(a)
    if a.ndim != 2:
        raise ShapeError(f"pick expects a 2-d tensor, got shape {a.shape}")
    cols = np.asarray(columns, dtype=np.intp)
    if cols.shape != (a.shape[0],):
        raise ShapeError(f"pick: need one column per row, got {cols.shape} for {a.shape}")
    rows = np.arange(a.shape[0])
    data = a.data[rows, cols]

    def backward(g):
        if a.requires_grad:
            scatter = np.zeros_like(a.data)
            np.add.at(scatter, (rows, cols), g)
            a._accumulate(scatter)

    return _node(data, (a,), "pick", backward)


# -- pointwise nonlinearities ------------------------------------------------------


def exp(a) -> Tensor:
    a = _wrap(a)
    data = np.exp(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * data)

    return _node(data, (a,), "exp", backward)


def log(a) -> Tensor:
    a = _wrap(a)
    data = np.log(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g / a.data)

    return _node(data, (a,), "log", backward)


def sqrt(a) -> Tensor:
    a = _wrap(a)
    data = np.sqrt(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * 0.5 / data)

    return _node(data, (a,), "sqrt", backward)


def tanh(a) -> Tensor:
    a = _wrap(a)
    data = np.tanh(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * (1.0 - data * data))

    return _node(data, (a,), "tanh", backward)


def relu(a) -> Tensor:
    a = _wrap(a)
    data = np.maximum(a.data, 0.0)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * (a.data > 0.0))

    return _node(data, (a,), "relu", backward)


def normal_cdf(a) -> Tensor:
    """Standard normal cumulative distribution; the adjoint is the density."""
    a = _wrap(a)
    data = np.asarray(_ndtr(a.data), dtype=np.float64)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * _INV_SQRT_2PI * np.exp(-0.5 * a.data * a.data))

    return _node(data, (a,), "normal_cdf", backward)


# -- reductions ----------------------------------------------------------------


def tensor_sum(a, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if a.requires_grad:
            if axis is None:
                a._accumulate(np.broadcast_to(g, a.shape).copy())
            else:
                expanded = g if keepdims else np.expand_dims(g, axis)
                a._accumulate(np.broadcast_to(expanded, a.shape).copy())

    return _node(data, (a,), "sum", backward)


def mean(a, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    count = a.size if axis is None else a.shape[axis]
    data = a.data.mean(axis=axis, keepdims=keepdims)

    def backward(g):
        if a.requires_grad:
            if axis is None:
                a._accumulate(np.broadcast_to(g / count, a.shape).copy())
            else:
                expanded = g if keepdims else np.expand_dims(g, axis)
                a._accumulate(np.broadcast_to(expanded / count, a.shape).copy())

    return _node(data, (a,), "mean", backward)


# -- composite normalizers ------------------------------------------------------


def softmax(a, axis: int = -1) -> Tensor:
    """Numerically stable softmax along ``axis`` (max-subtracted)."""
    a = _wrap(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    exps = np.exp(shifted)
    data = exps / exps.sum(axis=axis, keepdims=True)

    def backward(g):
        if a.requires_grad:
            inner = (g * data).sum(axis=axis, keepdims=True)
            a._accumulate(data * (g - inner))

    return _node(data, (a,), "softmax", backward)


def l2_normalize(a, axis: int = -1) -> Tensor:
    """Scale slices along ``axis`` to unit Euclidean norm."""
    a = _wrap(a)
    norm = np.sqrt((a.data * a.data).sum(axis=axis, keepdims=True))
    if np.any(norm < 1e-12):
        raise ValueError("l2_normalize: a slice has (near-)zero norm")
    data = a.data / norm

    def backward(g):
        if a.requires_grad:
            inner = (g * data).sum(axis=axis, keepdims=True)
            a._accumulate((g - data * inner) / norm)

    return _node(data, (a,), "l2_normalize", backward)


# -- gradient verification ------------------------------------------------------


@dataclass
class GradCheckReport:
    """Per-parameter worst relative error of analytic vs. numeric gradients."""

    tolerance: float
    max_errors: dict[str, float] = field(default_factory=dict)

    @property
    def worst(self) -> float:
        return max(self.max_errors.values()) if self.max_errors else 0.0

    @property
    def passed(self) -> bool:
        return self.worst <= self.tolerance

    def __str__(self) -> str:
        verdict = "ok" if self.passed else "FAILED"
        return f"grad check {verdict}: worst rel err {self.worst:.3e} (tol {self.tolerance:.1e})"


def _check_graph_finite(root: Tensor) -> None:
    for node in _toposort(root) + [root]:
        if not np.all(np.isfinite(node.data)):
            raise NonFiniteError(f"non-finite values in node '{node._op}'")


def grad_check(build: Callable[[], Tensor], params: dict[str, Tensor],
               step: float = 1e-5, tolerance: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    ``build`` must re-evaluate the scalar output from the current values of
    ``params`` (the same Tensor objects are perturbed in place). The error
    metric is ``|analytic - numeric| / max(1, |analytic|, |numeric|)`` so it
    behaves like a relative error for large gradients and an absolute one
    near zero. Inputs should sit away from non-smooth points (e.g. at least
    1e-3 from relu kinks) for the finite differences to be trustworthy.
    """
    for name, p in params.items():
        if not np.all(np.isfinite(p.data)):
            raise NonFiniteError(f"parameter '{name}' contains non-finite values")
        p.grad = None

    out = build()
    _check_graph_finite(out)
    out.backward()
    analytic = {
        name: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
        for name, p in params.items()
    }

    report = GradCheckReport(tolerance=tolerance)
    for name, p in params.items():
        flat = p.data.reshape(-1)
        numeric = np.zeros_like(flat)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + step
            hi = build().item()
            flat[i] = saved - step
            lo = build().item()
            flat[i] = saved
            numeric[i] = (hi - lo) / (2.0 * step)
        if not np.all(np.isfinite(numeric)):
            raise NonFiniteError(f"non-finite finite-difference value for '{name}'")
        ana = analytic[name].reshape(-1)
        denom = np.maximum(1.0, np.maximum(np.abs(ana), np.abs(numeric)))
        report.max_errors[name] = float(np.max(np.abs(ana - numeric) / denom)) if flat.size else 0.0
    return report


def zero_grads(params) -> None:
    """Clear gradients on an iterable or mapping of tensors."""
    values = params.values() if isinstance(params, dict) else params
    for p in values:
        p.grad = None
