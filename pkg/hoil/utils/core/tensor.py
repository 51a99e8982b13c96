"""
Dense double-precision tensors with a define-by-run reverse-mode tape.

Each op computes its value with numpy and, when any input requires a
gradient, records its parents together with a vector-Jacobian product
closure. `backward` walks the recorded graph in reverse topological order.

Broadcasting is limited to leading axes: an operand may be combined with
another whose shape is a suffix of its own (a bias row against a matrix, a
scalar against anything). Anything else needs an explicit `broadcast_to`.
"""
import threading
from contextlib import contextmanager
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from hoil.utils.core.errors import ShapeError

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[float]]

_tape_context = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_tape_context, "enabled", True)


@contextmanager
def no_grad():
    previous = is_grad_enabled()
    _tape_context.enabled = False
    try:
        yield
    finally:
        _tape_context.enabled = previous


class Tensor:
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf"):
        self.data = np.array(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.op = op
        self._parents: Tuple["Tensor", ...] = ()
        self._vjp: Optional[Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]] = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __len__(self) -> int:
        return self.data.shape[0]

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError("item", self.shape, detail="expected a single element")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

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

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def sum(self, axis: Optional[int] = None) -> "Tensor":
        return sum_(self, axis)

    def mean(self, axis: Optional[int] = None) -> "Tensor":
        return mean(self, axis)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def gather(self, rows) -> "Tensor":
        return gather(self, rows)


class Parameter(Tensor):
    def __init__(self, data, name: str):
        super().__init__(data, requires_grad=True, op="parameter")
        self.name = name

    def __repr__(self) -> str:
        return f"Parameter(name={self.name}, shape={self.shape})"

    @property
    def requires_grad(self) -> bool:
        return True

    @requires_grad.setter
    def requires_grad(self, value: bool):
        pass


def as_tensor(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(data: np.ndarray, parents: Sequence[Tensor], vjp, op: str) -> Tensor:
    out = Tensor(data, op=op)
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> Tuple[int, ...]:
    sa, sb = a.shape, b.shape
    if sa == sb:
        return sa
    if len(sa) >= len(sb) and sa[len(sa) - len(sb):] == sb:
        return sa
    if len(sb) > len(sa) and sb[len(sb) - len(sa):] == sa:
        return sb
    raise ShapeError(op, sa, sb, detail="only leading-axis broadcasting is supported")


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    lead = grad.ndim - len(shape)
    return grad.sum(axis=tuple(range(lead))).reshape(shape)


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    return _result(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    return _result(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    return _result(a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)), "mul")


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("div", a, b)
    out = a.data / b.data
    return _result(out, (a, b),
                   lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)), "div")


def neg(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return _result(-a.data, (a,), lambda g: (-g,), "neg")


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    return _result(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g), "matmul")


def transpose(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError("transpose", a.shape, detail="expected a matrix")
    return _result(a.data.T.copy(), (a,), lambda g: (g.T,), "transpose")


def reshape(a: ArrayLike, shape: Tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", a.shape, tuple(shape))
    return _result(out.copy(), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def broadcast_to(a: ArrayLike, shape: Tuple[int, ...]) -> Tensor:
    """Explicit numpy-style expansion; the only way to broadcast non-leading axes."""
    a = as_tensor(a)
    shape = tuple(shape)
    try:
        out = np.broadcast_to(a.data, shape).copy()
    except ValueError:
        raise ShapeError("broadcast_to", a.shape, shape)

    def vjp(g):
        lead = g.ndim - a.ndim
        g = g.sum(axis=tuple(range(lead))) if lead else g
        axes = tuple(i for i, n in enumerate(a.shape) if n == 1 and g.shape[i] != 1)
        if axes:
            g = g.sum(axis=axes, keepdims=True)
        return (g.reshape(a.shape),)

    return _result(out, (a,), vjp, "broadcast_to")


def relu(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _result(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    out = _stable_sigmoid(a.data)
    return _result(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def softplus(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    out = np.maximum(a.data, 0.0) + np.log1p(np.exp(-np.abs(a.data)))
    return _result(out, (a,), lambda g: (g * _stable_sigmoid(a.data),), "softplus")


def exp(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,), "exp")


def log(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return _result(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def sqrt(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _result(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


def clamp_min(a: ArrayLike, floor: float) -> Tensor:
    a = as_tensor(a)
    keep = a.data > floor
    return _result(np.where(keep, a.data, floor), (a,), lambda g: (g * keep,), "clamp_min")


def smooth_l1(a: ArrayLike, beta: float = 1.0) -> Tensor:
    a = as_tensor(a)
    x = a.data
    small = np.abs(x) < beta
    out = np.where(small, 0.5 * x * x / beta, np.abs(x) - 0.5 * beta)
    return _result(out, (a,), lambda g: (g * np.where(small, x / beta, np.sign(x)),), "smooth_l1")


def _norm_axis(axis: Optional[int], ndim: int) -> Optional[int]:
    if axis is None:
        return None
    return axis % ndim if ndim else 0


def sum_(a: ArrayLike, axis: Optional[int] = None) -> Tensor:
    a = as_tensor(a)
    axis = _norm_axis(axis, a.ndim)
    out = a.data.sum(axis=axis)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _result(out, (a,), vjp, "sum")


def mean(a: ArrayLike, axis: Optional[int] = None) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else a.shape[_norm_axis(axis, a.ndim)]
    if count == 0:
        raise ShapeError("mean", a.shape, detail="empty reduction")
    return mul(sum_(a, axis), 1.0 / count)


def softmax(a: ArrayLike, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)
    return _result(out, (a,), lambda g: (out * (g - (g * out).sum(axis=axis, keepdims=True)),), "softmax")


def log_softmax(a: ArrayLike, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    peak = a.data.max(axis=axis, keepdims=True)
    lse = peak + np.log(np.exp(a.data - peak).sum(axis=axis, keepdims=True))
    out = a.data - lse
    probs = np.exp(out)
    return _result(out, (a,), lambda g: (g - probs * g.sum(axis=axis, keepdims=True),), "log_softmax")


def logsumexp(a: ArrayLike, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    peak = a.data.max(axis=axis, keepdims=True)
    lse = peak + np.log(np.exp(a.data - peak).sum(axis=axis, keepdims=True))
    probs = np.exp(a.data - lse)
    return _result(np.squeeze(lse, axis=axis), (a,),
                   lambda g: (np.expand_dims(g, axis) * probs,), "logsumexp")


def layer_norm(a: ArrayLike, gamma: Optional[Tensor] = None, beta: Optional[Tensor] = None,
               eps: float = 1e-5) -> Tensor:
    """Normalizes over the last axis, then applies the optional affine terms."""
    a = as_tensor(a)
    mu = a.data.mean(axis=-1, keepdims=True)
    centered = a.data - mu
    inv_std = 1.0 / np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std

    def vjp(g):
        mean_g = g.mean(axis=-1, keepdims=True)
        mean_gx = (g * xhat).mean(axis=-1, keepdims=True)
        return (inv_std * (g - mean_g - xhat * mean_gx),)

    out = _result(xhat, (a,), vjp, "layer_norm")
    if gamma is not None:
        out = mul(out, gamma)
    if beta is not None:
        out = add(out, beta)
    return out


def l2_normalize(a: ArrayLike, axis: int = -1, eps: float = 1e-12) -> Tensor:
    a = as_tensor(a)
    norm = np.maximum(np.sqrt((a.data ** 2).sum(axis=axis, keepdims=True)), eps)
    out = a.data / norm
    clipped = norm <= eps

    def vjp(g):
        radial = (g * out).sum(axis=axis, keepdims=True)
        return (np.where(clipped, g / norm, (g - out * radial) / norm),)

    return _result(out, (a,), vjp, "l2_normalize")


def concat(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat", detail="nothing to concatenate")
    ndim = tensors[0].ndim
    axis = axis % ndim
    for t in tensors[1:]:
        if t.ndim != ndim or any(t.shape[i] != tensors[0].shape[i] for i in range(ndim) if i != axis):
            raise ShapeError("concat", *(t.shape for t in tensors), detail=f"axis={axis}")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def vjp(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors)))

    return _result(out, tensors, vjp, "concat")


def gather(a: ArrayLike, rows) -> Tensor:
    """Selects rows along the first axis; repeated indices accumulate gradients."""
    a = as_tensor(a)
    rows = np.asarray(rows, dtype=np.int64)
    if rows.ndim != 1:
        raise ShapeError("gather", a.shape, rows.shape, detail="row index must be 1-D")
    if rows.size and (rows.min() < -a.shape[0] or rows.max() >= a.shape[0]):
        raise ShapeError("gather", a.shape, rows.shape, detail="row index out of range")

    def vjp(g):
        full = np.zeros(a.shape, dtype=np.float64)
        np.add.at(full, rows, g)
        return (full,)

    return _result(a.data[rows], (a,), vjp, "gather")


def segment_sum(a: ArrayLike, segments, num_segments: int) -> Tensor:
    a = as_tensor(a)
    segments = np.asarray(segments, dtype=np.int64)
    if segments.shape != (a.shape[0],):
        raise ShapeError("segment_sum", a.shape, segments.shape)
    out = np.zeros((num_segments,) + a.shape[1:], dtype=np.float64)
    np.add.at(out, segments, a.data)
    return _result(out, (a,), lambda g: (g[segments],), "segment_sum")


def segment_max(a: ArrayLike, segments, num_segments: int) -> Tensor:
    """Per-segment, per-channel maximum; tied maxima share the gradient equally."""
    a = as_tensor(a)
    segments = np.asarray(segments, dtype=np.int64)
    if segments.shape != (a.shape[0],):
        raise ShapeError("segment_max", a.shape, segments.shape)
    out = np.full((num_segments,) + a.shape[1:], -np.inf)
    np.maximum.at(out, segments, a.data)
    winners = a.data == out[segments]
    ties = np.zeros_like(out)
    np.add.at(ties, segments, winners.astype(np.float64))

    def vjp(g):
        return (np.where(winners, g[segments] / ties[segments], 0.0),)

    return _result(out, (a,), vjp, "segment_max")


def scaled_dot_attention(q: ArrayLike, k: ArrayLike, v: ArrayLike) -> Tensor:
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2 or q.shape[1] != k.shape[1] or k.shape[0] != v.shape[0]:
        raise ShapeError("scaled_dot_attention", q.shape, k.shape, v.shape)
    if k.shape[0] == 0:
        raise ShapeError("scaled_dot_attention", q.shape, k.shape, v.shape, detail="no keys")
    scores = mul(matmul(q, transpose(k)), 1.0 / np.sqrt(q.shape[1]))
    return matmul(softmax(scores, axis=-1), v)


def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack = [(root, False)]
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
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor):
    """Accumulates d(loss)/d(leaf) into `.grad` of every reachable leaf."""
    if not isinstance(loss, Tensor) or loss.shape != ():
        raise ShapeError("backward", getattr(loss, "shape", ()), detail="loss must be a scalar")
    if not loss.requires_grad:
        return
    pending = {id(loss): np.ones((), dtype=np.float64)}
    for node in reversed(_topological_order(loss)):
        grad = pending.pop(id(node), None)
        if grad is None:
            continue
        if node._vjp is None:
            node.grad = grad.copy() if node.grad is None else node.grad + grad
            continue
        for parent, parent_grad in zip(node._parents, node._vjp(grad)):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            pending[key] = parent_grad if key not in pending else pending[key] + parent_grad


def zero_grad(params: Iterable[Tensor]):
    for p in params:
        p.grad = None
