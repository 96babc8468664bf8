"""Reverse-mode gradient engine over numpy arrays.

Deliberately minimal: only the operations this pipeline composes are
implemented, each with a hand-written backward. Every op output is checked
for NaN/Inf (raises NumericalError) unless finite checks are disabled via
`set_finite_checks(False)`.

float64 is the default and is what all gradient checks run at; float32 is
supported for the production/streaming paths.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .. import _kernels
from ..errors import DimensionError, NumericalError, StateError

_FINITE_CHECKS = True


def set_finite_checks(enabled: bool) -> bool:
    """Toggle NaN/Inf detection on op outputs; returns the previous setting."""
    global _FINITE_CHECKS
    previous = _FINITE_CHECKS
    _FINITE_CHECKS = enabled
    return previous


def _check_finite(data: np.ndarray, op: str) -> None:
    if _FINITE_CHECKS and not np.all(np.isfinite(data)):
        raise NumericalError(f"non-finite values produced by op '{op}'")


class Tensor:
    """A node in the computation graph: value, gradient slot, backward hook."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        _parents: tuple = (),
        _backward=None,
        name: str | None = None,
    ):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(arr) if requires_grad and not _parents else None
        self._parents = _parents
        self._backward = _backward
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    def backward(self) -> None:
        """Reverse-mode sweep from a scalar loss."""
        if self.data.size != 1:
            raise StateError("backward() requires a scalar loss node")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            if node.requires_grad and not node._parents:
                node._accumulate(grad)
            if node._backward is None:
                continue
            for parent, pgrad in node._backward(grad):
                if not (parent.requires_grad or parent._parents):
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pgrad
                else:
                    grads[key] = pgrad

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        tag = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"

    # operator sugar
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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(value, dtype=None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    arr = np.asarray(value, dtype=dtype)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    return Tensor(arr)


def _track(parents: Iterable[Tensor]) -> bool:
    return any(p.requires_grad or p._parents for p in parents)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _make(data: np.ndarray, parents: tuple, backward, op: str) -> Tensor:
    _check_finite(data, op)
    if _track(parents):
        return Tensor(data, _parents=parents, _backward=backward)
    return Tensor(data)


# ---------------------------------------------------------------------------
# elementwise and reduction ops
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def backward(grad):
        return ((a, _unbroadcast(grad, a.data.shape)), (b, _unbroadcast(grad, b.data.shape)))

    return _make(out, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def backward(grad):
        return ((a, _unbroadcast(grad, a.data.shape)), (b, _unbroadcast(-grad, b.data.shape)))

    return _make(out, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def backward(grad):
        return (
            (a, _unbroadcast(grad * b.data, a.data.shape)),
            (b, _unbroadcast(grad * a.data, b.data.shape)),
        )

    return _make(out, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def backward(grad):
        return (
            (a, _unbroadcast(grad / b.data, a.data.shape)),
            (b, _unbroadcast(-grad * a.data / (b.data * b.data), b.data.shape)),
        )

    return _make(out, (a, b), backward, "div")


def relu(a) -> Tensor:
    a = as_tensor(a)
    out = np.maximum(a.data, 0.0)

    def backward(grad):
        return ((a, grad * (a.data > 0.0)),)

    return _make(out, (a,), backward, "relu")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = 1.0 / (1.0 + np.exp(-a.data))

    def backward(grad):
        return ((a, grad * out * (1.0 - out)),)

    return _make(out, (a,), backward, "sigmoid")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)

    def backward(grad):
        return ((a, grad * out),)

    return _make(out, (a,), backward, "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    out = np.log(a.data)

    def backward(grad):
        return ((a, grad / a.data),)

    return _make(out, (a,), backward, "log")


def clamp_min(a, lo: float) -> Tensor:
    """Lower clamp; gradient is zero on clamped entries."""
    a = as_tensor(a)
    out = np.maximum(a.data, lo)

    def backward(grad):
        return ((a, grad * (a.data >= lo)),)

    return _make(out, (a,), backward, "clamp_min")


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(grad):
        g = np.asarray(grad)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return ((a, np.broadcast_to(g, a.data.shape).copy()),)

    return _make(np.asarray(out), (a,), backward, "sum")


def tmean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis), 1.0 / count)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Matrix product for the shapes the model uses: [T,I]@[I,O], [I]@[I,O],
    [T]@[T,D] (weighted sum) and [T,I]@[I] (matrix-vector)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim > 2 or b.data.ndim > 2:
        raise DimensionError("matmul supports 1D/2D operands only")
    out = a.data @ b.data

    def backward(grad):
        grad = np.asarray(grad)
        a_d, b_d = a.data, b.data
        if a_d.ndim == 1 and b_d.ndim == 2:
            grad_a = grad @ b_d.T
            grad_b = np.outer(a_d, grad)
        elif a_d.ndim == 2 and b_d.ndim == 1:
            grad_a = np.outer(grad, b_d)
            grad_b = a_d.T @ grad
        else:
            grad_a = grad @ b_d.T
            grad_b = a_d.T @ grad
        return ((a, grad_a), (b, grad_b))

    return _make(out, (a, b), backward, "matmul")


def linear(x, w, b=None) -> Tensor:
    """Fully connected layer: x @ w (+ b). Also serves as the kernel-1ated
    pointwise convolution when x is a [T, C] sequence."""
    out = matmul(x, w)
    if b is None:
        return out
    return add(out, b)


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(grad):
        dot = (grad * out).sum(axis=axis, keepdims=True)
        return ((a, out * (grad - dot)),)

    return _make(out, (a,), backward, "softmax")


def l1_normalize(a) -> Tensor:
    """Normalize a vector to unit L1 mass: y = x / sum(|x|)."""
    a = as_tensor(a)
    total = np.abs(a.data).sum()
    if total == 0.0:
        raise NumericalError("l1_normalize: zero-mass input")
    out = a.data / total

    def backward(grad):
        inner = float((grad * a.data).sum())
        return ((a, grad / total - np.sign(a.data) * (inner / (total * total))),)

    return _make(out, (a,), backward, "l1_normalize")


def cosine_similarity_matrix(z) -> Tensor:
    """All-pairs cosine similarity of row vectors: [B, D] -> [B, B]."""
    z = as_tensor(z)
    if z.data.ndim != 2:
        raise DimensionError("cosine_similarity_matrix expects a [B, D] matrix")
    norms = np.linalg.norm(z.data, axis=1)
    if np.any(norms == 0.0):
        raise NumericalError("cosine similarity undefined for zero-norm descriptors")
    unit = z.data / norms[:, None]
    out = unit @ unit.T

    def backward(grad):
        sym = grad + grad.T
        grad_unit = sym @ unit
        inner = (grad_unit * unit).sum(axis=1, keepdims=True)
        grad_z = (grad_unit - unit * inner) / norms[:, None]
        return ((z, grad_z),)

    return _make(out, (z,), backward, "cosine_similarity_matrix")


# ---------------------------------------------------------------------------
# shape ops
# ---------------------------------------------------------------------------


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = a.data.reshape(shape)

    def backward(grad):
        return ((a, grad.reshape(a.data.shape)),)

    return _make(out, (a,), backward, "reshape")


def pad_front_rows(a, total_rows: int) -> Tensor:
    """Zero-pad a [T, D] tensor at the front to [total_rows, D]."""
    a = as_tensor(a)
    t, d = a.data.shape
    if t > total_rows:
        raise DimensionError(f"cannot pad {t} rows down to {total_rows}")
    out = np.zeros((total_rows, d), dtype=a.data.dtype)
    out[total_rows - t :] = a.data

    def backward(grad):
        return ((a, grad[total_rows - t :]),)

    return _make(out, (a,), backward, "pad_front_rows")


def narrow(a, start: int, length: int) -> Tensor:
    """Contiguous slice along axis 0."""
    a = as_tensor(a)
    out = a.data[start : start + length].copy()

    def backward(grad):
        g = np.zeros_like(a.data)
        g[start : start + length] = grad
        return ((a, g),)

    return _make(out, (a,), backward, "narrow")


def stack_rows(tensors: Sequence) -> Tensor:
    """Stack same-shaped tensors along a new leading axis."""
    ts = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in ts])

    def backward(grad):
        return tuple((t, grad[i]) for i, t in enumerate(ts))

    return _make(out, tuple(ts), backward, "stack_rows")


def dropout(a, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when p == 0."""
    if p <= 0.0:
        return as_tensor(a)
    a = as_tensor(a)
    keep = (rng.random(a.data.shape) >= p).astype(a.data.dtype) / (1.0 - p)
    return mul(a, Tensor(keep))


# ---------------------------------------------------------------------------
# convolution (kernel-backed)
# ---------------------------------------------------------------------------


def causal_conv1d(x, w, b, dilation: int = 1) -> Tensor:
    """Causal dilated 1D convolution over a [T, C_in] sequence.

    Left-pads with (K-1)*dilation implicit zeros so output at time t depends
    only on inputs at times <= t.
    """
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.data.ndim != 2 or w.data.ndim != 3:
        raise DimensionError("causal_conv1d expects x:[T,C_in], w:[K,C_in,C_out]")
    if x.data.shape[1] != w.data.shape[1]:
        raise DimensionError(
            f"channel mismatch: input has {x.data.shape[1]}, weights expect {w.data.shape[1]}"
        )
    if b.data.shape != (w.data.shape[2],):
        raise DimensionError("bias shape must be [C_out]")
    if dilation < 1 or w.data.shape[0] < 1:
        raise DimensionError("kernel size and dilation must be >= 1")
    out = _kernels.conv_forward(
        np.ascontiguousarray(x.data),
        np.ascontiguousarray(w.data),
        np.ascontiguousarray(b.data),
        dilation,
    )

    def backward(grad):
        gx, gw, gb = _kernels.conv_backward(
            np.ascontiguousarray(x.data),
            np.ascontiguousarray(w.data),
            np.ascontiguousarray(grad),
            dilation,
        )
        return ((x, gx), (w, gw), (b, gb))

    return _make(out, (x, w, b), backward, "causal_conv1d")
