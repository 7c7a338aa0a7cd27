"""
Reverse-mode differentiation over dense float64 arrays.

Every forward operation produces an immutable Tensor. When any input requires
a gradient, the output remembers its inputs and an Op (a pure forward function
plus its vector-Jacobian product), so a GradientRecord can both replay the
forward computation and run it backwards. Constants never record anything.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from core.errors import ContractError, DimensionError, GradientProbeError

logger = logging.getLogger(__name__)

Array = np.ndarray

SQUASH_EPS = 1e-12
REL_ERROR_FLOOR = 1e-6   # finite-difference noise floor at h=1e-5


def _freeze(data, copy: bool = True) -> Array:
    arr = np.array(data, dtype=np.float64) if copy else np.asarray(data, dtype=np.float64)
    arr.setflags(write=False)
    return arr


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum a broadcast gradient back down to `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


@dataclass(frozen=True)
class Op:
    name: str
    forward: Callable[..., Array]
    # (grad_out, out, *inputs) -> one gradient (or None) per input
    backward: Callable[..., tuple]


class Tensor:
    __slots__ = ("data", "requires_grad", "name", "parents", "op")
    __array_ufunc__ = None   # make `ndarray op Tensor` defer to Tensor

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 *, _parents: tuple["Tensor", ...] = (), _op: Op | None = None, _copy: bool = True):
        self.data = _freeze(data, copy=_copy)
        self.requires_grad = requires_grad
        self.name = name
        self.parents = _parents
        self.op = _op

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> Array:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single value, tensor has shape {self.shape}")
        return float(self.data.reshape(()))

    # ── arithmetic ──────────────────────────────────────────────────────────

    def __add__(self, other):
        return apply("add", np.add,
                     lambda g, out, a, b: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
                     self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return apply("sub", np.subtract,
                     lambda g, out, a, b: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
                     self, other)

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __mul__(self, other):
        return apply("mul", np.multiply,
                     lambda g, out, a, b: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)),
                     self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return apply("div", np.divide,
                     lambda g, out, a, b: (_unbroadcast(g / b, a.shape),
                                           _unbroadcast(-g * a / (b * b), b.shape)),
                     self, other)

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __neg__(self):
        return apply("neg", np.negative, lambda g, out, a: (-g,), self)

    def __pow__(self, exponent: float):
        p = float(exponent)
        return apply(f"pow{p:g}", lambda a: np.power(a, p),
                     lambda g, out, a: (g * p * np.power(a, p - 1.0),), self)

    # ── shape and reductions ────────────────────────────────────────────────

    def sum(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False):
        def backward(g, out, a):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, a.shape),)

        return apply("sum", lambda a: np.sum(a, axis=axis, keepdims=keepdims), backward, self)

    def reshape(self, *shape):
        target = shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape
        return apply("reshape", lambda a: np.reshape(a, target),
                     lambda g, out, a: (np.reshape(g, a.shape),), self)

    def transpose(self, *axes):
        order = axes[0] if len(axes) == 1 and isinstance(axes[0], tuple) else axes
        inverse = tuple(np.argsort(order))
        return apply("transpose", lambda a: np.transpose(a, order),
                     lambda g, out, a: (np.transpose(g, inverse),), self)

    def relu(self):
        return apply("relu", lambda a: np.maximum(a, 0.0),
                     lambda g, out, a: (g * (a > 0.0),), self)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def apply(name: str, forward: Callable[..., Array], backward: Callable[..., tuple], *inputs) -> Tensor:
    """Run `forward` on the inputs' data and record the step when gradients are needed."""
    tensors = tuple(as_tensor(x) for x in inputs)
    data = forward(*(t.data for t in tensors))
    if not any(t.requires_grad for t in tensors):
        return Tensor(data, _copy=False)
    return Tensor(data, requires_grad=True, _parents=tensors, _op=Op(name, forward, backward), _copy=False)


# ─────────────────────────────────────────
#  Composite operations
# ─────────────────────────────────────────

def einsum(subscripts: str, *operands) -> Tensor:
    """np.einsum with a gradient for every operand (no repeated index inside one operand)."""
    tensors = tuple(as_tensor(o) for o in operands)
    lhs, _, output_spec = subscripts.replace(" ", "").partition("->")
    specs = lhs.split(",")
    if len(specs) != len(tensors):
        raise DimensionError(f"einsum '{subscripts}' expects {len(specs)} operands, got {len(tensors)}")
    for spec, tensor in zip(specs, tensors):
        if len(set(spec)) != len(spec):
            raise ContractError(f"einsum operand '{spec}' repeats an index")
        if len(spec) != tensor.ndim:
            raise DimensionError(f"einsum operand '{spec}' does not match shape {tensor.shape}")

    def forward(*arrays):
        return np.einsum(subscripts, *arrays, optimize=True)

    def backward(g, out, *arrays):
        grads = []
        for i, spec in enumerate(specs):
            others = [(s, a) for j, (s, a) in enumerate(zip(specs, arrays)) if j != i]
            available = set(output_spec).union(*(set(s) for s, _ in others))
            kept = "".join(ch for ch in spec if ch in available)
            expr = ",".join([output_spec] + [s for s, _ in others]) + "->" + kept
            grad = np.einsum(expr, g, *(a for _, a in others), optimize=True)
            for axis, ch in enumerate(spec):
                if ch not in kept:
                    grad = np.expand_dims(grad, axis)
            grads.append(np.broadcast_to(grad, arrays[i].shape))
        return tuple(grads)

    return apply(f"einsum[{subscripts}]", forward, backward, *tensors)


def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    items = tuple(as_tensor(t) for t in tensors)
    if not items:
        raise DimensionError("concat needs at least one tensor")
    bounds = np.cumsum([t.shape[axis] for t in items])[:-1]

    def backward(g, out, *arrays):
        return tuple(np.split(g, bounds, axis=axis))

    return apply("concat", lambda *arrays: np.concatenate(arrays, axis=axis), backward, *items)


def gather_rows(source, index: Array) -> Tensor:
    """source[index] along axis 0; repeated indices accumulate their gradients."""
    index = np.asarray(index, dtype=np.intp)

    def backward(g, out, a):
        grad = np.zeros_like(a)
        np.add.at(grad, index, g)
        return (grad,)

    return apply("gather_rows", lambda a: a[index], backward, source)


def softmax(logits, axis: int = -1) -> Tensor:
    """Max-subtracted softmax along `axis`."""
    t = as_tensor(logits)
    if t.data.size == 0 or t.ndim == 0:
        raise DimensionError("softmax of an empty vector")

    def forward(a):
        shifted = np.exp(a - np.max(a, axis=axis, keepdims=True))
        return shifted / np.sum(shifted, axis=axis, keepdims=True)

    def backward(g, out, a):
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)

    return apply("softmax", forward, backward, t)


def norm(x, axis: int = -1) -> Tensor:
    """Euclidean length along `axis`; the gradient at zero length is zero."""

    def backward(g, out, a):
        n = np.expand_dims(out, axis)
        safe = np.where(n > 0.0, n, 1.0)
        return (np.where(n > 0.0, np.expand_dims(g, axis) * a / safe, 0.0),)

    return apply("norm", lambda a: np.sqrt(np.sum(a * a, axis=axis)), backward, x)


def squash(x, axis: int = -1) -> Tensor:
    """v = (|s|^2 / (1 + |s|^2)) * s / |s|, and v = 0 below |s| = 1e-12."""

    def lengths(a):
        return np.sqrt(np.sum(a * a, axis=axis, keepdims=True))

    def forward(a):
        n = lengths(a)
        return np.where(n < SQUASH_EPS, 0.0, a * (n / (1.0 + n * n)))

    def backward(g, out, a):
        n = lengths(a)
        live = n >= SQUASH_EPS
        safe = np.where(live, n, 1.0)
        scale = safe / (1.0 + safe * safe)
        slope = (1.0 - safe * safe) / ((1.0 + safe * safe) ** 2)
        radial = np.sum(a * g, axis=axis, keepdims=True) * slope / safe
        return (np.where(live, scale * g + radial * a, 0.0),)

    return apply("squash", forward, backward, x)


def column_windows(x, width: int) -> Tensor:
    """(H, W) -> (H, W - width + 1, width) sliding column windows."""

    def backward(g, out, a):
        grad = np.zeros_like(a)
        positions = g.shape[1]
        for c in range(width):
            grad[:, c:c + positions] += g[:, :, c]
        return (grad,)

    return apply("column_windows", lambda a: sliding_window_view(a, width, axis=1), backward, x)


def square_windows(x, size: int) -> Tensor:
    """(H, W) -> (H - size + 1, W - size + 1, size, size) sliding square patches."""

    def backward(g, out, a):
        grad = np.zeros_like(a)
        rows, cols = g.shape[:2]
        for r in range(size):
            for c in range(size):
                grad[r:r + rows, c:c + cols] += g[:, :, r, c]
        return (grad,)

    return apply("square_windows", lambda a: sliding_window_view(a, (size, size)), backward, x)


def conv_columns(x, kernel, bias=None) -> Tensor:
    """
    Full-height column convolution, stride 1, no padding.

    x: (H, W); kernel: (F, H, k) or a single (H, k) filter; bias: (F,) or None.
    Output (F, W - k + 1) with out[f, p] = sum_{h,c} x[h, p + c] * kernel[f, h, c] + bias[f].
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if kernel.ndim == 2:
        kernel = kernel.reshape((1,) + kernel.shape)
    if x.ndim != 2 or kernel.ndim != 3:
        raise DimensionError(f"conv_columns expects (H, W) input and (F, H, k) kernel, "
                             f"got {x.shape} and {kernel.shape}")
    height, width = x.shape
    _, k_height, k = kernel.shape
    if k_height != height:
        raise DimensionError(f"kernel height {k_height} does not match input height {height}")
    if k > width:
        raise DimensionError(f"kernel width {k} exceeds input width {width}")
    out = einsum("hpc,fhc->fp", column_windows(x, k), kernel)
    if bias is not None:
        out = out + as_tensor(bias).reshape(-1, 1)
    return out


def conv_square(x, kernel, bias=None) -> Tensor:
    """Valid stride-1 k x k convolution: (H, W) * (F, k, k) -> (F, H - k + 1, W - k + 1)."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 2 or kernel.ndim != 3 or kernel.shape[1] != kernel.shape[2]:
        raise DimensionError(f"conv_square expects (H, W) input and (F, k, k) kernel, "
                             f"got {x.shape} and {kernel.shape}")
    k = kernel.shape[1]
    if k > min(x.shape):
        raise DimensionError(f"square kernel {k} exceeds input {x.shape}")
    out = einsum("ijab,fab->fij", square_windows(x, k), kernel)
    if bias is not None:
        out = out + as_tensor(bias).reshape(-1, 1, 1)
    return out


# ─────────────────────────────────────────
#  Gradient record
# ─────────────────────────────────────────

def _topological(output: Tensor) -> list[Tensor]:
    """Recorded (non-leaf) tensors reachable from `output`, inputs before outputs."""
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited or node.op is None:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in reversed(node.parents):
            if parent.op is not None and id(parent) not in visited:
                stack.append((parent, False))
    return order


class GradientRecord:
    """A recorded forward computation and the named learnable tensors it reads."""

    def __init__(self, output: Tensor, parameters: Mapping[str, Tensor]):
        self.output = output
        self.parameters = dict(parameters)
        self.operations = _topological(output)

    def __len__(self) -> int:
        return len(self.operations)

    def replay(self) -> Array:
        """Re-run every recorded operation from the leaves."""
        values: dict[int, Array] = {}
        for node in self.operations:
            arrays = [values.get(id(p), p.data) for p in node.parents]
            values[id(node)] = np.asarray(node.op.forward(*arrays), dtype=np.float64)
        return values.get(id(self.output), self.output.data)


def backward(record: GradientRecord, loss_adjoint: float = 1.0) -> dict[str, Array]:
    """d(output)/d(param) for every registered parameter (zeros when unreachable)."""
    output = record.output
    if output.data.size != 1:
        raise ContractError(f"backward needs a scalar output, got shape {output.shape}")

    grads: dict[int, Array] = {id(output): np.full(output.shape, float(loss_adjoint))}
    for node in reversed(record.operations):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        parent_grads = node.op.backward(g, node.data, *(p.data for p in node.parents))
        for parent, pg in zip(node.parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else np.asarray(pg)

    result: dict[str, Array] = {}
    for name, param in record.parameters.items():
        g = grads.get(id(param))
        result[name] = np.zeros(param.shape) if g is None else np.array(g, dtype=np.float64).reshape(param.shape)
    return result


def grad_check(
    forward_fn: Callable[[Mapping[str, Tensor]], Tensor],
    params: Mapping[str, Array],
    h: float = 1e-5,
    floor: float = REL_ERROR_FLOOR,
) -> float:
    """
    Largest relative disagreement between analytic and central-difference
    gradients over every parameter element:
        |a - n| / max(floor, |a| + |n|)
    """
    if h <= 0:
        raise ContractError(f"finite-difference step must be positive, got {h}")

    leaves = {name: Tensor(value, requires_grad=True, name=name) for name, value in params.items()}
    analytic = backward(GradientRecord(forward_fn(leaves), leaves))
    constants = {name: Tensor(value, name=name) for name, value in params.items()}

    def probe(name: str, index: tuple[int, ...], base: Array, delta: float) -> float:
        shifted = base.copy()
        shifted[index] += delta
        value = forward_fn({**constants, name: Tensor(shifted, name=name)}).item()
        if not np.isfinite(value):
            raise GradientProbeError(f"non-finite loss while probing {name}{list(index)}")
        return value

    worst, worst_at = 0.0, None
    for name, value in params.items():
        base = np.array(value, dtype=np.float64)
        for index in np.ndindex(base.shape):
            numeric = (probe(name, index, base, h) - probe(name, index, base, -h)) / (2.0 * h)
            a = float(analytic[name][index])
            error = abs(a - numeric) / max(floor, abs(a) + abs(numeric))
            if error > worst:
                worst, worst_at = error, (name, index)
    logger.debug("grad_check max relative error %.3e at %s", worst, worst_at)
    return worst
