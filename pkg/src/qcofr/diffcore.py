"""Dense float64 tensors with a recording tape for reverse-mode gradients.

Operations only record themselves while a :class:`Tape` is active and at
least one input requires a gradient, so the same network code serves both
training (recorded) and rollouts (plain numpy speed).

    >>> w = Tensor([1.0, 2.0], requires_grad=True)
    >>> with Tape():
    ...     loss = square(w).sum()
    >>> backward(loss)
    >>> w.grad
    array([2., 4.])
"""

from __future__ import annotations

import builtins
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "ParamSet",
    "ShapeError",
    "GradCheckReport",
    "as_tensor",
    "custom_op",
    "backward",
    "grad_check",
    "matmul",
    "add",
    "sub",
    "mul",
    "neg",
    "scale",
    "absolute",
    "maximum_const",
    "reciprocal",
    "relu",
    "sigmoid",
    "tanh",
    "exp",
    "log",
    "softmax",
    "sum",
    "mean",
    "square",
    "concat",
    "stack",
    "reshape",
    "getitem",
    "gather",
]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for an operation."""

    def __init__(self, op: str, a: tuple, b: tuple, detail: str = ""):
        self.op = op
        self.shapes = (tuple(a), tuple(b))
        msg = f"{op}: incompatible shapes {tuple(a)} and {tuple(b)}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_tape")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self.name = name
        self._tape: Tape | None = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def values(self) -> np.ndarray:
        return self.data.ravel()

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    # operator sugar
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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None):
        return sum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class _Record:
    inputs: tuple
    output: Tensor
    backward: Callable[[np.ndarray], tuple]


@dataclass
class Tape:
    """Ordered log of recorded primitive operations.

    Use as a context manager; tapes nest, the innermost one records.
    """

    records: list = field(default_factory=list)

    _stack = []  # class-level: active tapes

    def __enter__(self) -> "Tape":
        Tape._stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        Tape._stack.pop()

    def __len__(self):
        return len(self.records)

    @staticmethod
    def active() -> "Tape | None":
        return Tape._stack[-1] if Tape._stack else None

    def backward(self, loss: Tensor) -> None:
        if loss.data.size != 1:
            raise ValueError(f"backward: loss must be scalar, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        if loss._tape is None and loss.requires_grad:
            # loss is itself a leaf
            loss.grad = loss.grad + 1.0
            return
        for rec in reversed(self.records):
            g = grads.pop(id(rec.output), None)
            if g is None:
                continue
            in_grads = rec.backward(g)
            for t, gi in zip(rec.inputs, in_grads):
                if gi is None or not t.requires_grad:
                    continue
                if t._tape is None:  # leaf
                    t.grad = t.grad + gi
                else:
                    key = id(t)
                    prev = grads.get(key)
                    grads[key] = gi if prev is None else prev + gi


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every requires_grad leaf."""
    if loss.data.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.shape}")
    tape = loss._tape
    if tape is None:
        if loss.requires_grad:
            loss.grad = loss.grad + 1.0
            return
        raise ValueError("backward: loss was not produced on a tape")
    tape.backward(loss)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def custom_op(value: np.ndarray, inputs: Sequence, backward_fn) -> Tensor:
    """Record a fused operation.

    ``backward_fn(g)`` receives d(loss)/d(output) and returns one gradient
    (or None) per input, shaped like that input.
    """
    return _emit(np.asarray(value), tuple(as_tensor(t) for t in inputs), backward_fn)


def _emit(value: np.ndarray, inputs: tuple, bwd) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = value
    out.name = None
    out.grad = None
    out._tape = None
    tape = Tape.active()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._tape = tape
        tape.records.append(_Record(inputs, out, bwd))
    else:
        out.requires_grad = False
    return out


def _binary(op: str, fn, a: Tensor, b: Tensor) -> np.ndarray:
    try:
        return fn(a.data, b.data)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# --- binary ---------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _emit(_binary("add", np.add, a, b), (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _emit(_binary("sub", np.subtract, a, b), (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.data, b.data
    return _emit(
        _binary("mul", np.multiply, a, b),
        (a, b),
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
    )


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul", a.shape, b.shape, "operands must be at least 2-D")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape, "inner dimensions differ")
    av, bv = a.data, b.data
    if bv.ndim == 2 and av.ndim > 2:
        # one BLAS call instead of numpy's stacked loop
        a2 = av.reshape(-1, av.shape[-1])
        value = (a2 @ bv).reshape(av.shape[:-1] + (bv.shape[-1],))
    else:
        a2 = None
        try:
            value = av @ bv
        except ValueError:
            raise ShapeError("matmul", a.shape, b.shape, "batch dimensions differ") from None

    def bwd(g):
        ga = gb = None
        if bv.ndim == 2:
            g2 = g.reshape(-1, g.shape[-1])
            if a.requires_grad:
                ga = (g2 @ bv.T).reshape(av.shape)
            if b.requires_grad:
                gb = (a2 if a2 is not None else av.reshape(-1, av.shape[-1])).T @ g2
        else:
            if a.requires_grad:
                ga = _unbroadcast(g @ np.swapaxes(bv, -1, -2), av.shape)
            if b.requires_grad:
                gb = _unbroadcast(np.swapaxes(av, -1, -2) @ g, bv.shape)
        return ga, gb

    return _emit(value, (a, b), bwd)


# --- unary ----------------------------------------------------------------


def neg(x) -> Tensor:
    x = as_tensor(x)
    return _emit(-x.data, (x,), lambda g: (-g,))


def scale(x, c: float) -> Tensor:
    x = as_tensor(x)
    c = float(c)
    return _emit(x.data * c, (x,), lambda g: (g * c,))


def absolute(x) -> Tensor:
    x = as_tensor(x)
    s = np.sign(x.data)
    return _emit(np.abs(x.data), (x,), lambda g: (g * s,))


def maximum_const(x, c: float) -> Tensor:
    """Elementwise max(x, c); the floor counts as active at x == c (zero subgradient)."""
    x = as_tensor(x)
    passes = x.data > c
    return _emit(np.where(passes, x.data, c), (x,), lambda g: (g * passes,))


def reciprocal(x) -> Tensor:
    x = as_tensor(x)
    y = 1.0 / x.data
    return _emit(y, (x,), lambda g: (-g * y * y,))


def relu(x) -> Tensor:
    x = as_tensor(x)
    on = x.data > 0
    return _emit(np.maximum(x.data, 0.0), (x,), lambda g: (g * on,))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _emit(y, (x,), lambda g: (g * y * (1.0 - y),))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _emit(y, (x,), lambda g: (g * (1.0 - y * y),))


def exp(x) -> Tensor:
    x = as_tensor(x)
    y = np.exp(x.data)
    return _emit(y, (x,), lambda g: (g * y,))


def log(x) -> Tensor:
    x = as_tensor(x)
    xv = x.data
    return _emit(np.log(xv), (x,), lambda g: (g / xv,))


def square(x) -> Tensor:
    x = as_tensor(x)
    xv = x.data
    return _emit(xv * xv, (x,), lambda g: (2.0 * g * xv,))


def softmax(x) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _emit(y, (x,), bwd)


# --- reductions and shape -------------------------------------------------


def sum(x, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    shape = x.shape

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _emit(np.asarray(x.data.sum(axis=axis)), (x,), bwd)


def mean(x, axis=None) -> Tensor:
    x = as_tensor(x)
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return scale(sum(x, axis), 1.0 / count)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    old = x.shape
    try:
        value = x.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", old, tuple(shape)) from None
    return _emit(value, (x,), lambda g: (g.reshape(old),))


def getitem(x, idx) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    parts = idx if isinstance(idx, tuple) else (idx,)
    basic = not any(isinstance(p, (list, np.ndarray)) for p in parts)

    def bwd(g):
        full = np.zeros(shape)
        if basic:
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return _emit(np.asarray(x.data[idx]), (x,), bwd)


def gather(x, index) -> Tensor:
    """Pick ``x[..., index[...]]`` along the last axis (index has x.shape[:-1])."""
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.int64)
    if index.shape != x.shape[:-1]:
        raise ShapeError("gather", x.shape, index.shape, "index must match leading axes")
    idx = index[..., None]
    shape = x.shape

    def bwd(g):
        full = np.zeros(shape)
        np.put_along_axis(full, idx, g[..., None], axis=-1)
        return (full,)

    return _emit(np.take_along_axis(x.data, idx, axis=-1)[..., 0], (x,), bwd)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = tuple(as_tensor(t) for t in tensors)
    try:
        value = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError("concat", ts[0].shape, ts[-1].shape) from None
    sizes = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def bwd(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _emit(value, ts, bwd)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = tuple(as_tensor(t) for t in tensors)
    try:
        value = np.stack([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError("stack", ts[0].shape, ts[-1].shape) from None

    def bwd(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(ts)))

    return _emit(value, ts, bwd)


class ParamSet(dict):
    """Named leaf tensors of one network, in insertion order."""

    def zero_grad(self) -> None:
        for t in self.values():
            t.zero_grad()

    def copy(self) -> "ParamSet":
        return ParamSet((k, Tensor(v.data.copy(), requires_grad=v.requires_grad, name=k)) for k, v in self.items())

    def load_(self, other: "ParamSet") -> None:
        for k, v in self.items():
            src = other[k].data
            if src.shape != v.shape:
                raise ShapeError(f"load {k}", v.shape, src.shape)
            v.data = src.copy()

    def arrays(self) -> dict:
        return {k: v.data for k, v in self.items()}

    def grad_norm(self) -> float:
        return float(np.sqrt(builtins.sum(float((v.grad**2).sum()) for v in self.values())))

    def num_params(self) -> int:
        return builtins.sum(v.data.size for v in self.values())


# --- gradient checking ----------------------------------------------------


@dataclass
class GradCheckReport:
    max_rel_error: float
    tol: float
    worst_index: tuple | None
    analytic: np.ndarray
    numeric: np.ndarray

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol


def _rel_error(a: np.ndarray, n: np.ndarray, floor: float) -> np.ndarray:
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def grad_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    step: float = 1e-5,
    tol: float = 1e-4,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare tape gradients of scalar ``f`` at ``x`` against central differences.

    Relative error uses ``max(|analytic|, |numeric|, floor)`` as denominator so
    coordinates with vanishing gradient do not blow up the ratio.
    """
    probe = Tensor(x.data.copy(), requires_grad=True)
    with Tape():
        out = f(probe)
    if not np.all(np.isfinite(out.data)):
        raise FloatingPointError("grad_check: non-finite value at the base point")
    backward(out)
    analytic = probe.grad.copy()

    numeric = np.zeros_like(x.data)
    flat = x.data.ravel()
    for i in range(flat.size):
        idx = np.unravel_index(i, x.shape)
        vals = []
        for sgn in (1.0, -1.0):
            pert = x.data.copy()
            pert[idx] += sgn * step
            v = f(Tensor(pert)).data
            if not np.all(np.isfinite(v)):
                raise FloatingPointError(f"grad_check: non-finite value at coordinate {idx}")
            vals.append(float(v))
        numeric[idx] = (vals[0] - vals[1]) / (2 * step)

    err = _rel_error(analytic, numeric, floor)
    worst = tuple(int(i) for i in np.unravel_index(err.argmax(), err.shape)) if err.size else None
    return GradCheckReport(float(err.max()) if err.size else 0.0, tol, worst, analytic, numeric)
