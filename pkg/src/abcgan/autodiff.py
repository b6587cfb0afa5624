"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Every differentiable quantity is a :class:`Var`.  Operations whose inputs
require gradients are recorded, in creation order, on the active
:class:`Tape`; :func:`backward` walks that record in reverse.  Trainable
weights live in :class:`Parameter` objects, which also carry the RMSProp
running average used by :func:`rmsprop_step`.
"""
from __future__ import annotations

import contextlib

from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when the operand shapes of an op are incompatible."""

    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = shapes
        joined = " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {joined}")


class TapeError(RuntimeError):
    pass


class NonFiniteGradient(FloatingPointError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"non-finite gradient for parameter {name!r}")


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager to make it the active tape; operations created
    outside any ``with`` block go to a module-level default tape.
    """

    def __init__(self):
        self.nodes: list[Var] = []

    def record(self, node: "Var") -> None:
        node._tape = self
        node._index = len(self.nodes)
        self.nodes.append(node)

    def clear(self) -> None:
        for node in self.nodes:
            node._tape = None
        self.nodes = []

    def __len__(self):
        return len(self.nodes)

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        _TAPE_STACK.pop()
        return False


_DEFAULT_TAPE = Tape()
_TAPE_STACK: list[Tape] = []


def current_tape() -> Tape:
    return _TAPE_STACK[-1] if _TAPE_STACK else _DEFAULT_TAPE


def reset_default_tape() -> None:
    _DEFAULT_TAPE.clear()


class Var:
    """A value in the computation graph.

    ``value`` is a float64 ndarray.  ``grad`` is filled by :func:`backward`
    for every node reached from the root.
    """

    __slots__ = ("value", "parents", "backward_fn", "requires_grad",
                 "param", "grad", "name", "_tape", "_index")

    def __init__(self, value, parents: tuple = (), backward_fn=None,
                 requires_grad: bool = False, param: "Parameter | None" = None,
                 name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad
        self.param = param
        self.grad = None
        self.name = name
        self._tape = None
        self._index = -1
        if requires_grad:
            current_tape().record(self)

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def numpy(self) -> np.ndarray:
        return self.value

    def item(self) -> float:
        return float(self.value)

    def __repr__(self):
        flag = ", requires_grad" if self.requires_grad else ""
        return f"Var(shape={self.shape}{flag})"

    # Operator sugar keeps layer code readable.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return subtract(self, other)

    def __rsub__(self, other):
        return subtract(other, self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return multiply(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


class Parameter:
    """Trainable array with its gradient accumulator and RMSProp state."""

    def __init__(self, value, name: str = "param"):
        self.value = np.array(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.state = np.zeros_like(self.value)
        self.name = name
        self.frozen = False

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self):
        return self.value.size

    def var(self) -> Var:
        """Fresh leaf node bound to this parameter on the active tape.

        A frozen parameter yields a plain constant instead.
        """
        if self.frozen:
            return Var(self.value.copy())
        return Var(self.value.copy(), requires_grad=True, param=self, name=self.name)

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_var(x) -> Var:
    if isinstance(x, Var):
        return x
    if isinstance(x, Parameter):
        return x.var()
    return Var(x)


def constant(x) -> Var:
    return Var(x)


def _make(value, parents, backward_fn) -> Var:
    needs = any(p.requires_grad for p in parents)
    if not needs:
        return Var(value)
    return Var(value, parents=parents, backward_fn=backward_fn, requires_grad=True)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Var, b: Var) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# ---------------------------------------------------------------- forward ops

def add(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    _broadcast_shape("add", a, b)
    sa, sb = a.shape, b.shape
    return _make(a.value + b.value, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def subtract(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    _broadcast_shape("subtract", a, b)
    sa, sb = a.shape, b.shape
    return _make(a.value - b.value, (a, b),
                 lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def multiply(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    _broadcast_shape("multiply", a, b)
    av, bv = a.value, b.value
    return _make(av * bv, (a, b),
                 lambda g: (_unbroadcast(g * bv, av.shape),
                            _unbroadcast(g * av, bv.shape)))


def scale(a, c: float) -> Var:
    a = as_var(a)
    return _make(a.value * c, (a,), lambda g: (g * c,))


def matmul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    av, bv = a.value, b.value
    return _make(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def sigmoid(a) -> Var:
    a = as_var(a)
    out = _sigmoid(a.value)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Split by sign so exp never overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(a) -> Var:
    a = as_var(a)
    mask = a.value > 0
    return _make(a.value * mask, (a,), lambda g: (g * mask,))


def tanh(a) -> Var:
    a = as_var(a)
    out = np.tanh(a.value)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def exp(a) -> Var:
    a = as_var(a)
    out = np.exp(a.value)
    return _make(out, (a,), lambda g: (g * out,))


def square(a) -> Var:
    a = as_var(a)
    av = a.value
    return _make(av * av, (a,), lambda g: (2.0 * g * av,))


def sqrt(a) -> Var:
    a = as_var(a)
    out = np.sqrt(a.value)
    return _make(out, (a,), lambda g: (g * 0.5 / out,))


def sum(a, axis: int | None = None) -> Var:  # noqa: A001
    a = as_var(a)
    shape = a.shape
    if axis is None:
        return _make(a.value.sum(), (a,), lambda g: (np.broadcast_to(g, shape).copy(),))
    return _make(a.value.sum(axis=axis), (a,),
                 lambda g: (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),))


def mean(a, axis: int | None = None) -> Var:
    a = as_var(a)
    n = a.value.size if axis is None else a.shape[axis]
    return scale(sum(a, axis=axis), 1.0 / n)


def concat(items: Sequence, axis: int = -1) -> Var:
    items = [as_var(x) for x in items]
    if not items:
        raise ShapeError("concat")
    try:
        out = np.concatenate([x.value for x in items], axis=axis)
    except ValueError:
        raise ShapeError("concat", *(x.shape for x in items)) from None
    bounds = np.cumsum([0] + [x.shape[axis] for x in items])

    def backward_fn(g):
        return tuple(np.take(g, np.arange(bounds[k], bounds[k + 1]), axis=axis)
                     for k in range(len(items)))

    return _make(out, tuple(items), backward_fn)


def slice(a, axis: int, start: int, stop: int) -> Var:  # noqa: A001
    a = as_var(a)
    n = a.shape[axis]
    if not (0 <= start < stop <= n):
        raise ShapeError(f"slice[{start}:{stop}] on axis {axis}", a.shape)
    index = [np.s_[:]] * a.ndim
    index[axis] = np.s_[start:stop]
    index = tuple(index)
    shape = a.shape

    def backward_fn(g):
        full = np.zeros(shape)
        full[index] = g
        return (full,)

    return _make(a.value[index], (a,), backward_fn)


def reshape(a, shape: tuple) -> Var:
    a = as_var(a)
    old = a.shape
    try:
        out = a.value.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", old, shape) from None
    return _make(out, (a,), lambda g: (g.reshape(old),))


def l2norm_rows(a) -> Var:
    """Euclidean norm of every row of a 2-D array."""
    a = as_var(a)
    if a.ndim != 2:
        raise ShapeError("l2norm_rows", a.shape)
    av = a.value
    norms = np.sqrt((av * av).sum(axis=1))
    safe = np.where(norms > 0, norms, 1.0)

    def backward_fn(g):
        return ((g / safe)[:, None] * av,)

    return _make(norms, (a,), backward_fn)


def sqdist(x, y) -> Var:
    """Pairwise squared Euclidean distances between rows of x (m×d) and y (n×d)."""
    x, y = as_var(x), as_var(y)
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1]:
        raise ShapeError("sqdist", x.shape, y.shape)
    diff = x.value[:, None, :] - y.value[None, :, :]
    out = np.einsum("ijk,ijk->ij", diff, diff)

    def backward_fn(g):
        w = 2.0 * g[:, :, None] * diff
        return w.sum(axis=1), -w.sum(axis=0)

    return _make(out, (x, y), backward_fn)


def detach(x) -> Var:
    """Same value, no gradient flow."""
    return Var(as_var(x).value.copy())


def is_finite(x) -> bool:
    return bool(np.all(np.isfinite(as_var(x).value)))


# ------------------------------------------------------------------- backward

def backward(root: Var) -> None:
    """Accumulate d(root)/d(value) into every reachable Parameter.

    Repeated calls without :func:`zero_grad` add up, as the accumulator
    semantics require.
    """
    if root.value.size != 1:
        raise TapeError(f"backward needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        raise TapeError("root does not depend on any differentiable input")
    tape = root._tape
    if tape is None or root._index >= len(tape.nodes) or tape.nodes[root._index] is not root:
        raise TapeError("root is not on a live tape")
    nodes = tape.nodes[: root._index + 1]
    grads: dict[int, np.ndarray] = {root._index: np.ones_like(root.value)}
    for node in reversed(nodes):
        g = grads.pop(node._index, None)
        if g is None:
            continue
        node.grad = g
        if node.param is not None:
            node.param.grad += g
        if node.backward_fn is None:
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if not parent.requires_grad or pg is None:
                continue
            if parent._tape is not tape:
                raise TapeError("graph spans more than one tape")
            k = parent._index
            if k in grads:
                grads[k] = grads[k] + pg
            else:
                grads[k] = pg


@contextlib.contextmanager
def frozen(params: Iterable[Parameter]):
    """Treat ``params`` as constants inside the block."""
    params = list(params)
    saved = [p.frozen for p in params]
    for p in params:
        p.frozen = True
    try:
        yield
    finally:
        for p, old in zip(params, saved):
            p.frozen = old


def zero_grad(params: Iterable[Parameter]) -> None:
    for p in params:
        p.zero_grad()


# -------------------------------------------------------------------- RMSProp

def rmsprop_step(p: Parameter, lr: float, decay: float = 0.9, eps: float = 1e-8) -> None:
    """One descent step: state <- decay*state + (1-decay)*g^2, value -= lr*g/(sqrt(state)+eps)."""
    g = p.grad
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradient(p.name)
    p.state *= decay
    p.state += (1.0 - decay) * g * g
    denom = np.sqrt(p.state) + eps
    # Zero state with zero gradient (eps == 0) means no step, not 0/0.
    step = np.divide(g, denom, out=np.zeros_like(g), where=denom > 0)
    p.value -= lr * step
    p.zero_grad()


class RMSProp:
    """RMSProp over a fixed parameter list."""

    def __init__(self, params: Iterable[Parameter], lr: float = 1e-3,
                 decay: float = 0.9, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("lr must be positive")
        if not 0.0 < decay < 1.0:
            raise ValueError("decay must lie in (0, 1)")
        self.params = list(params)
        self.lr = lr
        self.decay = decay
        self.eps = eps

    def step(self) -> None:
        for p in self.params:
            rmsprop_step(p, self.lr, self.decay, self.eps)

    def zero_grad(self) -> None:
        zero_grad(self.params)


# ----------------------------------------------------------- gradient checking

def numerical_grad(f: Callable[[], float], arr: np.ndarray, h: float = 1e-5,
                   index: np.ndarray | None = None) -> np.ndarray:
    """Central finite differences of ``f`` w.r.t. ``arr`` (mutated in place, then restored).

    With ``index`` only those flat entries are differenced; the result then
    has one entry per index.
    """
    flat = arr.reshape(-1)
    index = np.arange(flat.size) if index is None else np.asarray(index)
    out = np.zeros(len(index)) if arr.ndim else np.zeros(())
    gflat = out.reshape(-1)
    for i, k in enumerate(index):
        old = flat[k]
        flat[k] = old + h
        fp = f()
        flat[k] = old - h
        fm = f()
        flat[k] = old
        gflat[i] = (fp - fm) / (2.0 * h)
    return out.reshape(arr.shape) if len(index) == flat.size and arr.ndim else out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """Norm-wise relative error ||a - n|| / max(||a||, ||n||, floor)."""
    diff = np.linalg.norm(np.ravel(analytic) - np.ravel(numeric))
    scale_ = max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)
    return float(diff / scale_)


def gradcheck(loss_fn: Callable[[], Var], params: Sequence[Parameter], h: float = 1e-5,
              max_entries: int | None = None, rng: np.random.Generator | None = None) -> float:
    """Largest relative error between backprop and central differences over ``params``.

    ``loss_fn`` must rebuild the graph from the current parameter values on
    every call.  ``max_entries`` caps the entries differenced per parameter
    (a random subset drawn from ``rng``) for large networks.
    """
    for p in params:
        p.zero_grad()
    with Tape():
        root = loss_fn()
        backward(root)
    analytic = [p.grad.copy() for p in params]
    for p in params:
        p.zero_grad()

    def f():
        with Tape():
            return float(loss_fn().value)

    rng = rng if rng is not None else np.random.default_rng(0)
    worst = 0.0
    for p, a in zip(params, analytic):
        index = None
        if max_entries is not None and p.value.size > max_entries:
            index = np.sort(rng.choice(p.value.size, max_entries, replace=False))
        n = numerical_grad(f, p.value, h, index)
        worst = max(worst, relative_error(a.reshape(-1)[index] if index is not None else a, n))
    return worst
