"""Network building blocks: dense layers, bounded squashing onto a prior box,
serial LSTM units and the convolutional summarizer for binary matrices."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import autodiff as ad
from .autodiff import Parameter, ShapeError, Var

ACTIVATIONS: dict[str, Callable[[Var], Var] | None] = {
    "none": None,
    "sigmoid": ad.sigmoid,
    "relu": ad.relu,
    "tanh": ad.tanh,
}


@dataclass(frozen=True)
class PriorSpec:
    """Independent uniform prior on a box ``[lo_i, hi_i]``."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        lo, hi = np.asarray(self.lo, float), np.asarray(self.hi, float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("prior bounds must be 1-D and of equal length")
        if np.any(lo >= hi):
            bad = int(np.argmax(lo >= hi))
            raise ValueError(f"prior dimension {bad}: lo={lo[bad]} is not below hi={hi[bad]}")
        object.__setattr__(self, "lo", tuple(float(v) for v in lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in hi))
        if self.names is not None:
            object.__setattr__(self, "names", tuple(self.names))

    @classmethod
    def box(cls, lo: float, hi: float, d: int, names=None) -> "PriorSpec":
        return cls((lo,) * d, (hi,) * d, names)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def lo_array(self) -> np.ndarray:
        return np.array(self.lo)

    @property
    def hi_array(self) -> np.ndarray:
        return np.array(self.hi)

    @property
    def width(self) -> np.ndarray:
        return self.hi_array - self.lo_array

    @property
    def mean(self) -> np.ndarray:
        return 0.5 * (self.lo_array + self.hi_array)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lo_array, self.hi_array, size=(n, self.dim))

    def contains(self, theta: np.ndarray, strict: bool = True) -> bool:
        theta = np.atleast_2d(theta)
        if strict:
            return bool(np.all((theta > self.lo_array) & (theta < self.hi_array)))
        return bool(np.all((theta >= self.lo_array) & (theta <= self.hi_array)))

    def to_unit(self, theta: np.ndarray) -> np.ndarray:
        """Affine map of the box onto [-1, 1]^d (plain arrays)."""
        return 2.0 * (np.asarray(theta) - self.lo_array) / self.width - 1.0


def prior_squash(raw, prior: PriorSpec) -> Var:
    """lo + (hi - lo) * sigmoid(raw), clamped one ulp inside the open box."""
    raw = ad.as_var(raw)
    if raw.ndim != 2 or raw.shape[1] != prior.dim:
        raise ShapeError("prior_squash", raw.shape, (None, prior.dim))
    lo, width = prior.lo_array, prior.width
    s = ad._sigmoid(raw.value)
    out = lo + width * s
    out = np.clip(out, np.nextafter(lo, np.inf), np.nextafter(prior.hi_array, -np.inf))
    return ad._make(out, (raw,), lambda g: (g * width * s * (1.0 - s),))


def to_unit(theta, prior: PriorSpec) -> Var:
    """Differentiable version of :meth:`PriorSpec.to_unit`."""
    theta = ad.as_var(theta)
    return ad.add(ad.multiply(theta, 2.0 / prior.width), -2.0 * prior.lo_array / prior.width - 1.0)


class Module:
    """Container that knows how to collect its Parameters."""

    def parameters(self) -> list[Parameter]:
        found: list[Parameter] = []
        seen: set[int] = set()

        def visit(obj):
            if isinstance(obj, Parameter):
                if id(obj) not in seen:
                    seen.add(id(obj))
                    found.append(obj)
            elif isinstance(obj, Module):
                for v in vars(obj).values():
                    visit(v)
            elif isinstance(obj, (list, tuple)):
                for v in obj:
                    visit(v)

        for v in vars(self).values():
            visit(v)
        return found

    def num_parameters(self) -> int:
        return int(np.sum([p.size for p in self.parameters()]))

    def state_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.value.copy() for p in self.parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for p in self.parameters():
            p.value[...] = state[p.name]

    def __call__(self, x):
        return self.forward(x)

    def forward(self, x):
        raise NotImplementedError


class Dense(Module):
    """y = act(x @ W + b)."""

    def __init__(self, n_in: int, n_out: int, activation: str = "none",
                 rng: np.random.Generator | None = None, init_std: float = 1.0,
                 name: str = "dense"):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        rng = np.random.default_rng() if rng is None else rng
        self.W = Parameter(init_std * rng.standard_normal((n_in, n_out)), f"{name}.W")
        self.b = Parameter(init_std * rng.standard_normal(n_out), f"{name}.b")
        self.activation = activation

    @property
    def n_in(self) -> int:
        return self.W.shape[0]

    @property
    def n_out(self) -> int:
        return self.W.shape[1]

    def forward(self, x) -> Var:
        return dense_forward(self, x)


def dense_forward(layer: Dense, x) -> Var:
    x = ad.as_var(x)
    if x.ndim != 2 or x.shape[1] != layer.n_in:
        raise ShapeError("dense", x.shape, layer.W.shape)
    y = ad.add(ad.matmul(x, layer.W.var()), layer.b.var())
    act = ACTIVATIONS[layer.activation]
    return y if act is None else act(y)


class MLP(Module):
    """Stack of dense layers; ``activations`` has one entry per layer."""

    def __init__(self, sizes: Sequence[int], activations: Sequence[str],
                 rng: np.random.Generator | None = None, init_std: float = 1.0,
                 name: str = "mlp"):
        if len(activations) != len(sizes) - 1:
            raise ValueError("need one activation per layer")
        self.layers = [Dense(sizes[k], sizes[k + 1], activations[k], rng, init_std, f"{name}.{k}")
                       for k in range(len(sizes) - 1)]

    @property
    def n_in(self) -> int:
        return self.layers[0].n_in

    @property
    def n_out(self) -> int:
        return self.layers[-1].n_out

    def forward(self, x) -> Var:
        for layer in self.layers:
            x = layer(x)
        return x


def orthogonal_init(mlp: MLP, rng: np.random.Generator, gain: float = 1.0) -> MLP:
    """Reset every weight matrix to ``gain`` times a random semi-orthogonal matrix
    and every bias to zero.  Useful when the network stays frozen, since a
    Gaussian matrix of modest size can be badly conditioned."""
    for layer in mlp.layers:
        a = rng.standard_normal((max(layer.n_in, layer.n_out), min(layer.n_in, layer.n_out)))
        q, r = np.linalg.qr(a)
        q = q * np.sign(np.diag(r))
        layer.W.value[...] = gain * (q if layer.n_in >= layer.n_out else q.T)
        layer.b.value[...] = 0.0
    return mlp


class LSTMChain(Module):
    """``k`` LSTM units run serially over a sequence; returns the last hidden state.

    Gate weights act on the concatenation ``[h_{t-1}, x_t]``; the initial
    hidden and cell states are zero.
    """

    GATES = ("f", "i", "C", "o")

    def __init__(self, d: int, k: int, rng: np.random.Generator | None = None,
                 init_std: float = 1.0, name: str = "lstm"):
        rng = np.random.default_rng() if rng is None else rng
        self.d, self.k = d, k
        self.W = {g: Parameter(init_std * rng.standard_normal((k + d, k)), f"{name}.W_{g}")
                  for g in self.GATES}
        self.b = {g: Parameter(init_std * rng.standard_normal(k), f"{name}.b_{g}")
                  for g in self.GATES}

    def parameters(self) -> list[Parameter]:
        return [self.W[g] for g in self.GATES] + [self.b[g] for g in self.GATES]

    def forward(self, seq) -> Var:
        return lstm_forward(self, seq)


def lstm_forward(chain: LSTMChain, seq) -> Var:
    seq = ad.as_var(seq)
    if seq.ndim != 3 or seq.shape[2] != chain.d:
        raise ShapeError("lstm", seq.shape, (None, None, chain.d))
    batch, T, d = seq.shape
    if T < 1:
        raise ValueError("lstm: empty sequence")
    W = {g: chain.W[g].var() for g in chain.GATES}
    b = {g: chain.b[g].var() for g in chain.GATES}
    h = ad.constant(np.zeros((batch, chain.k)))
    C = ad.constant(np.zeros((batch, chain.k)))
    for t in range(T):
        if seq.requires_grad:
            x_t = ad.reshape(ad.slice(seq, 1, t, t + 1), (batch, d))
        else:
            x_t = ad.constant(seq.value[:, t, :])
        hx = ad.concat([h, x_t], axis=1)
        f = ad.sigmoid(ad.add(ad.matmul(hx, W["f"]), b["f"]))
        i = ad.sigmoid(ad.add(ad.matmul(hx, W["i"]), b["i"]))
        c_tilde = ad.tanh(ad.add(ad.matmul(hx, W["C"]), b["C"]))
        C = ad.add(ad.multiply(f, C), ad.multiply(i, c_tilde))
        o = ad.sigmoid(ad.add(ad.matmul(hx, W["o"]), b["o"]))
        h = ad.multiply(o, ad.tanh(C))
    return h


# ------------------------------------------------------------- convolution

def conv2d(x, weight, bias, stride: int) -> Var:
    """Single-channel valid convolution (cross-correlation).

    x: B×H×W, weight: n×k×k, bias: n  ->  B×n×Ho×Wo.
    """
    x, weight, bias = ad.as_var(x), ad.as_var(weight), ad.as_var(bias)
    if x.ndim != 3 or weight.ndim != 3:
        raise ShapeError("conv2d", x.shape, weight.shape)
    B, H, W = x.shape
    n, k, k2 = weight.shape
    if H < k or W < k2:
        raise ShapeError("conv2d (input smaller than filter)", x.shape, weight.shape)
    patches = sliding_window_view(x.value, (k, k2), axis=(1, 2))[:, ::stride, ::stride]
    Ho, Wo = patches.shape[1], patches.shape[2]
    cols = patches.reshape(B * Ho * Wo, k * k2)
    wmat = weight.value.reshape(n, k * k2).T
    out = (cols @ wmat + bias.value).reshape(B, Ho, Wo, n).transpose(0, 3, 1, 2)

    def backward_fn(g):
        gcols = g.transpose(0, 2, 3, 1).reshape(B * Ho * Wo, n)
        gw = (cols.T @ gcols).T.reshape(n, k, k2)
        gb = gcols.sum(axis=0)
        gx = None
        if x.requires_grad:
            gpatch = (gcols @ wmat.T).reshape(B, Ho, Wo, k, k2)
            gx = np.zeros((B, H, W))
            for a in range(k):
                for c in range(k2):
                    gx[:, a:a + stride * Ho:stride, c:c + stride * Wo:stride] += gpatch[:, :, :, a, c]
        return gx, gw, gb

    return ad._make(out, (x, weight, bias), backward_fn)


def maxpool2d(x, size: int = 2) -> Var:
    """Non-overlapping max pooling over the last two axes (trailing remainder dropped)."""
    x = ad.as_var(x)
    if x.ndim != 4:
        raise ShapeError("maxpool2d", x.shape)
    B, n, H, W = x.shape
    Hp, Wp = H // size, W // size
    if Hp == 0 or Wp == 0:
        raise ShapeError("maxpool2d (input smaller than window)", x.shape)
    crop = x.value[:, :, :Hp * size, :Wp * size]
    win = crop.reshape(B, n, Hp, size, Wp, size).transpose(0, 1, 2, 4, 3, 5)
    win = win.reshape(B, n, Hp, Wp, size * size)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]

    def backward_fn(g):
        gwin = np.zeros_like(win)
        np.put_along_axis(gwin, arg[..., None], g[..., None], axis=-1)
        gwin = gwin.reshape(B, n, Hp, Wp, size, size).transpose(0, 1, 2, 4, 3, 5)
        gx = np.zeros((B, n, H, W))
        gx[:, :, :Hp * size, :Wp * size] = gwin.reshape(B, n, Hp * size, Wp * size)
        return (gx,)

    return ad._make(out, (x,), backward_fn)


def conv_output_shape(in_shape: tuple[int, int], size: int, stride: int, pool: int) -> tuple[int, int]:
    H, W = in_shape
    Ho, Wo = (H - size) // stride + 1, (W - size) // stride + 1
    return Ho // pool, Wo // pool


class ConvSummarizer(Module):
    """conv(size×size, stride) -> relu -> maxpool(pool) -> flatten -> dense(out_dim)."""

    def __init__(self, in_shape: tuple[int, int], n_filters: int = 8, size: int = 5,
                 stride: int = 2, pool: int = 2, out_dim: int = 160,
                 rng: np.random.Generator | None = None, init_std: float = 1.0,
                 name: str = "conv"):
        rng = np.random.default_rng() if rng is None else rng
        H, W = in_shape
        if H < size or W < size:
            raise ValueError(f"input {in_shape} is smaller than a {size}x{size} filter")
        self.in_shape = (H, W)
        self.stride, self.pool = stride, pool
        self.filters = Parameter(init_std * rng.standard_normal((n_filters, size, size)),
                                 f"{name}.filters")
        self.bias = Parameter(init_std * rng.standard_normal(n_filters), f"{name}.bias")
        ph, pw = conv_output_shape(self.in_shape, size, stride, pool)
        self.flat_dim = n_filters * ph * pw
        self.head = Dense(self.flat_dim, out_dim, "none", rng, init_std, f"{name}.head")

    @property
    def n_out(self) -> int:
        return self.head.n_out

    def forward(self, M) -> Var:
        return conv_summarize(self, M)


def conv_summarize(s: ConvSummarizer, M) -> Var:
    M = ad.as_var(M)
    if M.ndim != 3:
        raise ShapeError("conv_summarize", M.shape)
    if M.shape[1] < s.filters.shape[1] or M.shape[2] < s.filters.shape[2]:
        raise ShapeError("conv_summarize (matrix smaller than filter)", M.shape, s.filters.shape)
    h = ad.relu(conv2d(M, s.filters.var(), s.bias.var(), s.stride))
    h = maxpool2d(h, s.pool)
    h = ad.reshape(h, (M.shape[0], -1))
    if h.shape[1] != s.head.n_in:
        raise ShapeError("conv_summarize (flattened size)", h.shape, s.head.W.shape)
    return s.head(h)
