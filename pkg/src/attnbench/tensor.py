"""Dense float64 tensors with tape-based reverse-mode automatic differentiation.

Every operation is a pure function of its inputs: it returns a fresh Tensor and
never mutates an existing one.  When a Tape is active, each primitive appends a
node (operation name, inputs, output, backward closure) in execution order, so
the node list is always topologically sorted and the backward pass is a simple
reverse replay.  Without an active Tape, operations run in plain inference mode
and record nothing.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, DimensionError

Array = np.ndarray


class Tensor:
    """A dense, row-major, double-precision array with optional gradient."""

    __slots__ = ("data", "grad", "requires_grad", "node", "retains_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        self.data = arr
        self.grad: Array | None = None
        self.requires_grad = requires_grad
        self.node: Node | None = None
        self.retains_grad = False

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
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def retain_grad(self) -> "Tensor":
        """Ask backward() to store this (possibly non-leaf) tensor's gradient."""
        self.retains_grad = True
        return self

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar; scalars are wrapped as constants
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __neg__(self):
        return scale(self, -1.0)

    def __sub__(self, other):
        return add(self, scale(_as_tensor(other), -1.0))

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Node:
    """One recorded primitive application: inputs, output, backward closure."""

    __slots__ = ("op", "inputs", "out", "backward")

    def __init__(self, op: str, inputs: tuple[Tensor, ...], out: Tensor,
                 backward: Callable[[Array], tuple[Array | None, ...]]):
        self.op = op
        self.inputs = inputs
        self.out = out
        self.backward = backward


_TAPE_STACK: list["Tape"] = []


class Tape:
    """Recorded sequence of primitive applications, in execution order.

    Use as a context manager around the forward pass, then call
    ``backward(tape, loss)`` (or ``tape.backward(loss)``).
    """

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPE_STACK.pop()

    def backward(self, loss: Tensor) -> None:
        backward(self, loss)


def _active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _make(op: str, inputs: tuple[Tensor, ...], out_data: Array,
          backward_fn: Callable[[Array], tuple[Array | None, ...]]) -> Tensor:
    """Wrap a primitive's result, recording a node if a tape is active."""
    out = Tensor(out_data)
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        node = Node(op, inputs, out, backward_fn)
        out.node = node
        tape.nodes.append(node)
    return out


def backward(tape: Tape, loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable requires_grad leaf.

    Gradients add into ``leaf.grad`` without resetting, so two backward calls
    double the accumulated gradient.  Deterministic given the tape.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, Array] = {}

    def _store_leaf(t: Tensor, g: Array) -> None:
        t.grad = g.copy() if t.grad is None else t.grad + g

    if loss.node is None:
        if loss.requires_grad:
            _store_leaf(loss, np.ones_like(loss.data))
        return
    grads[id(loss)] = np.ones_like(loss.data)
    if loss.retains_grad:
        _store_leaf(loss, grads[id(loss)])
    for node in reversed(tape.nodes):
        g_out = grads.pop(id(node.out), None)
        if g_out is None:
            continue
        for t, g in zip(node.inputs, node.backward(g_out)):
            if g is None or not t.requires_grad:
                continue
            if g.shape != t.data.shape:
                g = g.reshape(t.data.shape)
            if t.node is None:
                _store_leaf(t, g)
            else:
                if t.retains_grad:
                    _store_leaf(t, g)
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g


# ---------------------------------------------------------------------------
# broadcasting helpers


def _check_broadcast(a: tuple[int, ...], b: tuple[int, ...]) -> None:
    for k in range(1, min(len(a), len(b)) + 1):
        ea, eb = a[-k], b[-k]
        if ea != eb and ea != 1 and eb != 1:
            raise DimensionError(
                f"cannot broadcast shapes {a} and {b}: axis -{k} has extents {ea} vs {eb}"
            )


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    """Sum-reduce a broadcast gradient back to an operand's shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise and combining primitives


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0.0)

    def bwd(g: Array):
        return ((x.data > 0.0) * g,)

    return _make("relu", (x,), out, bwd)


def sigmoid(x: Tensor) -> Tensor:
    # split by sign to avoid overflow in exp
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    e = np.exp(d[~pos])
    out[~pos] = e / (1.0 + e)

    def bwd(g: Array):
        return (g * out * (1.0 - out),)

    return _make("sigmoid", (x,), out, bwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a.shape, b.shape)
    out = a.data + b.data

    def bwd(g: Array):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make("add", (a, b), out, bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a.shape, b.shape)
    out = a.data * b.data

    def bwd(g: Array):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make("mul", (a, b), out, bwd)


def combine(kind: str, a: Tensor, b: Tensor) -> Tensor:
    """Broadcasting elementwise add or mul (gradients sum-reduced back)."""
    if kind == "add":
        return add(a, b)
    if kind == "mul":
        return mul(a, b)
    raise ContractError(f"unknown combine kind {kind!r}")


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    out = x.data * c

    def bwd(g: Array):
        return (g * c,)

    return _make("scale", (x,), out, bwd)


# ---------------------------------------------------------------------------
# shape primitives


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    out = x.data.reshape(shape)

    def bwd(g: Array):
        return (g.reshape(x.data.shape),)

    return _make("reshape", (x,), out, bwd)


def transpose(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise DimensionError(f"transpose expects rank-2, got shape {x.shape}")
    out = x.data.T.copy()

    def bwd(g: Array):
        return (g.T,)

    return _make("transpose", (x,), out, bwd)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    tensors = tuple(tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def bwd(g: Array):
        return tuple(np.split(g, offsets, axis=axis))

    return _make("concat", tensors, out, bwd)


def tsum(x: Tensor, axis: int | tuple[int, ...] | None = None,
         keepdims: bool = False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)
    if np.ndim(out) == 0:
        out = np.asarray(out).reshape(1)

    def bwd(g: Array):
        if axis is None:
            return (np.broadcast_to(g.reshape(()), x.data.shape).copy()
                    if g.size == 1 else g.reshape(x.data.shape),)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g2, x.data.shape).copy(),)

    return _make("sum", (x,), out, bwd)


def tmean(x: Tensor, axis: int | tuple[int, ...] | None = None,
          keepdims: bool = False) -> Tensor:
    if axis is None:
        n = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = int(np.prod([x.shape[a] for a in axes]))
    return scale(tsum(x, axis=axis, keepdims=keepdims), 1.0 / n)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner extents disagree: {a.shape} x {b.shape}")
    out = a.data @ b.data

    def bwd(g: Array):
        return g @ b.data.T, a.data.T @ g

    return _make("matmul", (a, b), out, bwd)


# ---------------------------------------------------------------------------
# convolution and pooling


def _conv_cols(xp: Array, kh: int, kw: int, stride: int, ho: int, wo: int) -> Array:
    """im2col: padded input (N,C,Hp,Wp) -> columns (N, C*kh*kw, ho*wo)."""
    n, c = xp.shape[:2]
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    return win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * kh * kw, ho * wo)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation with zero padding, NCHW layout."""
    if x.ndim != 4 or weight.ndim != 4:
        raise DimensionError(f"conv2d expects 4-D input/weight, got {x.shape} and {weight.shape}")
    n, c, h, w = x.shape
    k, cw, kh, kw = weight.shape
    if cw != c:
        raise DimensionError(f"conv2d channel mismatch: input {c}, weight expects {cw}")
    hp, wp = h + 2 * padding, w + 2 * padding
    if kh > hp or kw > wp:
        raise DimensionError(
            f"kernel {kh}x{kw} larger than padded input {hp}x{wp}")
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = _conv_cols(xp, kh, kw, stride, ho, wo)
    w2 = weight.data.reshape(k, c * kh * kw)
    out = np.matmul(w2, cols)  # (N, K, ho*wo)
    if bias is not None:
        if bias.size != k:
            raise DimensionError(f"bias extent {bias.size} != output channels {k}")
        out = out + bias.data.reshape(1, k, 1)
    out = out.reshape(n, k, ho, wo)
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def bwd(g: Array):
        gf = g.reshape(n, k, ho * wo)
        cols_b = _conv_cols(xp, kh, kw, stride, ho, wo)
        gw = np.matmul(gf, cols_b.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
        gcols = np.matmul(w2.T, gf).reshape(n, c, kh, kw, ho, wo)
        gxp = np.zeros_like(xp)
        for u in range(kh):
            for v in range(kw):
                gxp[:, :, u:u + stride * ho:stride, v:v + stride * wo:stride] += gcols[:, :, u, v]
        gx = gxp[:, :, padding:padding + h, padding:padding + w]
        if bias is None:
            return gx, gw
        return gx, gw, gf.sum(axis=(0, 2)).reshape(bias.data.shape)

    return _make("conv2d", inputs, out, bwd)


def pool2d(x: Tensor, kind: str, window: int, stride: int | None = None,
           padding: int = 0) -> Tensor:
    """Windowed max/avg pooling.  Max pads with -inf and routes the gradient
    to the first argmax in row-major window order; avg zero-pads and divides
    by the full window area."""
    if kind not in ("max", "avg"):
        raise ContractError(f"unknown pool kind {kind!r}")
    if x.ndim != 4:
        raise DimensionError(f"pool2d expects 4-D input, got {x.shape}")
    stride = window if stride is None else stride
    n, c, h, w = x.shape
    hp, wp = h + 2 * padding, w + 2 * padding
    if window > hp or window > wp:
        raise DimensionError(f"window {window} exceeds padded input {hp}x{wp}")
    ho = (hp - window) // stride + 1
    wo = (wp - window) // stride + 1
    fill = -np.inf if kind == "max" else 0.0
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)),
                constant_values=fill)
    win = sliding_window_view(xp, (window, window), axis=(2, 3))[:, :, ::stride, ::stride]
    flat = win.reshape(n, c, ho, wo, window * window)

    if kind == "max":
        arg = flat.argmax(axis=-1)
        out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

        def bwd(g: Array):
            gxp = np.zeros_like(xp)
            nn, cc, ii, jj = np.indices((n, c, ho, wo))
            rows = ii * stride + arg // window
            cols = jj * stride + arg % window
            np.add.at(gxp, (nn, cc, rows, cols), g)
            return (gxp[:, :, padding:padding + h, padding:padding + w],)

        return _make("max_pool2d", (x,), out, bwd)

    area = float(window * window)
    out = flat.mean(axis=-1)

    def bwd(g: Array):
        gxp = np.zeros_like(xp)
        gs = g / area
        for u in range(window):
            for v in range(window):
                gxp[:, :, u:u + stride * ho:stride, v:v + stride * wo:stride] += gs
        return (gxp[:, :, padding:padding + h, padding:padding + w],)

    return _make("avg_pool2d", (x,), out, bwd)


def global_pool(x: Tensor, kind: str) -> Tensor:
    """Reduce both spatial dimensions of an N,C,H,W map to N,C,1,1."""
    if kind not in ("max", "avg"):
        raise ContractError(f"unknown global pool kind {kind!r}")
    if x.ndim != 4:
        raise DimensionError(f"global_pool expects 4-D input, got {x.shape}")
    n, c, h, w = x.shape
    if kind == "avg":
        out = x.data.mean(axis=(2, 3), keepdims=True)

        def bwd(g: Array):
            return (np.broadcast_to(g / (h * w), x.data.shape).copy(),)

        return _make("global_avg_pool", (x,), out, bwd)

    flat = x.data.reshape(n, c, h * w)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1).reshape(n, c, 1, 1)

    def bwd(g: Array):
        gx = np.zeros((n, c, h * w))
        np.put_along_axis(gx, arg[..., None], g.reshape(n, c, 1), axis=-1)
        return (gx.reshape(x.data.shape),)

    return _make("global_max_pool", (x,), out, bwd)


def spatial_pool(x: Tensor, kind: str) -> Tensor:
    """Reduce the channel dimension of an N,C,H,W map to N,1,H,W."""
    if kind not in ("max", "avg"):
        raise ContractError(f"unknown spatial pool kind {kind!r}")
    if x.ndim != 4:
        raise DimensionError(f"spatial_pool expects 4-D input, got {x.shape}")
    n, c, h, w = x.shape
    if kind == "avg":
        out = x.data.mean(axis=1, keepdims=True)

        def bwd(g: Array):
            return (np.broadcast_to(g / c, x.data.shape).copy(),)

        return _make("spatial_avg_pool", (x,), out, bwd)

    arg = x.data.argmax(axis=1, keepdims=True)
    out = np.take_along_axis(x.data, arg, axis=1)

    def bwd(g: Array):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, arg, g, axis=1)
        return (gx,)

    return _make("spatial_max_pool", (x,), out, bwd)


# ---------------------------------------------------------------------------
# normalizations and softmax


def softmax(x: Tensor, axis: int) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd(g: Array):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make("softmax", (x,), out, bwd)


def log_softmax(x: Tensor, axis: int) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def bwd(g: Array):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _make("log_softmax", (x,), out, bwd)


def layer_norm(x: Tensor, scale_t: Tensor, shift_t: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then apply the
    learned per-feature scale and shift."""
    d = x.shape[-1]
    if scale_t.shape != (d,) or shift_t.shape != (d,):
        raise DimensionError(
            f"layer_norm scale/shift must have shape ({d},), got {scale_t.shape}/{shift_t.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = ((x.data - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = xhat * scale_t.data + shift_t.data
    red = tuple(range(x.ndim - 1))

    def bwd(g: Array):
        gh = g * scale_t.data
        gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                    - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        return gx, (g * xhat).sum(axis=red), g.sum(axis=red)

    return _make("layer_norm", (x, scale_t, shift_t), out, bwd)


def batch_norm_train(x: Tensor, scale_t: Tensor, shift_t: Tensor,
                     eps: float = 1e-5) -> tuple[Tensor, Array, Array]:
    """Per-channel batch normalization over (N,H,W); gradients flow through
    the batch statistics.  Returns (output, batch_mean, biased_batch_var)."""
    if x.ndim != 4:
        raise DimensionError(f"batch_norm expects 4-D input, got {x.shape}")
    c = x.shape[1]
    _check_bn_params(scale_t, shift_t, c)
    axes = (0, 2, 3)
    m = x.data.shape[0] * x.data.shape[2] * x.data.shape[3]
    mu = x.data.mean(axis=axes, keepdims=True)
    var = ((x.data - mu) ** 2).mean(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    s = scale_t.data.reshape(1, c, 1, 1)
    out = xhat * s + shift_t.data.reshape(1, c, 1, 1)

    def bwd(g: Array):
        gsum = g.sum(axis=axes, keepdims=True)
        gxhat_sum = (g * xhat).sum(axis=axes, keepdims=True)
        gx = (s * inv / m) * (m * g - gsum - xhat * gxhat_sum)
        return gx, gxhat_sum.reshape(c), gsum.reshape(c)

    out_t = _make("batch_norm_train", (x, scale_t, shift_t), out, bwd)
    return out_t, mu.reshape(c), var.reshape(c)


def batch_norm_eval(x: Tensor, scale_t: Tensor, shift_t: Tensor,
                    mean: Array, var: Array, eps: float = 1e-5) -> Tensor:
    """Affine per-channel map using fixed running statistics."""
    if x.ndim != 4:
        raise DimensionError(f"batch_norm expects 4-D input, got {x.shape}")
    c = x.shape[1]
    _check_bn_params(scale_t, shift_t, c)
    inv = 1.0 / np.sqrt(var.reshape(1, c, 1, 1) + eps)
    xhat = (x.data - mean.reshape(1, c, 1, 1)) * inv
    s = scale_t.data.reshape(1, c, 1, 1)
    out = xhat * s + shift_t.data.reshape(1, c, 1, 1)
    axes = (0, 2, 3)

    def bwd(g: Array):
        return g * s * inv, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    return _make("batch_norm_eval", (x, scale_t, shift_t), out, bwd)


def _check_bn_params(scale_t: Tensor, shift_t: Tensor, c: int) -> None:
    if scale_t.shape != (c,) or shift_t.shape != (c,):
        raise DimensionError(
            f"batch_norm scale/shift must have shape ({c},), got {scale_t.shape}/{shift_t.shape}")


def elementwise(kind: str, x: Tensor) -> Tensor:
    """Kind-dispatched unary nonlinearity (relu or sigmoid)."""
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ContractError(f"unknown elementwise kind {kind!r}")
