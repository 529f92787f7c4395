"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every op builds its output eagerly with numpy and, when any input tracks
gradients, records a closure mapping the output gradient to one gradient
per parent. :func:`backward` walks that tape in reverse topological order.

Matrix-product style ops (``matmul``, ``linear``, ``bmm``, ``conv2d``) report
the multiply-accumulates they perform to any active :func:`count_macs`
context, which is how the analytic FLOPs model is checked against execution.
"""

from __future__ import annotations

import contextlib
import hashlib
import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

__all__ = [
    "Tensor",
    "Rng",
    "SGD",
    "ShapeError",
    "GradientError",
    "tensor",
    "parameter",
    "no_grad",
    "count_macs",
    "add",
    "sub",
    "mul",
    "scale",
    "matmul",
    "linear",
    "bmm",
    "reshape",
    "transpose",
    "sum",
    "mean",
    "relu",
    "gelu",
    "softmax_lastdim",
    "log_softmax_lastdim",
    "layer_norm",
    "cross_entropy",
    "pad_edge",
    "conv2d",
    "resample2d",
    "backward",
    "sgd_step",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class GradientError(RuntimeError):
    """Misuse of the differentiation tape."""


_STATE = threading.local()


def grad_enabled() -> bool:
    return getattr(_STATE, "grad", True)


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (inference only; per thread)."""
    prev = grad_enabled()
    _STATE.grad = False
    try:
        yield
    finally:
        _STATE.grad = prev


@dataclass
class MacCount:
    total: int = 0
    by_op: dict = field(default_factory=dict)

    @property
    def flops(self) -> int:
        return 2 * self.total


_MAC_COUNTERS: list[MacCount] = []


@contextlib.contextmanager
def count_macs():
    """Count multiply-accumulates executed by product ops inside the block.

    >>> with count_macs() as c:
    ...     _ = matmul(tensor(np.ones((2, 3))), tensor(np.ones((3, 4))))
    >>> c.total
    24
    """
    counter = MacCount()
    _MAC_COUNTERS.append(counter)
    try:
        yield counter
    finally:
        _MAC_COUNTERS.remove(counter)


def _record_macs(op: str, n: int) -> None:
    for c in _MAC_COUNTERS:
        c.total += int(n)
        c.by_op[op] = c.by_op.get(op, 0) + int(n)


class Tensor:
    """A float64 array node in the differentiation tape.

    ``grad`` is ``None`` until a backward pass reaches this tensor; for
    leaves it then accumulates across passes until :meth:`zero_grad`.
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._consumed = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __truediv__(self, other):
        if not isinstance(other, (int, float)):
            raise TypeError("only division by a Python scalar is supported")
        return scale(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return _getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def tensor(data, requires_grad: bool = False, name: str | None = None) -> Tensor:
    """Copying constructor; the result never aliases ``data``."""
    return Tensor(np.array(data, dtype=np.float64), requires_grad=requires_grad, name=name)


def parameter(data, name: str | None = None) -> Tensor:
    return tensor(data, requires_grad=True, name=name)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: Sequence[Tensor], grad_fn: Callable) -> Tensor:
    out = Tensor(data)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = grad_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError as exc:
        raise ShapeError(f"cannot add shapes {a.shape} and {b.shape}") from exc
    return _node(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = a.data - b.data
    except ValueError as exc:
        raise ShapeError(f"cannot subtract shapes {a.shape} and {b.shape}") from exc
    return _node(out, (a, b), lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = a.data * b.data
    except ValueError as exc:
        raise ShapeError(f"cannot multiply shapes {a.shape} and {b.shape}") from exc
    return _node(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _node(a.data * c, (a,), lambda g: (g * c,))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _node(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x: Tensor) -> Tensor:
    """Exact (erf-based) GELU."""
    cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)
    return _node(x.data * cdf, (x,), lambda g: (g * (cdf + x.data * pdf),))


# ---------------------------------------------------------------------------
# shape ops
# ---------------------------------------------------------------------------


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    src = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {src} to {tuple(shape)}") from exc
    return _node(out, (x,), lambda g: (g.reshape(src),))


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _node(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def _getitem(x: Tensor, idx) -> Tensor:
    out = x.data[idx]

    def grad_fn(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        return (full,)

    return _node(np.array(out), (x,), grad_fn)


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def grad_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _node(np.asarray(out), (x,), grad_fn)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = int(np.prod([x.shape[a] for a in axes]))
    return scale(sum(x, axis, keepdims), 1.0 / n)


# ---------------------------------------------------------------------------
# products
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Rank-2 matrix product ``(m, k) @ (k, n)``."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul needs (m,k) @ (k,n); got {a.shape} and {b.shape}")
    m, k = a.shape
    n = b.shape[1]
    _record_macs("matmul", m * k * n)
    return _node(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w.T (+ b)`` over the last axis; ``w`` is ``(out, in)``."""
    if w.ndim != 2 or x.shape[-1] != w.shape[1]:
        raise ShapeError(f"linear: input {x.shape} incompatible with weight {w.shape}")
    lead = x.shape[:-1]
    rows = int(np.prod(lead)) if lead else 1
    _record_macs("linear", rows * w.shape[0] * w.shape[1])
    x2 = x.data.reshape(rows, w.shape[1])
    out = x2 @ w.data.T
    if b is not None:
        out = out + b.data
    out = out.reshape(lead + (w.shape[0],))
    parents = (x, w) if b is None else (x, w, b)

    def grad_fn(g):
        g2 = g.reshape(rows, w.shape[0])
        gx = (g2 @ w.data).reshape(x.shape)
        gw = g2.T @ x2
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return _node(out, parents, grad_fn)


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Batched product over matching leading axes: ``(..., m, k) @ (..., k, n)``."""
    if a.ndim < 2 or a.ndim != b.ndim or a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"bmm needs (...,m,k) @ (...,k,n); got {a.shape} and {b.shape}")
    m, k = a.shape[-2:]
    n = b.shape[-1]
    _record_macs("bmm", int(np.prod(a.shape[:-2])) * m * k * n)
    return _node(
        np.matmul(a.data, b.data),
        (a, b),
        lambda g: (np.matmul(g, np.swapaxes(b.data, -1, -2)), np.matmul(np.swapaxes(a.data, -1, -2), g)),
    )


# ---------------------------------------------------------------------------
# normalisation and probabilities
# ---------------------------------------------------------------------------


def softmax_lastdim(x: Tensor) -> Tensor:
    if x.size == 0 or x.ndim == 0 or x.shape[-1] < 1:
        raise ShapeError(f"softmax over an empty last axis (shape {x.shape})")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)
    return _node(y, (x,), lambda g: (y * (g - (g * y).sum(axis=-1, keepdims=True)),))


def log_softmax_lastdim(x: Tensor) -> Tensor:
    if x.size == 0 or x.ndim == 0:
        raise ShapeError(f"log-softmax over an empty last axis (shape {x.shape})")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    y = z - lse
    p = np.exp(y)
    return _node(y, (x,), lambda g: (g - p * g.sum(axis=-1, keepdims=True),))


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then apply ``gamma * xhat + beta``."""
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm: gamma {gamma.shape} / beta {beta.shape} do not match last dim {d}")
    if eps <= 0:
        raise ValueError("eps must be positive")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data
    lead = tuple(range(x.ndim - 1))

    def grad_fn(g):
        dxhat = g * gamma.data
        gx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _node(out, (x, gamma, beta), grad_fn)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of ``labels`` under ``softmax(logits)``.

    Accepts a single logit vector with an integer label, or a ``(B, C)``
    batch with ``B`` labels.
    """
    single = logits.ndim == 1
    lg = reshape(logits, (1, -1)) if single else logits
    lab = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    n, c = lg.shape
    if lab.shape != (n,):
        raise ShapeError(f"{lab.size} labels for {n} logit rows")
    if lab.min() < 0 or lab.max() >= c:
        raise ValueError(f"label out of range 0..{c - 1}: {lab.tolist()}")
    logp = log_softmax_lastdim(lg)
    picked = logp.data[np.arange(n), lab]

    def grad_fn(g):
        full = np.zeros((n, c))
        full[np.arange(n), lab] = -g / n
        return (full,)

    return _node(np.asarray(-picked.mean()), (logp,), grad_fn)


# ---------------------------------------------------------------------------
# spatial ops
# ---------------------------------------------------------------------------


def pad_edge(x: Tensor, pad: int) -> Tensor:
    """Replicate-pad the last two axes by ``pad`` on every side."""
    if pad == 0:
        return x
    h, w = x.shape[-2:]
    rows = np.clip(np.arange(-pad, h + pad), 0, h - 1)
    cols = np.clip(np.arange(-pad, w + pad), 0, w - 1)
    out = x.data[..., rows, :][..., cols]

    def grad_fn(g):
        gh = g[..., pad : pad + h, :].copy()
        gh[..., 0, :] += g[..., :pad, :].sum(axis=-2)
        gh[..., -1, :] += g[..., pad + h :, :].sum(axis=-2)
        gw = gh[..., pad : pad + w].copy()
        gw[..., 0] += gh[..., :pad].sum(axis=-1)
        gw[..., -1] += gh[..., pad + w :].sum(axis=-1)
        return (gw,)

    return _node(out, (x,), grad_fn)


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation of ``(B, Cin, H, W)`` with ``(Cout, Cin, k, k)``.

    Padding replicates edge pixels so a constant map stays constant.
    """
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1] or w.shape[2] != w.shape[3]:
        raise ShapeError(f"conv2d: input {x.shape} incompatible with kernel {w.shape}")
    xp = pad_edge(x, pad)
    bsz, cin, hp, wp = xp.shape
    cout, _, k, _ = w.shape
    if hp < k or wp < k:
        raise ShapeError(f"conv2d: padded input {xp.shape[-2:]} smaller than kernel {k}")
    ho = (hp - k) // stride + 1
    wo = (wp - k) // stride + 1
    _record_macs("conv2d", bsz * ho * wo * cout * cin * k * k)

    win = sliding_window_view(xp.data, (k, k), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(bsz * ho * wo, cin * k * k)
    wmat = w.data.reshape(cout, cin * k * k)
    out = cols @ wmat.T
    if b is not None:
        out = out + b.data
    out = out.reshape(bsz, ho, wo, cout).transpose(0, 3, 1, 2)
    parents = (xp, w) if b is None else (xp, w, b)

    def grad_fn(g):
        gt = g.transpose(0, 2, 3, 1).reshape(bsz * ho * wo, cout)
        gw = (gt.T @ cols).reshape(w.shape)
        dcols = (gt @ wmat).reshape(bsz, ho, wo, cin, k, k)
        gx = np.zeros(xp.shape)
        for i in range(k):
            for j in range(k):
                gx[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += dcols[
                    :, :, :, :, i, j
                ].transpose(0, 3, 1, 2)
        if b is None:
            return gx, gw
        return gx, gw, gt.sum(axis=0)

    return _node(out, parents, grad_fn)


def area_weights(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic ``(n_out, n_in)`` matrix averaging equal-length bins.

    Bins may split input cells; each cell is weighted by the fraction it
    overlaps, so the column sums are all ``n_out / n_in`` and the overall
    mean is preserved exactly.
    """
    m = np.zeros((n_out, n_in))
    step = n_in / n_out
    for i in range(n_out):
        lo, hi = i * step, (i + 1) * step
        for j in range(int(math.floor(lo)), min(n_in, int(math.ceil(hi)))):
            overlap = min(hi, j + 1) - max(lo, j)
            if overlap > 0:
                m[i, j] = overlap / step
    return m


def resample2d(x: Tensor, rows: np.ndarray, cols: np.ndarray) -> Tensor:
    """Apply fixed linear maps to the last two axes: ``rows @ x @ cols.T``.

    Used for pooling; deliberately not counted as multiply-accumulates.
    """
    if x.shape[-2] != rows.shape[1] or x.shape[-1] != cols.shape[1]:
        raise ShapeError(f"resample2d: map {x.shape[-2:]} vs weights {rows.shape}, {cols.shape}")
    out = np.matmul(np.matmul(rows, x.data), cols.T)
    return _node(out, (x,), lambda g: (np.matmul(np.matmul(rows.T, g), cols),))


# ---------------------------------------------------------------------------
# tape
# ---------------------------------------------------------------------------


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def _propagate(loss: Tensor, leaf: Callable[[Tensor, np.ndarray], None]) -> None:
    if loss.size != 1:
        raise GradientError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._consumed:
        raise GradientError("backward already ran on this graph; rebuild the forward pass first")
    if not loss.requires_grad:
        raise GradientError("loss does not depend on any tensor that requires grad")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topo_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            leaf(node, g)
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg
        node._backward = None
        node._parents = ()
    loss._consumed = True


def backward(loss: Tensor) -> None:
    """Accumulate ``d loss / d leaf`` into ``.grad`` of every tracked leaf.

    The tape is released afterwards; a second call on the same loss raises.
    """

    def acc(node: Tensor, g: np.ndarray) -> None:
        node.grad = g.copy() if node.grad is None else node.grad + g

    _propagate(loss, acc)


def grad(loss: Tensor, params: Sequence[Tensor]) -> list[np.ndarray]:
    """``d loss / d p`` for each of ``params`` without touching any ``.grad``.

    Leaves are never written, so several threads may differentiate separate
    graphs over the same parameters at once. Unreached params get zeros.
    """
    out: dict[int, np.ndarray] = {}
    _propagate(loss, lambda node, g: out.__setitem__(id(node), g.copy()))
    return [out.get(id(p), np.zeros_like(p.data)) for p in params]


# ---------------------------------------------------------------------------
# optimisation
# ---------------------------------------------------------------------------


def sgd_step(
    params: Iterable[Tensor],
    lr: float,
    momentum: float = 0.9,
    weight_decay: float = 5e-4,
    velocity: dict[int, np.ndarray] | None = None,
) -> None:
    """One SGD update ``p <- p - lr * v`` with ``v <- momentum * v + (g + wd * p)``.

    ``velocity`` carries the momentum buffers between calls (keyed by
    ``id(p)``); the first step seeds each buffer with the raw update.
    """
    params = list(params)
    for p in params:
        if p.grad is None:
            raise GradientError(f"parameter {p.name or p.shape} has no gradient")
    for p in params:
        g = p.grad + weight_decay * p.data if weight_decay else p.grad
        if momentum and velocity is not None:
            key = id(p)
            v = g if key not in velocity else momentum * velocity[key] + g
            velocity[key] = v
        else:
            v = g
        if lr:
            p.data = p.data - lr * v


class SGD:
    """Stateful wrapper around :func:`sgd_step` that owns momentum buffers."""

    def __init__(self, params: Iterable[Tensor], momentum: float = 0.9, weight_decay: float = 5e-4):
        self.params = list(params)
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity: dict[int, np.ndarray] = {}

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self, lr: float) -> None:
        sgd_step(self.params, lr, self.momentum, self.weight_decay, self.velocity)


# ---------------------------------------------------------------------------
# random numbers
# ---------------------------------------------------------------------------


class Rng:
    """Seeded stream backed by numpy's PCG64 bit generator.

    PCG64 output depends only on the seed, so streams are reproducible
    across platforms. :meth:`child` derives independent named substreams
    so adding a consumer never shifts another consumer's draws.
    """

    algorithm = "PCG64"

    def __init__(self, seed: int, _key: tuple[int, ...] = ()):
        if seed < 0 or seed >= 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = int(seed)
        self._key = _key
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=_key)))

    def child(self, tag: str) -> "Rng":
        digest = int.from_bytes(hashlib.blake2b(tag.encode("utf-8"), digest_size=8).digest(), "little")
        return Rng(self.seed, self._key + (digest,))

    def normal(self, shape, std: float = 1.0, mean: float = 0.0) -> np.ndarray:
        return self._gen.normal(mean, std, size=shape)

    def uniform(self, shape=None, low: float = 0.0, high: float = 1.0):
        return self._gen.uniform(low, high, size=shape)

    def integers(self, low: int, high: int, shape=None):
        return self._gen.integers(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)
