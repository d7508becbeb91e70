"""Minimal deterministic reverse-mode autodiff engine.

Everything is float64. A `Graph` is a define-by-run tape: each op records the
node needed to backpropagate through it, in creation order, and `backward`
replays the tape in exact reverse order. Matrix products accumulate over the
inner dimension in ascending index order (the same order a naive triple loop
uses), so results are bit-reproducible and independently checkable.
"""

from __future__ import annotations

import math

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class GraphStateError(RuntimeError):
    """Raised on invalid graph lifecycle use (e.g. backward called twice)."""


# ---------------------------------------------------------------------------
# ordered matmul kernels
#
# C[i, j] = sum_k A[i, k] * B[k, j], accumulated with k ascending. The numba
# kernels and the numpy fallback produce identical bits: np.add.reduce over
# axis 0 adds slices sequentially in index order.
# ---------------------------------------------------------------------------

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

if _HAVE_NUMBA:

    @njit(cache=True)
    def _mm2d_kernel(a, b):
        m, k = a.shape
        n = b.shape[1]
        out = np.zeros((m, n))
        for i in range(m):
            for j in range(n):
                acc = 0.0
                for kk in range(k):
                    acc += a[i, kk] * b[kk, j]
                out[i, j] = acc
        return out

    @njit(cache=True)
    def _mm3d_kernel(a, b):
        s, m, k = a.shape
        n = b.shape[2]
        out = np.zeros((s, m, n))
        for bi in range(s):
            for i in range(m):
                for j in range(n):
                    acc = 0.0
                    for kk in range(k):
                        acc += a[bi, i, kk] * b[bi, kk, j]
                    out[bi, i, j] = acc
        return out


_REDUCE_CHUNK = 1 << 22  # elements of the (k, m, n) product tensor per chunk


def _mm2d_reduce(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m, k = a.shape
    n = b.shape[1]
    out = np.empty((m, n))
    rows = max(1, _REDUCE_CHUNK // max(1, k * n))
    at = a.T  # (k, m)
    for r0 in range(0, m, rows):
        r1 = min(m, r0 + rows)
        prod = at[:, r0:r1, None] * b[:, None, :]  # (k, rows, n)
        out[r0:r1] = np.add.reduce(prod, axis=0)
    return out


def _mm3d_reduce(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    s = a.shape[0]
    out = np.empty((s, a.shape[1], b.shape[2]))
    for i in range(s):
        out[i] = _mm2d_reduce(a[i], b[i])
    return out


def ordered_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of raw arrays with ascending-k accumulation.

    Supports (m,k)@(k,n), stacked (s,m,k)@(s,k,n), and any leading-dim
    broadcast combination thereof.
    """
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} vs {b.shape}")
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.ndim == 2 and b.ndim == 2:
        return _mm2d_kernel(a, b) if _HAVE_NUMBA else _mm2d_reduce(a, b)
    if b.ndim == 2:
        # collapse leading dims of a into rows
        m2 = int(np.prod(a.shape[:-1]))
        flat = ordered_matmul(a.reshape(m2, a.shape[-1]), b)
        return flat.reshape(a.shape[:-1] + (b.shape[-1],))
    lead = np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    a3 = np.ascontiguousarray(np.broadcast_to(a, lead + a.shape[-2:]))
    b3 = np.ascontiguousarray(np.broadcast_to(b, lead + b.shape[-2:]))
    s = int(np.prod(lead)) if lead else 1
    a3 = a3.reshape(s, a.shape[-2], a.shape[-1])
    b3 = b3.reshape(s, b.shape[-2], b.shape[-1])
    out = _mm3d_kernel(a3, b3) if _HAVE_NUMBA else _mm3d_reduce(a3, b3)
    return out.reshape(lead + (a.shape[-2], b.shape[-1]))


def _swap_last2(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.swapaxes(x, -1, -2))


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` over axes that were broadcast to reach `grad.shape`."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# tensors
# ---------------------------------------------------------------------------


class Tensor:
    """N-dimensional float64 array participating in a differentiation graph.

    `data` is row-major and immutable by convention once it has entered a
    graph. `grad` is populated (accumulated additively) by Graph.backward for
    every tensor with requires_grad=True.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > 0 and not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

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
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


# ---------------------------------------------------------------------------
# graph
# ---------------------------------------------------------------------------


class _Node:
    __slots__ = ("out", "inputs", "backward_fn")

    def __init__(self, out, inputs, backward_fn):
        self.out = out
        self.inputs = inputs
        self.backward_fn = backward_fn


class Graph:
    """Define-by-run tape. Ops are methods; backward replays in reverse.

    A graph is single use: build it, call backward once, then discard. Ops
    only record a node when at least one input requires grad.
    """

    def __init__(self):
        self._nodes: list[_Node] = []
        self._backward_done = False

    # -- plumbing ----------------------------------------------------------

    def _make(self, data, inputs, backward_fn) -> Tensor:
        out = Tensor(data)
        if any(t.requires_grad for t in inputs):
            out.requires_grad = True
            self._nodes.append(_Node(out, inputs, backward_fn))
        return out

    @staticmethod
    def constant(data) -> Tensor:
        return Tensor(data, requires_grad=False)

    # -- arithmetic --------------------------------------------------------

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        data = a.data + b.data

        def bwd(g):
            return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

        return self._make(data, (a, b), bwd)

    def sub(self, a: Tensor, b: Tensor) -> Tensor:
        data = a.data - b.data

        def bwd(g):
            return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

        return self._make(data, (a, b), bwd)

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        data = a.data * b.data

        def bwd(g):
            return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

        return self._make(data, (a, b), bwd)

    def scale(self, a: Tensor, s: float) -> Tensor:
        s = float(s)

        def bwd(g):
            return (g * s,)

        return self._make(a.data * s, (a,), bwd)

    def add_scalar(self, a: Tensor, c: float) -> Tensor:
        def bwd(g):
            return (g,)

        return self._make(a.data + float(c), (a,), bwd)

    # -- shape manipulation -------------------------------------------------

    def reshape(self, a: Tensor, shape: tuple[int, ...]) -> Tensor:
        def bwd(g):
            return (g.reshape(a.shape),)

        return self._make(a.data.reshape(shape), (a,), bwd)

    def transpose_last2(self, a: Tensor) -> Tensor:
        def bwd(g):
            return (_swap_last2(g),)

        return self._make(_swap_last2(a.data), (a,), bwd)

    def permute(self, a: Tensor, axes: tuple[int, ...]) -> Tensor:
        inv = tuple(int(i) for i in np.argsort(axes))

        def bwd(g):
            return (np.ascontiguousarray(np.transpose(g, inv)),)

        return self._make(np.ascontiguousarray(np.transpose(a.data, axes)), (a,), bwd)

    def concat_last(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape[:-1] != b.shape[:-1]:
            raise ShapeError(f"concat_last leading dims disagree: {a.shape} vs {b.shape}")
        split = a.shape[-1]

        def bwd(g):
            return g[..., :split], g[..., split:]

        return self._make(np.concatenate([a.data, b.data], axis=-1), (a, b), bwd)

    def index1d(self, a: Tensor, i: int) -> Tensor:
        if a.ndim != 1:
            raise ShapeError(f"index1d needs a 1-D tensor, got shape {a.shape}")
        if not 0 <= i < a.shape[0]:
            raise IndexError(f"index {i} out of range for length {a.shape[0]}")

        def bwd(g):
            gi = np.zeros_like(a.data)
            gi[i] = g
            return (gi,)

        return self._make(np.asarray(a.data[i]), (a,), bwd)

    def embedding(self, table: Tensor, ids: np.ndarray) -> Tensor:
        """Gather rows of a (V, D) table by an integer id array."""
        ids = np.asarray(ids)
        v = table.shape[0]
        bad = (ids < 0) | (ids >= v)
        if bad.any():
            pos = tuple(int(x) for x in np.argwhere(bad)[0])
            raise IndexError(f"id {int(ids[pos])} at position {pos} out of range [0, {v})")

        def bwd(g):
            gt = np.zeros_like(table.data)
            np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
            return (gt,)

        return self._make(table.data[ids], (table,), bwd)

    # -- reductions ----------------------------------------------------------

    def sum(self, a: Tensor) -> Tensor:
        def bwd(g):
            return (np.full(a.shape, float(g)),)

        return self._make(np.asarray(np.sum(a.data)), (a,), bwd)

    def mean(self, a: Tensor) -> Tensor:
        n = a.data.size

        def bwd(g):
            return (np.full(a.shape, float(g) / n),)

        return self._make(np.asarray(np.sum(a.data) / n), (a,), bwd)

    # -- linear algebra ------------------------------------------------------

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        data = ordered_matmul(a.data, b.data)

        def bwd(g):
            ga = ordered_matmul(g, _swap_last2(b.data))
            gb = ordered_matmul(_swap_last2(a.data), g)
            return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

        return self._make(data, (a, b), bwd)

    def layer_norm(self, x: Tensor, gain: Tensor, bias: Tensor | None, eps: float = 1e-5) -> Tensor:
        """Normalize the last axis with biased variance, then scale and shift."""
        d = x.shape[-1] if x.ndim else 0
        if d == 0:
            raise ShapeError("layer_norm over an empty last axis")
        if eps <= 0:
            raise ValueError(f"layer_norm eps must be positive, got {eps}")
        mu = x.data.mean(axis=-1, keepdims=True)
        var = np.mean((x.data - mu) ** 2, axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (x.data - mu) * inv
        data = xhat * gain.data
        inputs: tuple[Tensor, ...]
        if bias is not None:
            data = data + bias.data
            inputs = (x, gain, bias)
        else:
            inputs = (x, gain)

        def bwd(g):
            dgain = np.sum(g * xhat, axis=tuple(range(g.ndim - 1)))
            dxhat = g * gain.data
            m1 = dxhat.mean(axis=-1, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
            dx = inv * (dxhat - m1 - xhat * m2)
            if bias is not None:
                dbias = np.sum(g, axis=tuple(range(g.ndim - 1)))
                return dx, dgain, dbias
            return dx, dgain

        return self._make(data, inputs, bwd)

    def softmax_rows(self, x: Tensor) -> Tensor:
        """Row-stabilized softmax over the last axis."""
        shifted = x.data - x.data.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        y = e / e.sum(axis=-1, keepdims=True)

        def bwd(g):
            dot = np.sum(g * y, axis=-1, keepdims=True)
            return (y * (g - dot),)

        return self._make(y, (x,), bwd)

    # -- nonlinearities --------------------------------------------------------

    def sigmoid(self, x: Tensor) -> Tensor:
        d = x.data
        y = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                     np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))

        def bwd(g):
            return (g * y * (1.0 - y),)

        return self._make(y, (x,), bwd)

    def softplus(self, x: Tensor) -> Tensor:
        d = x.data
        y = np.maximum(d, 0.0) + np.log1p(np.exp(-np.abs(d)))

        def bwd(g):
            sig = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                           np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
            return (g * sig,)

        return self._make(y, (x,), bwd)

    _GELU_C = math.sqrt(2.0 / math.pi)

    def gelu(self, x: Tensor) -> Tensor:
        """tanh-approximate gelu."""
        c = self._GELU_C
        d = x.data
        u = c * (d + 0.044715 * d ** 3)
        t = np.tanh(u)
        y = 0.5 * d * (1.0 + t)

        def bwd(g):
            du = c * (1.0 + 3 * 0.044715 * d ** 2)
            dy = 0.5 * (1.0 + t) + 0.5 * d * (1.0 - t ** 2) * du
            return (g * dy,)

        return self._make(y, (x,), bwd)

    _ACTIVATIONS = ("sigmoid", "softplus", "gelu")

    def activation(self, kind: str, x: Tensor) -> Tensor:
        if kind not in self._ACTIVATIONS:
            raise ValueError(f"unknown activation {kind!r}; expected one of {self._ACTIVATIONS}")
        return getattr(self, kind)(x)

    # -- loss -------------------------------------------------------------------

    def cross_entropy(self, logits: Tensor, targets: np.ndarray, ignore_index: int = -1) -> Tensor:
        """Mean NLL over non-ignored positions, computed via log-sum-exp."""
        targets = np.asarray(targets)
        if targets.shape != logits.shape[:-1]:
            raise ShapeError(
                f"targets shape {targets.shape} does not match logits leading dims {logits.shape[:-1]}")
        v = logits.shape[-1]
        keep = targets != ignore_index
        bad = keep & ((targets < 0) | (targets >= v))
        if bad.any():
            pos = tuple(int(x) for x in np.argwhere(bad)[0])
            raise IndexError(f"target {int(targets[pos])} at position {pos} out of range [0, {v})")
        count = int(keep.sum())
        if count == 0:
            raise ValueError("empty loss support: every position is ignored")
        m = logits.data.max(axis=-1, keepdims=True)
        lse = m + np.log(np.exp(logits.data - m).sum(axis=-1, keepdims=True))
        safe = np.where(keep, targets, 0)
        picked = np.take_along_axis(logits.data, safe[..., None], axis=-1)[..., 0]
        nll = (lse[..., 0] - picked) * keep
        data = np.asarray(nll.sum() / count)

        def bwd(g):
            probs = np.exp(logits.data - lse)
            onehot = np.zeros_like(logits.data)
            np.put_along_axis(onehot, safe[..., None], 1.0, axis=-1)
            dlogits = (probs - onehot) * keep[..., None] * (float(g) / count)
            return (dlogits,)

        return self._make(data, (logits,), bwd)

    # -- backward -------------------------------------------------------------

    def backward(self, loss: Tensor) -> None:
        """Populate .grad on every requires_grad tensor reachable from loss.

        The tape is traversed in exact reverse creation order, each node once.
        Calling backward a second time on the same graph is an error.
        """
        if self._backward_done:
            raise GraphStateError("backward already ran on this graph; build a new graph")
        if loss.shape != ():
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        self._backward_done = True

        pending: dict[int, np.ndarray] = {id(loss): np.asarray(1.0)}
        holders: dict[int, Tensor] = {id(loss): loss}
        for node in reversed(self._nodes):
            gout = pending.pop(id(node.out), None)
            holders.pop(id(node.out), None)
            if gout is None:
                continue
            if node.out.requires_grad:
                node.out.grad = gout if node.out.grad is None else node.out.grad + gout
            grads = node.backward_fn(gout)
            for t, g in zip(node.inputs, grads):
                if not t.requires_grad or g is None:
                    continue
                key = id(t)
                if key in pending:
                    pending[key] = pending[key] + g
                else:
                    pending[key] = g
                    holders[key] = t
        # whatever is left belongs to leaves (tensors not produced on this tape)
        for key, g in pending.items():
            t = holders[key]
            if t.requires_grad:
                t.grad = g if t.grad is None else t.grad + g
