"""Minimal reverse-mode autodiff over numpy arrays.

Supports exactly the graphs the two estimators need: affine maps, ReLU /
tanh / sigmoid, (masked) softmax, broadcasting add/mul, concatenation,
reductions, a fused LSTM sequence op with a hand-written backward, and
sequence reversal for the bidirectional pass.  Gradients accumulate in
float64; a debug flag turns on finite checks after every op.
"""

from __future__ import annotations

import numpy as np

from ..errors import FiniteCheckFailure

FINITE_CHECKS = False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"

    # graph construction -------------------------------------------------

    @staticmethod
    def _result(data, parents, backward):
        if FINITE_CHECKS and not np.all(np.isfinite(data)):
            raise FiniteCheckFailure("non-finite values produced by an op")
        out = Tensor(data)
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() starts from a scalar loss")
        topo: list[Tensor] = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    # operators -----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to the original shape."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return Tensor._result(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return Tensor._result(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return Tensor._result(a.data * b.data, (a, b), backward)


def matmul(a, b) -> Tensor:
    """2-D or batched (leading dims on a) matrix product."""
    a, b = _as_tensor(a), _as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            gb = np.swapaxes(a.data, -1, -2) @ g
            b._accumulate(_unbroadcast(gb, b.shape))

    return Tensor._result(a.data @ b.data, (a, b), backward)


def relu(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * mask)

    return Tensor._result(a.data * mask, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    out = np.tanh(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * (1.0 - out**2))

    return Tensor._result(out, (a,), backward)


def _stable_sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    out = _stable_sigmoid(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * out * (1.0 - out))

    return Tensor._result(out, (a,), backward)


def softmax(a: Tensor, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Softmax along an axis; masked positions get zero probability."""
    a = _as_tensor(a)
    x = a.data
    if mask is not None:
        x = np.where(mask, x, -1e30)
    x = x - x.max(axis=axis, keepdims=True)
    e = np.exp(x)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        if a.requires_grad:
            dot = (g * out).sum(axis=axis, keepdims=True)
            grad = (g - dot) * out
            if mask is not None:
                grad = np.where(mask, grad, 0.0)
            a._accumulate(grad)

    return Tensor._result(out, (a,), backward)


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)

    def backward(g):
        if not a.requires_grad:
            return
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape).copy())

    return Tensor._result(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    return mul(reduce_sum(a), 1.0 / n)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            if t.requires_grad:
                t._accumulate(piece)

    return Tensor._result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def reshape(a: Tensor, shape) -> Tensor:
    a = _as_tensor(a)
    old = a.data.shape

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.reshape(old))

    return Tensor._result(a.data.reshape(shape), (a,), backward)


def mse(pred: Tensor, target) -> Tensor:
    """Mean squared error against a constant target."""
    diff = sub(pred, _as_tensor(target))
    return mean_all(mul(diff, diff))


def reverse_sequence(a: Tensor, lengths) -> Tensor:
    """Reverse each row's valid prefix along the time axis (axis 1)."""
    a = _as_tensor(a)
    lengths = np.asarray(lengths, dtype=int)

    def flip(arr):
        out = np.array(arr, copy=True)
        for b, L in enumerate(lengths):
            out[b, :L] = arr[b, :L][::-1]
        return out

    def backward(g):
        if a.requires_grad:
            a._accumulate(flip(g))

    return Tensor._result(flip(a.data), (a,), backward)


def lstm_sequence(
    x: Tensor, w: Tensor, b: Tensor, lengths=None, hidden: int | None = None
) -> Tensor:
    """Unidirectional LSTM over (B, T, Din) -> (B, T, H), fused.

    w is (Din + H, 4H) with gate order [i, f, g, o]; b is (4H,).  Frames
    beyond a row's length produce zero output and leave the state
    untouched, so padding never contaminates the recurrence.
    """
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    B, T, Din = x.data.shape
    H = w.data.shape[1] // 4 if hidden is None else hidden
    if w.data.shape != (Din + H, 4 * H):
        raise ValueError(f"lstm weight shape {w.data.shape} != {(Din + H, 4 * H)}")
    lengths = np.full(B, T) if lengths is None else np.asarray(lengths, dtype=int)

    h = np.zeros((B, H))
    c = np.zeros((B, H))
    outputs = np.zeros((B, T, H))
    cache = []
    wx, wh = w.data[:Din], w.data[Din:]
    for t in range(T):
        m = (t < lengths).astype(np.float64)[:, None]
        xt = x.data[:, t]
        z = xt @ wx + h @ wh + b.data
        i = _stable_sigmoid(z[:, :H])
        f = _stable_sigmoid(z[:, H : 2 * H])
        g = np.tanh(z[:, 2 * H : 3 * H])
        o = _stable_sigmoid(z[:, 3 * H :])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        cache.append((xt, h, c, i, f, g, o, c_new, tc, m))
        c = m * c_new + (1.0 - m) * c
        h = m * h_new + (1.0 - m) * h
        outputs[:, t] = m * h_new

    def backward(gout):
        dw = np.zeros_like(w.data)
        db = np.zeros_like(b.data)
        dx = np.zeros_like(x.data)
        gh = np.zeros((B, H))
        gc = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            xt, h_prev, c_prev, i, f, g, o, c_new, tc, m = cache[t]
            dh_new = m * (gh + gout[:, t])
            dc_new = m * gc + dh_new * o * (1.0 - tc**2)
            do = dh_new * tc
            df = dc_new * c_prev
            di = dc_new * g
            dg = dc_new * i
            dz = np.concatenate(
                [
                    di * i * (1.0 - i),
                    df * f * (1.0 - f),
                    dg * (1.0 - g**2),
                    do * o * (1.0 - o),
                ],
                axis=1,
            )
            dw[:Din] += xt.T @ dz
            dw[Din:] += h_prev.T @ dz
            db += dz.sum(axis=0)
            dx[:, t] = dz @ wx.T
            gh = dz @ wh.T + (1.0 - m) * gh
            gc = dc_new * f + (1.0 - m) * gc
        if x.requires_grad:
            x._accumulate(dx)
        if w.requires_grad:
            w._accumulate(dw)
        if b.requires_grad:
            b._accumulate(db)

    return Tensor._result(outputs, (x, w, b), backward)
