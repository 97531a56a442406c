"""Dense-tensor math with reverse-mode gradients.

All values are 64-bit floats. Gradients are recorded on a define-by-run
tape: every operation executed while a `Tape` is active appends its output
node, and `backward` walks the node list in exact reverse execution order.
Repeated backward calls without a grad reset accumulate.

A Tensor/Tape pair is confined to a single thread; the active tape is
thread-local, so independent model replicas on separate threads are safe.
"""

from __future__ import annotations

import math
import threading

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "ShapeError",
    "add",
    "sub",
    "mul",
    "div",
    "matmul",
    "transpose",
    "reshape",
    "activation",
    "sigmoid_values",
    "softmax_rows",
    "masked_softmax_rows",
    "concat",
    "slice_last",
    "gather_rows",
    "sum_all",
    "sum_axis",
    "bce",
    "bce_elementwise",
    "dropout",
    "masked_max",
    "backward",
    "finite_diff_check",
]

BCE_EPS = 1e-12
_GELU_C = math.sqrt(2.0 / math.pi)

_local = threading.local()


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


def _active_tape():
    return getattr(_local, "tape", None)


class Tensor:
    """Row-major float64 buffer with an optional gradient buffer.

    `grad` exists iff the tensor participates in differentiation. Tensors
    produced by operations while a tape is active carry backward closures;
    leaf tensors are created directly (requires_grad=True for parameters).
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self.name = name
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data)

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0.0

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of executed operations for one forward pass.

    Rebuilt per forward pass; `backward` visits nodes in reverse execution
    order, so every node's consumers run before the node itself.
    """

    def __init__(self):
        self._nodes = []

    def __enter__(self):
        if _active_tape() is not None:
            raise RuntimeError("a Tape is already active on this thread")
        _local.tape = self
        return self

    def __exit__(self, *exc):
        _local.tape = None
        return False

    def backward(self, loss):
        if loss.data.shape != ():
            raise ShapeError(f"backward requires a scalar loss, got shape {loss.data.shape}")
        if loss.grad is None:
            raise ValueError("loss does not participate in differentiation")
        if not any(n is loss for n in self._nodes):
            raise ValueError("loss is not on this tape")
        loss.grad += 1.0
        for node in reversed(self._nodes):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def reset(self):
        self._nodes.clear()


def backward(loss):
    """Run reverse-mode accumulation from a scalar loss on the active tape."""
    tape = _active_tape()
    if tape is None:
        raise RuntimeError("no active tape")
    tape.backward(loss)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward_fn):
    requires = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=requires)
    tape = _active_tape()
    if requires and tape is not None:
        out._parents = tuple(parents)
        out._backward = backward_fn(out)
        tape._nodes.append(out)
    return out


def _unbroadcast(g, shape):
    """Sum a broadcast gradient back down to the original operand shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, (gs, ss) in enumerate(zip(g.shape, shape)):
        if ss == 1 and gs != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _accum(t, g):
    if t.grad is not None:
        t.grad += _unbroadcast(g, t.data.shape)


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)

    def bw(out):
        def run(g):
            _accum(a, g)
            _accum(b, g)
        return run

    return _make(a.data + b.data, (a, b), bw)


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)

    def bw(out):
        def run(g):
            _accum(a, g)
            _accum(b, -g)
        return run

    return _make(a.data - b.data, (a, b), bw)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)

    def bw(out):
        def run(g):
            _accum(a, g * b.data)
            _accum(b, g * a.data)
        return run

    return _make(a.data * b.data, (a, b), bw)


def div(a, b):
    a, b = _as_tensor(a), _as_tensor(b)

    def bw(out):
        def run(g):
            _accum(a, g / b.data)
            _accum(b, -g * a.data / (b.data * b.data))
        return run

    return _make(a.data / b.data, (a, b), bw)


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.data.shape} x {b.data.shape}")

    def bw(out):
        def run(g):
            _accum(a, g @ b.data.T)
            _accum(b, a.data.T @ g)
        return run

    return _make(a.data @ b.data, (a, b), bw)


def transpose(a):
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {a.data.shape}")

    def bw(out):
        def run(g):
            _accum(a, g.T)
        return run

    return _make(a.data.T.copy(), (a,), bw)


def reshape(a, shape):
    a = _as_tensor(a)
    old = a.data.shape

    def bw(out):
        def run(g):
            _accum(a, g.reshape(old))
        return run

    return _make(a.data.reshape(shape), (a,), bw)


def sigmoid_values(v):
    """Overflow-free logistic: exp is only taken of non-positive values."""
    v = np.asarray(v, dtype=np.float64)
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def activation(x, kind):
    """Elementwise nonlinearity with matching analytic derivative.

    gelu uses the tanh approximation 0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3)))
    so every run agrees bit-for-bit. softplus backs the positivity
    reparameterization of trainable edge weights.
    """
    x = _as_tensor(x)
    v = x.data
    if kind == "tanh":
        y = np.tanh(v)
        dydx = 1.0 - y * y
    elif kind == "sigmoid":
        y = sigmoid_values(v)
        dydx = y * (1.0 - y)
    elif kind == "relu":
        y = np.maximum(v, 0.0)
        dydx = (v > 0.0).astype(np.float64)
    elif kind == "gelu":
        u = _GELU_C * (v + 0.044715 * v ** 3)
        t = np.tanh(u)
        y = 0.5 * v * (1.0 + t)
        dydx = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * v * v)
    elif kind == "softplus":
        y = np.logaddexp(0.0, v)
        dydx = sigmoid_values(v)
    else:
        raise ValueError(f"unknown activation kind: {kind!r}")

    def bw(out):
        def run(g):
            _accum(x, g * dydx)
        return run

    return _make(y, (x,), bw)


def softmax_rows(x):
    """Row-wise softmax, stabilized by row-max subtraction."""
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeError(f"softmax_rows expects a matrix, got shape {x.data.shape}")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def bw(out):
        def run(g):
            gy = g * y
            _accum(x, gy - y * gy.sum(axis=1, keepdims=True))
        return run

    return _make(y, (x,), bw)


def masked_softmax_rows(x, mask):
    """Softmax over valid row entries only; masked positions are exact zeros.

    mask is a constant {0,1} array of the same shape. Every row must have at
    least one valid entry.
    """
    x = _as_tensor(x)
    m = np.asarray(mask, dtype=np.float64)
    if m.shape != x.data.shape:
        raise ShapeError(f"mask shape {m.shape} does not match input {x.data.shape}")
    if np.any(m.sum(axis=1) == 0):
        raise ValueError("masked_softmax_rows: a row has no valid entries")
    neg = np.where(m > 0, x.data, -np.inf)
    shifted = neg - neg.max(axis=1, keepdims=True)
    e = np.where(m > 0, np.exp(shifted), 0.0)
    y = e / e.sum(axis=1, keepdims=True)

    def bw(out):
        def run(g):
            gy = g * y
            _accum(x, gy - y * gy.sum(axis=1, keepdims=True))
        return run

    return _make(y, (x,), bw)


def concat(parts):
    """Concatenate along the last dimension; backward splits by offsets."""
    if not parts:
        raise ShapeError("concat of an empty list")
    parts = [_as_tensor(p) for p in parts]
    lead = parts[0].data.shape[:-1]
    for p in parts:
        if p.data.shape[:-1] != lead:
            raise ShapeError(
                f"concat shape mismatch: {p.data.shape} vs leading dims {lead}"
            )
    sizes = [p.data.shape[-1] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bw(out):
        def run(g):
            for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
                _accum(p, g[..., lo:hi])
        return run

    return _make(np.concatenate([p.data for p in parts], axis=-1), tuple(parts), bw)


def slice_last(x, start, stop):
    """Slice along the last dimension."""
    x = _as_tensor(x)

    def bw(out):
        def run(g):
            if x.grad is not None:
                x.grad[..., start:stop] += g
        return run

    return _make(x.data[..., start:stop].copy(), (x,), bw)


def gather_rows(emb, ids):
    """Select rows of a matrix by integer index; backward scatter-adds."""
    emb = _as_tensor(emb)
    idx = np.asarray(ids, dtype=np.intp)

    def bw(out):
        def run(g):
            if emb.grad is not None:
                np.add.at(emb.grad, idx, g)
        return run

    return _make(emb.data[idx], (emb,), bw)


def sum_all(x):
    x = _as_tensor(x)

    def bw(out):
        def run(g):
            _accum(x, np.broadcast_to(g, x.data.shape))
        return run

    return _make(np.float64(x.data.sum()), (x,), bw)


def sum_axis(x, axis, keepdims=True):
    x = _as_tensor(x)

    def bw(out):
        def run(g):
            gg = g if keepdims else np.expand_dims(g, axis)
            _accum(x, np.broadcast_to(gg, x.data.shape))
        return run

    return _make(x.data.sum(axis=axis, keepdims=keepdims), (x,), bw)


def bce_elementwise(p, y):
    """Per-element binary cross-entropy against {0,1} targets.

    Probabilities are clamped to [eps, 1-eps] with eps=1e-12; gradient is
    zero where the clamp was active.
    """
    p = _as_tensor(p)
    t = np.asarray(y, dtype=np.float64)
    if t.shape != p.data.shape:
        raise ShapeError(f"bce target shape {t.shape} does not match {p.data.shape}")
    pc = np.clip(p.data, BCE_EPS, 1.0 - BCE_EPS)
    inside = (p.data > BCE_EPS) & (p.data < 1.0 - BCE_EPS)
    loss = -(t * np.log(pc) + (1.0 - t) * np.log(1.0 - pc))

    def bw(out):
        def run(g):
            _accum(p, g * inside * (pc - t) / (pc * (1.0 - pc)))
        return run

    return _make(loss, (p,), bw)


def bce(probabilities, targets):
    """Summed binary cross-entropy, as a scalar."""
    return sum_all(bce_elementwise(probabilities, targets))


def dropout(x, rate, mode, rng):
    """Inverted dropout; identity in eval mode or at rate 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown dropout mode: {mode!r}")
    x = _as_tensor(x)
    if mode == "eval" or rate == 0.0:
        def bw_id(out):
            def run(g):
                _accum(x, g)
            return run
        return _make(x.data.copy(), (x,), bw_id)

    mask = (rng.random(x.data.shape) >= rate) / (1.0 - rate)

    def bw(out):
        def run(g):
            _accum(x, g * mask)
        return run

    return _make(x.data * mask, (x,), bw)


def masked_max(parts, valid):
    """Elementwise max over a list of equal-shape [B, F] tensors.

    valid is a {0,1} array of shape [B, len(parts)]; invalid slots never win.
    Gradient flows to the winning slot only (first winner on exact ties).
    """
    parts = [_as_tensor(p) for p in parts]
    v = np.asarray(valid, dtype=bool)
    if v.shape != (parts[0].data.shape[0], len(parts)):
        raise ShapeError(f"valid mask shape {v.shape} does not match parts")
    if np.any(~v.any(axis=1)):
        raise ValueError("masked_max: a batch row has no valid slot")
    stack = np.stack([p.data for p in parts])  # [P, B, F]
    stack = np.where(v.T[:, :, None], stack, -np.inf)
    winner = stack.argmax(axis=0)  # [B, F]
    out_data = np.take_along_axis(stack, winner[None], axis=0)[0]

    def bw(out):
        def run(g):
            for i, p in enumerate(parts):
                if p.grad is not None:
                    p.grad += g * (winner == i)
        return run

    return _make(out_data, tuple(parts), bw)


def finite_diff_check(f, params, h=1e-5):
    """Compare analytic gradients of a scalar function to central differences.

    f takes no arguments, reads `params` (name -> Tensor), and returns a
    scalar Tensor. It must be deterministic (dropout in eval mode); this is
    verified by evaluating twice. Returns {name: max relative error} plus a
    "worst" entry; the relative-error denominator is max(|a|, |b|, 1e-8).
    """
    if h <= 0:
        raise ValueError("h must be positive")
    v1 = float(f().data)
    v2 = float(f().data)
    if v1 != v2:
        raise ValueError("finite_diff_check: f is not deterministic")

    for p in params.values():
        p.zero_grad()
    with Tape() as tape:
        loss = f()
        tape.backward(loss)

    report = {}
    worst = 0.0
    for name, p in params.items():
        analytic = p.grad.copy()
        numeric = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        nflat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f().data)
            flat[i] = orig - h
            fm = float(f().data)
            flat[i] = orig
            nflat[i] = (fp - fm) / (2.0 * h)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
        err = float(np.max(np.abs(analytic - numeric) / denom)) if flat.size else 0.0
        report[name] = err
        worst = max(worst, err)
    report["worst"] = worst
    return report
