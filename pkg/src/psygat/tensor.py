"""Minimal reverse-mode autodiff on numpy arrays.

Training runs in float32; gradient verification runs in float64 because
central differences are unreliable at single precision. Broadcasting is
deliberately restricted to exact-shape and scalar operands; the few
row/column broadcasts the model needs have dedicated ops (add_bias,
scale_rows) so silent shape bugs cannot slip through.
"""

from __future__ import annotations

import numpy as np

LAYER_NORM_EPS = 1e-5


class ShapeError(ValueError):
    pass


class UsageError(RuntimeError):
    pass


class Tape:
    """Records tensors in creation order so intermediates can be freed."""

    _active = None

    def __init__(self):
        self.records = []

    def __enter__(self):
        self._prev = Tape._active
        Tape._active = self
        return self

    def __exit__(self, *exc):
        Tape._active = self._prev
        return False

    def clear(self):
        for t in self.records:
            t.grad = None
            t.parents = ()
            t._backward = None
        self.records.clear()


class Tensor:
    __slots__ = ("data", "grad", "parents", "_backward", "name", "_prev")

    def __init__(self, data, parents=(), backward=None, name=None, dtype=None):
        if dtype is not None:
            data = np.asarray(data, dtype=dtype)
        else:
            data = np.asarray(data)
            if data.dtype not in (np.float32, np.float64):
                data = data.astype(np.float32)
        self.data = data
        self.grad = None
        self.parents = parents
        self._backward = backward
        self.name = name
        if Tape._active is not None and parents:
            Tape._active.records.append(self)

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self):
        self.grad = None

    # -- operator sugar; rhs may be a python scalar --

    def __add__(self, other):
        return add(self, _wrap(other, self))

    def __radd__(self, other):
        return add(_wrap(other, self), self)

    def __sub__(self, other):
        return sub(self, _wrap(other, self))

    def __rsub__(self, other):
        return sub(_wrap(other, self), self)

    def __mul__(self, other):
        return mul(self, _wrap(other, self))

    def __rmul__(self, other):
        return mul(_wrap(other, self), self)

    def __neg__(self):
        return mul(self, _wrap(-1.0, self))

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, name={self.name})"


def _wrap(x, like):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


def _check_elementwise(a, b, opname):
    if a.shape == b.shape or a.data.ndim == 0 or b.data.ndim == 0:
        return
    raise ShapeError(f"{opname}: shapes {a.shape} and {b.shape} are neither equal nor scalar")


def _reduce_to(g, shape):
    # undo scalar broadcast
    if g.shape == shape:
        return g
    return np.asarray(g.sum(), dtype=g.dtype).reshape(shape)


def add(a, b):
    _check_elementwise(a, b, "add")
    out = Tensor(a.data + b.data, (a, b))

    def backward(g):
        a.accumulate(_reduce_to(g, a.data.shape))
        b.accumulate(_reduce_to(g, b.data.shape))

    out._backward = backward
    return out


def sub(a, b):
    _check_elementwise(a, b, "sub")
    out = Tensor(a.data - b.data, (a, b))

    def backward(g):
        a.accumulate(_reduce_to(g, a.data.shape))
        b.accumulate(_reduce_to(-g, b.data.shape))

    out._backward = backward
    return out


def mul(a, b):
    _check_elementwise(a, b, "mul")
    out = Tensor(a.data * b.data, (a, b))

    def backward(g):
        a.accumulate(_reduce_to(g * b.data, a.data.shape))
        b.accumulate(_reduce_to(g * a.data, b.data.shape))

    out._backward = backward
    return out


def matmul(a, b):
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = Tensor(a.data @ b.data, (a, b))

    def backward(g):
        a.accumulate(g @ b.data.T)
        b.accumulate(a.data.T @ g)

    out._backward = backward
    return out


def add_bias(x, b):
    """x: (n, d), b: (d,) row-broadcast add."""
    if x.data.ndim != 2 or b.data.ndim != 1 or x.shape[1] != b.shape[0]:
        raise ShapeError(f"add_bias: shapes {x.shape} and {b.shape}")
    out = Tensor(x.data + b.data[None, :], (x, b))

    def backward(g):
        x.accumulate(g)
        b.accumulate(g.sum(axis=0))

    out._backward = backward
    return out


def scale_rows(x, s):
    """x: (n, d) scaled row-wise by s: (n,)."""
    if x.data.ndim != 2 or s.data.ndim != 1 or x.shape[0] != s.shape[0]:
        raise ShapeError(f"scale_rows: shapes {x.shape} and {s.shape}")
    out = Tensor(x.data * s.data[:, None], (x, s))

    def backward(g):
        x.accumulate(g * s.data[:, None])
        s.accumulate((g * x.data).sum(axis=1))

    out._backward = backward
    return out


def leaky_relu(x, slope=0.2):
    out = Tensor(np.where(x.data > 0, x.data, slope * x.data), (x,))

    def backward(g):
        x.accumulate(g * np.where(x.data > 0, 1.0, slope).astype(x.dtype))

    out._backward = backward
    return out


def elu(x, alpha=1.0):
    neg = alpha * (np.exp(np.minimum(x.data, 0.0)) - 1.0)
    out = Tensor(np.where(x.data > 0, x.data, neg), (x,))

    def backward(g):
        x.accumulate(g * np.where(x.data > 0, 1.0, neg + alpha))

    out._backward = backward
    return out


def sigmoid(x):
    y = np.where(
        x.data >= 0,
        1.0 / (1.0 + np.exp(-np.abs(x.data))),
        np.exp(-np.abs(x.data)) / (1.0 + np.exp(-np.abs(x.data))),
    )
    out = Tensor(y, (x,))

    def backward(g):
        x.accumulate(g * y * (1.0 - y))

    out._backward = backward
    return out


def tanh(x):
    y = np.tanh(x.data)
    out = Tensor(y, (x,))

    def backward(g):
        x.accumulate(g * (1.0 - y * y))

    out._backward = backward
    return out


def softplus(x):
    # log(1 + e^x), overflow-safe
    y = np.maximum(x.data, 0.0) + np.log1p(np.exp(-np.abs(x.data)))
    out = Tensor(y, (x,))

    def backward(g):
        sig = np.where(
            x.data >= 0,
            1.0 / (1.0 + np.exp(-np.abs(x.data))),
            np.exp(-np.abs(x.data)) / (1.0 + np.exp(-np.abs(x.data))),
        )
        x.accumulate(g * sig)

    out._backward = backward
    return out


def log(x):
    out = Tensor(np.log(x.data), (x,))

    def backward(g):
        x.accumulate(g / x.data)

    out._backward = backward
    return out


def exp(x):
    y = np.exp(x.data)
    out = Tensor(y, (x,))

    def backward(g):
        x.accumulate(g * y)

    out._backward = backward
    return out


def pow_const(x, p):
    out = Tensor(x.data**p, (x,))

    def backward(g):
        x.accumulate(g * p * x.data ** (p - 1))

    out._backward = backward
    return out


def dropout(x, p, rng=None, train=False):
    if not (0.0 <= p < 1.0):
        raise UsageError(f"dropout probability {p} outside [0, 1)")
    if not train or p == 0.0:
        return x
    if rng is None:
        raise UsageError("dropout in train mode requires an rng")
    keep = (rng.random(x.shape) >= p).astype(x.dtype)
    scale = np.asarray(1.0 / (1.0 - p), dtype=x.dtype)
    out = Tensor(x.data * keep * scale, (x,))

    def backward(g):
        x.accumulate(g * keep * scale)

    out._backward = backward
    return out


def layer_norm(x, gamma, beta, eps=LAYER_NORM_EPS):
    """Per-row normalization of (n, d), then affine with gamma/beta of shape (d,)."""
    if x.data.ndim != 2:
        raise ShapeError(f"layer_norm expects a matrix, got {x.shape}")
    d = x.shape[1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm affine shapes {gamma.shape}/{beta.shape} vs d={d}")
    mu = x.data.mean(axis=1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor(xhat * gamma.data[None, :] + beta.data[None, :], (x, gamma, beta))

    def backward(g):
        gamma.accumulate((g * xhat).sum(axis=0))
        beta.accumulate(g.sum(axis=0))
        gx = g * gamma.data[None, :]
        # d/dx of (x - mu) * inv with mu, inv both functions of the row
        x.accumulate(
            inv * (gx - gx.mean(axis=1, keepdims=True) - xhat * (gx * xhat).mean(axis=1, keepdims=True))
        )

    out._backward = backward
    return out


def segment_softmax(logits, segment_ids):
    """Softmax over groups of a 1-d logits vector.

    segment_ids maps each entry to its group; entries of a group need not
    be contiguous. Max-subtraction per group keeps the exp stable.
    """
    if logits.data.ndim != 1:
        raise ShapeError(f"segment_softmax expects a vector, got {logits.shape}")
    seg = np.asarray(segment_ids, dtype=np.int64)
    n = logits.shape[0]
    if seg.shape != (n,):
        raise ShapeError(f"segment ids length {seg.shape} vs logits {logits.shape}")
    if n == 0:
        return Tensor(np.zeros(0, dtype=logits.dtype), (logits,), backward=lambda g: None)
    nseg = int(seg.max()) + 1
    mx = np.full(nseg, -np.inf, dtype=logits.dtype)
    np.maximum.at(mx, seg, logits.data)
    e = np.exp(logits.data - mx[seg])
    denom = np.zeros(nseg, dtype=logits.dtype)
    np.add.at(denom, seg, e)
    y = e / denom[seg]
    out = Tensor(y, (logits,))

    def backward(g):
        dot = np.zeros(nseg, dtype=logits.dtype)
        np.add.at(dot, seg, g * y)
        logits.accumulate(y * (g - dot[seg]))

    out._backward = backward
    return out


def segment_sum(x, segment_ids, num_segments):
    """Sum rows of (n, d) into (num_segments, d) buckets."""
    if x.data.ndim != 2:
        raise ShapeError(f"segment_sum expects a matrix, got {x.shape}")
    seg = np.asarray(segment_ids, dtype=np.int64)
    y = np.zeros((num_segments, x.shape[1]), dtype=x.dtype)
    np.add.at(y, seg, x.data)
    out = Tensor(y, (x,))

    def backward(g):
        x.accumulate(g[seg])

    out._backward = backward
    return out


def gather_rows(x, indices):
    idx = np.asarray(indices, dtype=np.int64)
    out = Tensor(x.data[idx], (x,))

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        x.accumulate(gx)

    out._backward = backward
    return out


def concat_cols(tensors):
    n = tensors[0].shape[0]
    for t in tensors:
        if t.data.ndim != 2 or t.shape[0] != n:
            raise ShapeError(f"concat_cols: row mismatch {[t.shape for t in tensors]}")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=1), tuple(tensors))
    offsets = np.cumsum([0] + [t.shape[1] for t in tensors])

    def backward(g):
        for t, a, b in zip(tensors, offsets[:-1], offsets[1:]):
            t.accumulate(g[:, a:b])

    out._backward = backward
    return out


def concat_rows(tensors):
    d = tensors[0].shape[1]
    for t in tensors:
        if t.data.ndim != 2 or t.shape[1] != d:
            raise ShapeError(f"concat_rows: col mismatch {[t.shape for t in tensors]}")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=0), tuple(tensors))
    offsets = np.cumsum([0] + [t.shape[0] for t in tensors])

    def backward(g):
        for t, a, b in zip(tensors, offsets[:-1], offsets[1:]):
            t.accumulate(g[a:b])

    out._backward = backward
    return out


def slice_cols(x, start, stop):
    out = Tensor(x.data[:, start:stop], (x,))

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[:, start:stop] = g
        x.accumulate(gx)

    out._backward = backward
    return out


def reshape(x, shape):
    out = Tensor(x.data.reshape(shape), (x,))

    def backward(g):
        x.accumulate(g.reshape(x.data.shape))

    out._backward = backward
    return out


def transpose(x):
    out = Tensor(x.data.T, (x,))

    def backward(g):
        x.accumulate(g.T)

    out._backward = backward
    return out


def tsum(x):
    out = Tensor(np.asarray(x.data.sum(), dtype=x.dtype), (x,))

    def backward(g):
        x.accumulate(np.full_like(x.data, g))

    out._backward = backward
    return out


def tmean(x):
    n = x.data.size
    out = Tensor(np.asarray(x.data.mean(), dtype=x.dtype), (x,))

    def backward(g):
        x.accumulate(np.full_like(x.data, g / n))

    out._backward = backward
    return out


def l2_normalize_rows(x, eps=1e-12):
    """Row-wise x / ||x||; rows with near-zero norm pass through scaled by 1/eps-guarded norm."""
    if x.data.ndim != 2:
        raise ShapeError(f"l2_normalize_rows expects a matrix, got {x.shape}")
    norm = np.sqrt((x.data * x.data).sum(axis=1, keepdims=True) + eps)
    y = x.data / norm
    out = Tensor(y, (x,))

    def backward(g):
        dot = (g * y).sum(axis=1, keepdims=True)
        x.accumulate((g - y * dot) / norm)

    out._backward = backward
    return out


def backward(loss):
    """Reverse accumulation from a scalar loss; grads add until zeroed."""
    if loss.data.ndim != 0 and loss.data.size != 1:
        raise UsageError(f"backward requires a scalar loss, got shape {loss.shape}")
    topo = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in visited:
                stack.append((p, False))
    loss.accumulate(np.ones_like(loss.data))
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node.grad)


def grad_check(f, params, eps=1e-4, max_coords=None, rng=None):
    """Max relative error between analytic and central-difference gradients.

    f is a zero-argument callable returning a scalar Tensor and must be
    deterministic. params is a list of leaf Tensors (use float64 data).
    """
    for p in params:
        p.zero_grad()
    loss = f()
    backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    worst = 0.0
    for p, an in zip(params, analytic):
        flat = p.data.reshape(-1)
        coords = range(flat.size)
        if max_coords is not None and flat.size > max_coords:
            r = rng if rng is not None else np.random.default_rng(0)
            coords = r.choice(flat.size, size=max_coords, replace=False)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            hi = f().item()
            flat[i] = orig - eps
            lo = f().item()
            flat[i] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise FloatingPointError(f"non-finite loss at coordinate {i} of {p.name or p.shape}")
            fd = (hi - lo) / (2 * eps)
            a = an.reshape(-1)[i]
            err = abs(a - fd) / max(abs(a), abs(fd), 1e-8)
            worst = max(worst, err)
    return worst
