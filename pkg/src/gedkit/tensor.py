"""Minimal reverse-mode autodiff over float64 numpy arrays.

Every op records its parents and a closure that pushes the output gradient
back to them. ``Tensor.backward`` walks the graph in reverse topological
order. Broadcasting is limited to numpy's rules; gradients are summed back to
each input's shape.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents if self.requires_grad else ()
        self._backward = _backward if self.requires_grad else None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node._parents:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                prev = grads.get(id(parent))
                grads[id(parent)] = pg if prev is None else prev + pg

    # operator sugar
    def __add__(self, o):
        return add(self, o)

    __radd__ = __add__

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        return div(self, o)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, o):
        return matmul(self, o)

    def __getitem__(self, idx):
        return index(self, idx)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _make(data, parents, backward):
    return Tensor(data, _parents=tuple(parents), _backward=backward)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def neg(a):
    return _make(-a.data, (a,), lambda g: (-g,))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if np.any(b.data == 0):
        raise ZeroDivisionError("element-wise division by zero")
    out = a.data / b.data
    return _make(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)),
    )


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    return _make(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def spmatmul(m, a):
    """Constant (sparse or dense) matrix times a tensor."""
    a = as_tensor(a)
    if m.shape[1] != a.shape[0]:
        raise ValueError(f"spmatmul shape mismatch {m.shape} @ {a.shape}")
    mt = m.T
    out = m @ a.data
    return _make(np.asarray(out), (a,), lambda g: (np.asarray(mt @ g),))


def transpose(a):
    return _make(a.data.T, (a,), lambda g: (g.T,))


def reshape(a, shape):
    old = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return _make(
        np.concatenate([t.data for t in tensors], axis=axis),
        tensors,
        lambda g: tuple(np.split(g, splits, axis=axis)),
    )


def index(a, idx):
    """Fancy/basic indexing; gradients scatter-add back."""
    out = a.data[idx]

    def back(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return _make(out, (a,), back)


def _scatter_rows(g, rows, n):
    """``out[rows[i]] += g[i]`` for all ``i``; ``out`` has ``n`` rows."""
    if rows.size and np.all(rows[1:] >= rows[:-1]):
        return _segment_reduce(np.add, g, rows, n, 0.0)
    flat = g.reshape(g.shape[0], -1)
    scatter = sp.csr_matrix((np.ones(rows.size), (rows, np.arange(rows.size))), shape=(n, rows.size))
    return np.asarray(scatter @ flat).reshape((n,) + g.shape[1:])


def take_rows(a, rows):
    rows = np.asarray(rows, dtype=np.int64)

    def back(g):
        return (_scatter_rows(g, rows, a.shape[0]),)

    return _make(a.data[rows], (a,), back)


def exp(a):
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def log(a):
    if np.any(a.data <= 0):
        raise ValueError("log of a non-positive value")
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def sigmoid(a):
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def relu(a):
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,))


def clip(a, lo, hi):
    mask = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (g * mask,))


def reduce_sum(a, axis=None, keepdims=False):
    shape = a.shape

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), back)


def mean(a, axis=None):
    n = a.data.size if axis is None else a.shape[axis]
    return reduce_sum(a, axis) * (1.0 / n)


def row_normalize(a):
    """Divide each row by its sum."""
    return div(a, reduce_sum(a, axis=1, keepdims=True))


def column_normalize(a):
    """Divide each column by its sum."""
    return div(a, reduce_sum(a, axis=0, keepdims=True))


def logsumexp(a, axis):
    m = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    s = e.sum(axis=axis, keepdims=True)
    out = np.log(s) + m
    soft = e / s

    def back(g):
        return (np.expand_dims(g, axis) * soft,)

    return _make(np.squeeze(out, axis=axis), (a,), back)


def _segment_reduce(ufunc, x, segments, num_segments, init):
    """``ufunc``-reduce rows of ``x`` per segment; empty segments hold ``init``."""
    out = np.full((num_segments,) + x.shape[1:], init, dtype=np.float64)
    if x.shape[0] == 0:
        return out
    if np.all(segments[1:] >= segments[:-1]):
        # sorted ids: one reduceat over the run starts
        starts = np.flatnonzero(np.r_[True, segments[1:] != segments[:-1]])
        out[segments[starts]] = ufunc.reduceat(x, starts, axis=0)
    else:
        ufunc.at(out, segments, x)
    return out


def segment_sum(a, segments, num_segments):
    """Sum rows of ``a`` into ``num_segments`` buckets given per-row segment ids."""
    segments = np.asarray(segments, dtype=np.int64)
    out = _segment_reduce(np.add, a.data, segments, num_segments, 0.0)
    return _make(out, (a,), lambda g: (g[segments],))


def segment_logsumexp(a, segments, num_segments):
    """Per-segment log-sum-exp over rows (columns kept)."""
    segments = np.asarray(segments, dtype=np.int64)
    m = _segment_reduce(np.maximum, a.data, segments, num_segments, -np.inf)
    e = np.exp(a.data - m[segments])
    s = _segment_reduce(np.add, e, segments, num_segments, 0.0)
    out = np.log(s) + m
    soft = e / s[segments]
    return _make(out, (a,), lambda g: (g[segments] * soft,))


def segment_max(a, segments, num_segments):
    """Per-segment maximum of a vector; the gradient goes to the first arg-max."""
    return _segment_extreme(a, segments, num_segments, np.maximum, -np.inf)


def segment_min(a, segments, num_segments):
    return _segment_extreme(a, segments, num_segments, np.minimum, np.inf)


def _segment_extreme(a, segments, num_segments, ufunc, init):
    segments = np.asarray(segments, dtype=np.int64)
    x = a.data
    out = _segment_reduce(ufunc, x, segments, num_segments, init)
    hit = np.flatnonzero(x == out[segments])
    # keep only the first hit in each segment
    _, first = np.unique(segments[hit], return_index=True)
    owner = hit[first]

    def back(g):
        full = np.zeros_like(x)
        full[owner] = g[segments[owner]]
        return (full,)

    return _make(out, (a,), back)


def stop_gradient(a):
    return Tensor(a.data.copy())


# parameters, initialization and checkpoints


def glorot(shape, rng, name=None) -> Tensor:
    fan_in, fan_out = shape[0], shape[-1]
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-a, a, size=shape), requires_grad=True, name=name)


def zeros(shape, name=None) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True, name=name)


# a small positive bias keeps ReLU inputs off the kink at 0 when the layer
# before is inactive and its output collapses to the bias
BIAS_INIT = 0.01


def bias(width, name=None) -> Tensor:
    return Tensor(np.full((1, width), BIAS_INIT), requires_grad=True, name=name)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def dumps_checkpoint(params: dict[str, Tensor], meta: dict | None = None) -> str:
    """Serialize ``{name: {"shape": [...], "values": [...]}}`` with 17 significant digits.

    ``meta`` (JSON-able model configuration) is stored under the reserved key ``"_meta"``.
    """
    parts = []
    if meta is not None:
        parts.append(json.dumps("_meta") + ": " + json.dumps(meta, sort_keys=True))
    for name in sorted(params):
        t = params[name]
        vals = ", ".join(_fmt(v) for v in t.data.ravel())
        parts.append(f'{json.dumps(name)}: {{"shape": {json.dumps(list(t.shape))}, "values": [{vals}]}}')
    return "{\n" + ",\n".join(parts) + "\n}\n"


def loads_checkpoint(text: str) -> tuple[dict[str, Tensor], dict | None]:
    raw = json.loads(text)
    meta = raw.pop("_meta", None)
    params = {}
    for name, entry in raw.items():
        arr = np.array(entry["values"], dtype=np.float64).reshape(entry["shape"])
        params[name] = Tensor(arr, requires_grad=True, name=name)
    return params, meta


# gradient checking


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    per_param: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


def gradient_check(f, params, step=1e-5, tolerance=1e-6, max_entries=None, rng=None, floor=1e-8) -> GradCheckReport:
    """Compare backward gradients of scalar ``f()`` with central differences.

    The relative error per entry is ``|a - n| / max(|a|, |n|, floor)``; the
    small floor only guards the 0/0 case of an exactly flat direction.
    """
    params = list(params.values()) if isinstance(params, dict) else list(params)
    for p in params:
        p.grad = None
    out = f()
    if out.data.size != 1:
        raise ValueError("gradient_check needs a scalar-valued function")
    out.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    worst = 0.0
    per = {}
    for pi, p in enumerate(params):
        flat = p.data.reshape(-1)
        idxs = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            rng = rng or np.random.default_rng(0)
            idxs = rng.choice(flat.size, size=max_entries, replace=False)
        perr = 0.0
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + step
            fp = float(f().data)
            flat[i] = orig - step
            fm = float(f().data)
            flat[i] = orig
            num = (fp - fm) / (2 * step)
            a = analytic[pi].reshape(-1)[i]
            err = abs(a - num) / max(abs(a), abs(num), floor)
            perr = max(perr, err)
        per[p.name or f"param{pi}"] = perr
        worst = max(worst, perr)
    return GradCheckReport(worst, tolerance, per)


# optimizer


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], state: AdamState, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=5e-4):
    """One Adam update with decoupled weight decay, in place."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        state.m[name], state.v[name] = m, v
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps) + lr * weight_decay * p.data
    return params, state


def sparse(m) -> sp.csr_matrix:
    return sp.csr_matrix(m)
