"""Minimal reverse-mode autodiff over double-precision numpy arrays.

Scope is exactly what the network needs: dense 1-D/2-D tensors, a fixed op
set with hand-written gradients, deterministic accumulation order, and a
central-difference checker. No broadcasting beyond (matrix, row-vector)
bias-style ops.
"""

from __future__ import annotations

import itertools
from contextlib import contextmanager

import numpy as np

_seq = itertools.count()

CHECKED = True      # validate finiteness at op boundaries
_NO_GRAD = False

BCE_EPS = 1e-7


class SubstrateError(ValueError):
    pass


@contextmanager
def no_grad():
    global _NO_GRAD
    prev = _NO_GRAD
    _NO_GRAD = True
    try:
        yield
    finally:
        _NO_GRAD = prev


class Tensor:
    __slots__ = ("values", "grad", "requires_grad", "_parents", "_bwd", "_seq", "_done")

    def __init__(self, values, requires_grad=False, parents=(), bwd=None):
        self.values = np.asarray(values, dtype=np.float64)
        if CHECKED and not np.all(np.isfinite(self.values)):
            raise SubstrateError("non-finite values")
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = tuple(parents)
        self._bwd = bwd
        self._seq = next(_seq)
        self._done = False

    @property
    def shape(self):
        return self.values.shape

    def item(self) -> float:
        return float(self.values.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, requires_grad={self.requires_grad})"


def constant(values) -> Tensor:
    return Tensor(values, requires_grad=False)


def leaf(values, requires_grad=True) -> Tensor:
    return Tensor(values, requires_grad=requires_grad)


def _make(values, parents, bwd) -> Tensor:
    req = any(p.requires_grad for p in parents)
    if _NO_GRAD or not req:
        return Tensor(values, requires_grad=req and not _NO_GRAD)
    return Tensor(values, requires_grad=True, parents=parents, bwd=bwd)


def _acc(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.values)
    t.grad += g


# ---------------------------------------------------------------------------
# graph walk


def _topo(root: Tensor) -> list[Tensor]:
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in reversed(node._parents):
            if id(p) not in seen:
                stack.append((p, False))
    return topo


def backward(root: Tensor):
    """Reverse-topological gradient accumulation from a scalar root."""
    if root.values.size != 1:
        raise SubstrateError("backward root must be scalar")
    if root._done:
        raise SubstrateError("backward called twice without reset")
    topo = _topo(root)
    root.grad = np.ones_like(root.values)
    for node in reversed(topo):
        if node._bwd is not None and node.grad is not None:
            node._bwd(node.grad)
    root._done = True


def reset_graph(root: Tensor):
    """Clear gradients and the done flag everywhere reachable from root."""
    for node in _topo(root):
        node.grad = None
        node._done = False


# ---------------------------------------------------------------------------
# ops


def _check2d(t: Tensor, name: str):
    if t.values.ndim != 2:
        raise SubstrateError(f"{name} expects a 2-D tensor, got shape {t.shape}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _check2d(a, "matmul")
    _check2d(b, "matmul")
    if a.shape[1] != b.shape[0]:
        raise SubstrateError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    out = a.values @ b.values

    def bwd(g):
        _acc(a, g @ b.values.T)
        _acc(b, a.values.T @ g)

    return _make(out, (a, b), bwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise add; also (matrix, row-vector) bias addition."""
    if a.shape == b.shape:
        def bwd(g):
            _acc(a, g)
            _acc(b, g)
        return _make(a.values + b.values, (a, b), bwd)
    if a.values.ndim == 2 and b.values.ndim == 1 and a.shape[1] == b.shape[0]:
        def bwd(g):
            _acc(a, g)
            _acc(b, g.sum(axis=0))
        return _make(a.values + b.values[None, :], (a, b), bwd)
    raise SubstrateError(f"add shape mismatch {a.shape} + {b.shape}")


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise SubstrateError(f"mul shape mismatch {a.shape} * {b.shape}")

    def bwd(g):
        _acc(a, g * b.values)
        _acc(b, g * a.values)

    return _make(a.values * b.values, (a, b), bwd)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def bwd(g):
        _acc(a, g * c)

    return _make(a.values * c, (a,), bwd)


def scale_rows(mat: Tensor, vec: Tensor) -> Tensor:
    """Row i of mat multiplied by vec[i]."""
    _check2d(mat, "scale_rows")
    if vec.values.ndim != 1 or vec.shape[0] != mat.shape[0]:
        raise SubstrateError(f"scale_rows shape mismatch {mat.shape} x {vec.shape}")

    def bwd(g):
        _acc(mat, g * vec.values[:, None])
        _acc(vec, (g * mat.values).sum(axis=1))

    return _make(mat.values * vec.values[:, None], (mat, vec), bwd)


def outer_const(col: np.ndarray, p: Tensor) -> Tensor:
    """col[:, None] * p[None, :] with a constant column vector."""
    col = np.asarray(col, dtype=np.float64)
    if p.values.ndim != 1 or col.ndim != 1:
        raise SubstrateError("outer_const expects 1-D inputs")

    def bwd(g):
        _acc(p, (g * col[:, None]).sum(axis=0))

    return _make(col[:, None] * p.values[None, :], (p,), bwd)


def concat(parts: list[Tensor], axis: int = 0) -> Tensor:
    if not parts:
        raise SubstrateError("concat of nothing")
    sizes = [p.shape[axis] for p in parts]
    offs = np.cumsum([0] + sizes)

    def bwd(g):
        for i, p in enumerate(parts):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offs[i], offs[i + 1])
            _acc(p, g[tuple(sl)])

    return _make(np.concatenate([p.values for p in parts], axis=axis), tuple(parts), bwd)


def gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    _check2d(x, "gather_rows")
    idx = np.asarray(idx, dtype=np.int64)

    def bwd(g):
        if x.requires_grad:
            buf = np.zeros_like(x.values)
            np.add.at(buf, idx, g)
            _acc(x, buf)

    return _make(x.values[idx], (x,), bwd)


def scatter_rows(rows: Tensor, idx: np.ndarray, n: int) -> Tensor:
    """Place rows at unique indices of an (n, d) zero matrix."""
    _check2d(rows, "scatter_rows")
    idx = np.asarray(idx, dtype=np.int64)
    if len(np.unique(idx)) != len(idx):
        raise SubstrateError("scatter_rows requires unique indices")
    vals = np.zeros((n, rows.shape[1]))
    vals[idx] = rows.values

    def bwd(g):
        _acc(rows, g[idx])

    return _make(vals, (rows,), bwd)


def rowsum(x: Tensor) -> Tensor:
    _check2d(x, "rowsum")

    def bwd(g):
        _acc(x, np.repeat(g[:, None], x.shape[1], axis=1))

    return _make(x.values.sum(axis=1), (x,), bwd)


def matvec(mat: Tensor, vec: Tensor) -> Tensor:
    _check2d(mat, "matvec")
    if vec.values.ndim != 1 or vec.shape[0] != mat.shape[1]:
        raise SubstrateError(f"matvec shape mismatch {mat.shape} . {vec.shape}")

    def bwd(g):
        _acc(mat, np.outer(g, vec.values))
        _acc(vec, mat.values.T @ g)

    return _make(mat.values @ vec.values, (mat, vec), bwd)


def tsum(x: Tensor) -> Tensor:
    def bwd(g):
        _acc(x, np.full_like(x.values, float(g)))

    return _make(x.values.sum(), (x,), bwd)


def tmean(x: Tensor) -> Tensor:
    n = x.values.size

    def bwd(g):
        _acc(x, np.full_like(x.values, float(g) / n))

    return _make(x.values.mean(), (x,), bwd)


def segment_sum(x: Tensor, seg: np.ndarray, n_seg: int) -> Tensor:
    _check2d(x, "segment_sum")
    seg = np.asarray(seg, dtype=np.int64)
    if len(seg) != x.shape[0]:
        raise SubstrateError("segment_sum: segment vector length mismatch")
    vals = np.zeros((n_seg, x.shape[1]))
    np.add.at(vals, seg, x.values)

    def bwd(g):
        _acc(x, g[seg])

    return _make(vals, (x,), bwd)


def segment_softmax(scores: Tensor, seg: np.ndarray, n_seg: int) -> Tensor:
    """Softmax normalized within each segment; every segment must be non-empty."""
    if scores.values.ndim != 1:
        raise SubstrateError("segment_softmax expects a 1-D score vector")
    seg = np.asarray(seg, dtype=np.int64)
    if len(seg) != scores.shape[0]:
        raise SubstrateError("segment_softmax: segment vector length mismatch")
    counts = np.bincount(seg, minlength=n_seg)
    if n_seg > 0 and counts.min() == 0:
        raise SubstrateError("segment_softmax: empty segment")
    mx = np.full(n_seg, -np.inf)
    np.maximum.at(mx, seg, scores.values)
    ex = np.exp(scores.values - mx[seg])
    denom = np.zeros(n_seg)
    np.add.at(denom, seg, ex)
    alpha = ex / denom[seg]

    def bwd(g):
        dot = np.zeros(n_seg)
        np.add.at(dot, seg, alpha * g)
        _acc(scores, alpha * (g - dot[seg]))

    return _make(alpha, (scores,), bwd)


def relu(x: Tensor) -> Tensor:
    mask = x.values > 0

    def bwd(g):
        _acc(x, g * mask)

    return _make(np.where(mask, x.values, 0.0), (x,), bwd)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    mask = x.values > 0

    def bwd(g):
        _acc(x, g * np.where(mask, 1.0, slope))

    return _make(np.where(mask, x.values, slope * x.values), (x,), bwd)


def sigmoid(x: Tensor) -> Tensor:
    s = 1.0 / (1.0 + np.exp(-x.values))

    def bwd(g):
        _acc(x, g * s * (1.0 - s))

    return _make(s, (x,), bwd)


def softplus(x: Tensor) -> Tensor:
    v = np.maximum(x.values, 0.0) + np.log1p(np.exp(-np.abs(x.values)))
    s = 1.0 / (1.0 + np.exp(-x.values))

    def bwd(g):
        _acc(x, g * s)

    return _make(v, (x,), bwd)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-6) -> Tensor:
    """Row-wise normalization with a per-feature affine map."""
    _check2d(x, "layer_norm")
    d = x.shape[1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise SubstrateError("layer_norm affine shape mismatch")
    mu = x.values.mean(axis=1, keepdims=True)
    var = x.values.var(axis=1, keepdims=True)
    std = np.sqrt(var + eps)
    xhat = (x.values - mu) / std

    def bwd(g):
        _acc(gain, (g * xhat).sum(axis=0))
        _acc(bias, g.sum(axis=0))
        if x.requires_grad:
            gx = g * gain.values[None, :]
            m1 = gx.mean(axis=1, keepdims=True)
            m2 = (gx * xhat).mean(axis=1, keepdims=True)
            _acc(x, (gx - m1 - xhat * m2) / std)

    return _make(xhat * gain.values[None, :] + bias.values[None, :], (x, gain, bias), bwd)


def l1_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean absolute error; subgradient at 0 is 0 by convention."""
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise SubstrateError(f"l1_loss shape mismatch {pred.shape} vs {target.shape}")
    diff = pred.values - target
    n = max(1, diff.size)

    def bwd(g):
        _acc(pred, float(g) * np.sign(diff) / n)

    return _make(np.abs(diff).mean() if diff.size else 0.0, (pred,), bwd)


def bce_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean binary cross-entropy; predictions clamped to [eps, 1-eps]."""
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise SubstrateError(f"bce_loss shape mismatch {pred.shape} vs {target.shape}")
    p = np.clip(pred.values, BCE_EPS, 1.0 - BCE_EPS)
    inside = (pred.values > BCE_EPS) & (pred.values < 1.0 - BCE_EPS)
    n = max(1, p.size)
    val = -(target * np.log(p) + (1.0 - target) * np.log1p(-p)).mean() if p.size else 0.0

    def bwd(g):
        _acc(pred, float(g) * inside * (p - target) / (p * (1.0 - p)) / n)

    return _make(val, (pred,), bwd)


def blend_rows(a: Tensor, b: Tensor, take_a: np.ndarray) -> Tensor:
    """Row-wise select: rows where take_a is True come from a, else from b."""
    _check2d(a, "blend_rows")
    if a.shape != b.shape:
        raise SubstrateError(f"blend_rows shape mismatch {a.shape} vs {b.shape}")
    take_a = np.asarray(take_a, dtype=bool)
    if take_a.shape != (a.shape[0],):
        raise SubstrateError("blend_rows mask shape mismatch")
    m = take_a[:, None]

    def bwd(g):
        _acc(a, g * m)
        _acc(b, g * (~m))

    return _make(np.where(m, a.values, b.values), (a, b), bwd)


# ---------------------------------------------------------------------------
# parameters


class ParamRegistry:
    """Named parameter tensors with stable iteration order."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def register(self, name: str, values: np.ndarray) -> Tensor:
        if name in self._params:
            raise SubstrateError(f"duplicate parameter name {name!r}")
        t = leaf(np.asarray(values, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def items(self):
        return self._params.items()

    def names(self) -> list[str]:
        return list(self._params)

    def zero_grads(self):
        for t in self._params.values():
            t.grad = None


# ---------------------------------------------------------------------------
# finite differences


def grad_check(f, wrt: list[Tensor], h: float = 1e-5) -> float:
    """Max relative error between backprop and central differences.

    ``f()`` must rebuild its graph from the current ``.values`` of the given
    tensors on every call and return a scalar Tensor.
    """
    out = f()
    reset_graph(out)
    backward(out)
    analytic = [np.array(t.grad if t.grad is not None else np.zeros_like(t.values))
                for t in wrt]
    worst = 0.0
    for t, a in zip(wrt, analytic):
        flat = t.values.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f().item()
            flat[i] = orig - h
            fm = f().item()
            flat[i] = orig
            num = (fp - fm) / (2 * h)
            ana = a.reshape(-1)[i]
            rel = abs(ana - num) / max(1.0, abs(ana), abs(num))
            worst = max(worst, rel)
    return worst
