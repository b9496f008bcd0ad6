"""Dense tensors with reverse-mode differentiation.

A deliberately small engine: numpy arrays as storage, vectorized primitives,
and a topological backward pass. Float64 is the default dtype; float32 can be
selected globally with :func:`set_default_dtype` when speed matters more than
gradient-check headroom.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit as _expit

__all__ = [
    "Tensor",
    "SingularMatrixError",
    "as_tensor",
    "concat",
    "stack",
    "mat_inverse",
    "no_grad",
    "grad_enabled",
    "set_default_dtype",
    "default_dtype",
    "grad_check",
    "GradCheckReport",
]


class SingularMatrixError(ValueError):
    """Raised when LU factorization meets a pivot below the singularity tolerance."""


_DEFAULT_DTYPE = np.float64
_GRAD_ENABLED = True

# Pivot threshold is relative to the largest entry of the matrix being factored.
PIVOT_RTOL = 1e-12


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported dtype {dtype}; use float32 or float64")
    _DEFAULT_DTYPE = dtype.type


def default_dtype():
    return _DEFAULT_DTYPE


class no_grad:
    """Context manager that disables graph construction (inference mode)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """A numpy array plus an optional gradient and backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=_DEFAULT_DTYPE)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    # -- plumbing ---------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype)
        else:
            self.grad += g

    def backward(self, grad=None):
        """Run reverse-mode accumulation from this tensor.

        With no explicit seed the tensor must be a scalar; the seed is 1.
        """
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar tensor")
            grad = np.ones_like(self.data)
        self.accumulate_grad(np.asarray(grad, dtype=self.data.dtype))

        # Iterative post-order: parents enter the list before their consumers,
        # so the reversed list runs each node after all of its consumers.
        topo = []
        visited = set()
        work = [(self, False)]
        while work:
            node, expanded = work.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            work.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    work.append((p, False))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operators ---------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, -as_tensor(other))

    def __rsub__(self, other):
        return add(as_tensor(other), -self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(as_tensor(other), self)

    def __pow__(self, p):
        return pow_(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    # -- method aliases ------------------------------------------------------

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def tanh(self):
        return tanh(self)

    def sigmoid(self):
        return sigmoid(self)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes=None):
        return transpose(self, axes)

    @property
    def T(self):
        return transpose(self)

    def clip(self, lo=None, hi=None):
        return clip(self, lo, hi)

    def softmax(self, axis=-1):
        return softmax(self, axis)

    def log_softmax(self, axis=-1):
        return log_softmax(self, axis)

    def logsumexp(self, axis=None, keepdims=False):
        return logsumexp(self, axis=axis, keepdims=keepdims)

    def inverse(self):
        return mat_inverse(self)

    def flip(self, axis=0):
        return flip(self, axis)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward) -> Tensor:
    """Build a graph node; constant-folds when grads are off or unneeded."""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g, shape):
    """Reduce a broadcast gradient back to ``shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- elementwise -------------------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.data.shape))

    return _node(data, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.data.shape))

    return _node(data, (a, b), backward)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data / b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g / b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _node(data, (a, b), backward)


def pow_(a, p):
    a = as_tensor(a)
    p = float(p)
    data = a.data**p

    def backward(g):
        a.accumulate_grad(g * p * a.data ** (p - 1.0))

    return _node(data, (a,), backward)


def exp(a):
    a = as_tensor(a)
    data = np.exp(a.data)

    def backward(g):
        a.accumulate_grad(g * data)

    return _node(data, (a,), backward)


def log(a):
    a = as_tensor(a)
    data = np.log(a.data)

    def backward(g):
        a.accumulate_grad(g / a.data)

    return _node(data, (a,), backward)


def tanh(a):
    a = as_tensor(a)
    data = np.tanh(a.data)

    def backward(g):
        a.accumulate_grad(g * (1.0 - data * data))

    return _node(data, (a,), backward)


def stable_sigmoid(x):
    """Overflow-safe sigmoid, exact at extreme inputs."""
    return _expit(x)


def sigmoid(a):
    a = as_tensor(a)
    data = stable_sigmoid(a.data)

    def backward(g):
        a.accumulate_grad(g * data * (1.0 - data))

    return _node(data, (a,), backward)


def clip(a, lo=None, hi=None):
    """Value clipping; gradient passes through the unclipped region only."""
    a = as_tensor(a)
    data = np.clip(a.data, lo, hi)
    mask = np.ones_like(a.data)
    if lo is not None:
        mask = mask * (a.data >= lo)
    if hi is not None:
        mask = mask * (a.data <= hi)

    def backward(g):
        a.accumulate_grad(g * mask)

    return _node(data, (a,), backward)


# -- reductions ---------------------------------------------------------------


def sum_(a, axis=None, keepdims=False):
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            a.accumulate_grad(np.broadcast_to(g, a.data.shape).copy() if np.ndim(g) else np.full_like(a.data, g))
            return
        gg = g
        if not keepdims:
            gg = np.expand_dims(gg, axis)
        a.accumulate_grad(np.broadcast_to(gg, a.data.shape))

    return _node(np.asarray(data), (a,), backward)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / n)


def logsumexp(a, axis=None, keepdims=False):
    """log(sum(exp(x))); handles -inf entries (and all--inf slices) exactly."""
    a = as_tensor(a)
    x = a.data
    m = np.max(x, axis=axis, keepdims=True) if x.size else np.full((), -np.inf)
    m = np.where(np.isfinite(m), m, 0.0)  # all--inf slice: shift by 0, sum is 0
    with np.errstate(invalid="ignore"):
        e = np.exp(x - m)
    e = np.where(np.isfinite(x), e, 0.0)
    s = e.sum(axis=axis, keepdims=True)
    with np.errstate(divide="ignore"):
        out = np.log(s) + m
    data = out if keepdims or axis is None and out.ndim == 0 else np.squeeze(out, axis=axis) if axis is not None else out.reshape(())
    if axis is None and not keepdims:
        data = data.reshape(())

    def backward(g):
        gg = np.asarray(g)
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        with np.errstate(invalid="ignore", divide="ignore"):
            w = e / np.where(s > 0, s, 1.0)
        a.accumulate_grad(gg * w)

    return _node(np.asarray(data), (a,), backward)


def softmax(a, axis=-1):
    a = as_tensor(a)
    x = a.data
    m = np.max(x, axis=axis, keepdims=True)
    e = np.exp(x - m)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        a.accumulate_grad(data * (g - dot))

    return _node(data, (a,), backward)


def log_softmax(a, axis=-1):
    a = as_tensor(a)
    x = a.data
    m = np.max(x, axis=axis, keepdims=True)
    shifted = x - m
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    data = shifted - lse

    def backward(g):
        soft = np.exp(data)
        a.accumulate_grad(g - soft * g.sum(axis=axis, keepdims=True))

    return _node(data, (a,), backward)


# -- shape ops ----------------------------------------------------------------


def reshape(a, shape):
    a = as_tensor(a)
    data = a.data.reshape(shape)

    def backward(g):
        a.accumulate_grad(g.reshape(a.data.shape))

    return _node(data, (a,), backward)


def transpose(a, axes=None):
    a = as_tensor(a)
    data = np.transpose(a.data, axes)

    def backward(g):
        if axes is None:
            a.accumulate_grad(np.transpose(g))
        else:
            inv = np.argsort(axes)
            a.accumulate_grad(np.transpose(g, inv))

    return _node(data, (a,), backward)


def flip(a, axis=0):
    a = as_tensor(a)
    data = np.flip(a.data, axis=axis)

    def backward(g):
        a.accumulate_grad(np.flip(g, axis=axis))

    return _node(data.copy(), (a,), backward)


def getitem(a, idx):
    a = as_tensor(a)
    data = a.data[idx]

    def backward(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, idx, g)
        a.accumulate_grad(buf)

    return _node(np.array(data, copy=True), (a,), backward)


def take_rows(a, indices):
    """Gather rows along axis 0 with an integer index array."""
    idx = np.asarray(indices, dtype=np.intp)
    return getitem(a, idx)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t.accumulate_grad(g[tuple(sl)])

    return _node(data, tuple(tensors), backward)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    data = np.stack([t.data for t in tensors], axis=axis)

    def backward(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t.accumulate_grad(np.take(g, i, axis=axis))

    return _node(data, tuple(tensors), backward)


# -- linear algebra -----------------------------------------------------------


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    data = ad @ bd

    def backward(g):
        if ad.ndim == 2 and bd.ndim == 2:
            if a.requires_grad:
                a.accumulate_grad(g @ bd.T)
            if b.requires_grad:
                b.accumulate_grad(ad.T @ g)
        elif ad.ndim == 2 and bd.ndim == 1:
            if a.requires_grad:
                a.accumulate_grad(np.outer(g, bd))
            if b.requires_grad:
                b.accumulate_grad(ad.T @ g)
        elif ad.ndim == 1 and bd.ndim == 2:
            if a.requires_grad:
                a.accumulate_grad(g @ bd.T)
            if b.requires_grad:
                b.accumulate_grad(np.outer(ad, g))
        elif ad.ndim == 1 and bd.ndim == 1:
            if a.requires_grad:
                a.accumulate_grad(g * bd)
            if b.requires_grad:
                b.accumulate_grad(g * ad)
        else:
            raise ValueError("matmul backward supports 1-D and 2-D operands only")

    return _node(data, (a, b), backward)


def lu_factor(a: np.ndarray):
    """LU with partial pivoting. Returns (lu, perm) with L below the diagonal.

    Raises SingularMatrixError when a pivot falls below
    PIVOT_RTOL * max|entry| of the input matrix.
    """
    a = np.asarray(a)
    n = a.shape[0]
    if a.ndim != 2 or a.shape[1] != n:
        raise ValueError(f"square matrix required, got {a.shape}")
    lu = a.astype(a.dtype, copy=True)
    perm = np.arange(n)
    tol = PIVOT_RTOL * (np.abs(a).max() if a.size else 0.0)
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        if np.abs(lu[p, k]) <= tol:
            raise SingularMatrixError(
                f"singular matrix: pivot {abs(lu[p, k]):.3e} below tolerance {tol:.3e} at column {k}"
            )
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        lu[k + 1 :, k] /= lu[k, k]
        if k + 1 < n:
            lu[k + 1 :, k + 1 :] -= np.outer(lu[k + 1 :, k], lu[k, k + 1 :])
    return lu, perm


def lu_inverse(a: np.ndarray) -> np.ndarray:
    lu, perm = lu_factor(a)
    n = lu.shape[0]
    # Solve L y = P I, then U x = y, vectorized over right-hand-side columns.
    y = np.eye(n, dtype=lu.dtype)[perm]
    for k in range(1, n):
        y[k] -= lu[k, :k] @ y[:k]
    x = y
    for k in range(n - 1, -1, -1):
        if k + 1 < n:
            x[k] -= lu[k, k + 1 :] @ x[k + 1 :]
        x[k] /= lu[k, k]
    return x


def mat_inverse(a):
    """Matrix inverse via LU with partial pivoting.

    The backward pass applies the inverse-derivative rule, so chains through
    inverses stay trainable end to end.
    """
    a = as_tensor(a)
    inv = lu_inverse(a.data)

    def backward(g):
        a.accumulate_grad(-inv.T @ g @ inv.T)

    return _node(inv, (a,), backward)


# -- gradient checking --------------------------------------------------------


@dataclass
class GradCheckReport:
    max_rel_err: float
    n_checked: int
    worst: tuple

    def __str__(self):
        return f"grad_check: max rel err {self.max_rel_err:.3e} over {self.n_checked} coords (worst at {self.worst})"


def grad_check(f, tensors, h=1e-5, max_coords=64, rng=None) -> GradCheckReport:
    """Compare reverse-mode gradients of ``f()`` against central differences.

    ``f`` is a closure producing a scalar Tensor from ``tensors`` (a list of
    leaf tensors with requires_grad=True). Coordinates are checked exhaustively
    up to ``max_coords`` total, otherwise a seeded random subset is used.
    Relative error uses a small floor so near-zero gradient pairs do not
    inflate finite-difference noise.
    """
    tensors = list(tensors)
    for t in tensors:
        t.zero_grad()
    out = f()
    if out.size != 1:
        raise ValueError("grad_check target must be scalar")
    out.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]

    total = sum(t.data.size for t in tensors)
    rng = rng or np.random.default_rng(0)
    coords = []
    if total <= max_coords:
        for ti, t in enumerate(tensors):
            coords.extend((ti, flat) for flat in range(t.data.size))
    else:
        per = max(1, max_coords // max(1, len(tensors)))
        for ti, t in enumerate(tensors):
            flats = rng.choice(t.data.size, size=min(per, t.data.size), replace=False)
            coords.extend((ti, int(flat)) for flat in flats)

    max_rel = 0.0
    worst = (None, None)
    for ti, flat in coords:
        t = tensors[ti]
        orig = t.data.flat[flat]
        t.data.flat[flat] = orig + h
        with no_grad():
            f_plus = f().item()
        t.data.flat[flat] = orig - h
        with no_grad():
            f_minus = f().item()
        t.data.flat[flat] = orig
        numeric = (f_plus - f_minus) / (2.0 * h)
        a = analytic[ti].flat[flat]
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-3)
        if rel > max_rel:
            max_rel = rel
            worst = (ti, flat)
    return GradCheckReport(max_rel_err=max_rel, n_checked=len(coords), worst=worst)
