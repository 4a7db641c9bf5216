"""Dense float64 tensors with tape-based reverse-mode automatic differentiation.

Small by design: exactly the operations the FuXi block needs, each with a
hand-written backward rule that grad_check can verify against central
differences. Arrays are numpy float64 throughout; reductions keep numpy's
fixed evaluation order so repeated runs are bitwise identical.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "ShapeError",
    "matmul",
    "silu",
    "relu",
    "rms_norm",
    "softmax",
    "logsumexp",
    "concat",
    "take",
    "take_rows",
    "rows_dot",
    "backward",
    "grad_check",
    "grad_check_params",
]

# Flattened-row budget for chunked gather ops; keeps peak memory bounded
# when scoring large negative-sample blocks.
_CHUNK_ELEMS = 4_000_000


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class Tape:
    """Records operations in execution order for one reverse pass.

    Execution order is a topological order, so `backward` replays the node
    list reversed and visits every recorded op exactly once. A tape can be
    consumed by backward() only once.
    """

    def __init__(self) -> None:
        self._nodes: list[tuple["Tensor", Callable[[np.ndarray], None]]] = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPE_STACK.pop()

    def __len__(self) -> int:
        return len(self._nodes)

    @property
    def consumed(self) -> bool:
        return self._consumed


_TAPE_STACK: list[Tape] = []


def _active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class Tensor:
    """A dense float64 array plus an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "tape")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.tape: Tape | None = None

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
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar -------------------------------------------------------

    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return add(self, scale(_as_tensor(other), -1.0))

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, 1.0 / float(other))
        raise TypeError("tensor division only supports scalars")

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, shape) -> "Tensor":
        return reshape(self, shape)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(out: Tensor, inputs: Sequence[Tensor], backward_fn: Callable[[np.ndarray], None]) -> Tensor:
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.tape = tape
        tape._nodes.append((out, backward_fn))
    return out


def _accumulate(t: Tensor, g: np.ndarray, own: bool = False) -> None:
    """Add g into t's grad. own=True promises g is freshly allocated and not
    aliased anywhere else, so it may be adopted without a defensive copy."""
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g if own else np.array(g)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient over axes that numpy broadcasting introduced or stretched."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    squeeze = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if squeeze:
        g = g.sum(axis=squeeze, keepdims=True)
    return g


# elementwise and linear algebra ------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data)

    def bwd(g: np.ndarray) -> None:
        ga = _unbroadcast(g, a.shape)
        gb = _unbroadcast(g, b.shape)
        _accumulate(a, ga, own=ga is not g)
        _accumulate(b, gb, own=gb is not g)

    return _record(out, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data)

    def bwd(g: np.ndarray) -> None:
        _accumulate(a, _unbroadcast(g * b.data, a.shape), own=True)
        _accumulate(b, _unbroadcast(g * a.data, b.shape), own=True)

    return _record(out, (a, b), bwd)


def scale(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data * c)

    def bwd(g: np.ndarray) -> None:
        _accumulate(a, g * c, own=True)

    return _record(out, (a,), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy batch broadcasting on leading axes."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} x {b.shape}")
    out = Tensor(np.matmul(a.data, b.data))

    def bwd(g: np.ndarray) -> None:
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        _accumulate(a, _unbroadcast(ga, a.shape), own=True)
        _accumulate(b, _unbroadcast(gb, b.shape), own=True)

    return _record(out, (a, b), bwd)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # exp of a non-positive argument never overflows
    z = np.exp(-np.abs(x))
    return np.where(x >= 0.0, 1.0, z) / (1.0 + z)


def silu(x: Tensor) -> Tensor:
    """x * sigmoid(x), the gating nonlinearity used throughout the model."""
    s = _sigmoid(x.data)
    out = Tensor(x.data * s)

    def bwd(g: np.ndarray) -> None:
        _accumulate(x, g * (s * (1.0 + x.data * (1.0 - s))), own=True)

    return _record(out, (x,), bwd)


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0.0))

    def bwd(g: np.ndarray) -> None:
        _accumulate(x, g * (x.data > 0.0), own=True)

    return _record(out, (x,), bwd)


def texp(x: Tensor) -> Tensor:
    e = np.exp(x.data)
    out = Tensor(e)

    def bwd(g: np.ndarray) -> None:
        _accumulate(x, g * e, own=True)

    return _record(out, (x,), bwd)


def tlog(x: Tensor) -> Tensor:
    out = Tensor(np.log(x.data))

    def bwd(g: np.ndarray) -> None:
        _accumulate(x, g / x.data, own=True)

    return _record(out, (x,), bwd)


def rms_norm(x: Tensor, gain: Tensor | None = None, eps: float = 1e-6) -> Tensor:
    """Row normalization by root-mean-square over the last axis.

    y = x / sqrt(mean(x^2) + eps) * gain. gain=None means a fixed unit gain.
    """
    if eps <= 0:
        raise ValueError("rms_norm: eps must be positive")
    d = x.shape[-1]
    r = np.sqrt(np.mean(x.data * x.data, axis=-1, keepdims=True) + eps)
    normed = x.data / r
    gd = gain.data if gain is not None else None
    out = Tensor(normed * gd if gd is not None else normed)

    def bwd(g: np.ndarray) -> None:
        gg = g * gd if gd is not None else g
        dot = np.sum(gg * x.data, axis=-1, keepdims=True)
        _accumulate(x, gg / r - x.data * (dot / (d * r**3)), own=True)
        if gain is not None:
            _accumulate(gain, _unbroadcast(g * normed, gain.shape), own=True)

    inputs = (x,) if gain is None else (x, gain)
    return _record(out, inputs, bwd)


def softmax(x: Tensor) -> Tensor:
    """Stabilized softmax over the last axis; rows sum to one."""
    shifted = x.data - np.max(x.data, axis=-1, keepdims=True)
    e = np.exp(shifted)
    p = e / np.sum(e, axis=-1, keepdims=True)
    out = Tensor(p)

    def bwd(g: np.ndarray) -> None:
        dot = np.sum(g * p, axis=-1, keepdims=True)
        _accumulate(x, p * (g - dot), own=True)

    return _record(out, (x,), bwd)


def masked_softmax(x: Tensor, allowed: np.ndarray) -> Tensor:
    """Softmax over the last axis restricted to `allowed` (boolean) entries.

    Disallowed entries get probability zero; an all-disallowed row yields a
    zero row instead of NaN.
    """
    neg = np.where(allowed, x.data, -np.inf)
    m = np.max(neg, axis=-1, keepdims=True)
    any_allowed = np.isfinite(m)
    m = np.where(any_allowed, m, 0.0)
    e = np.where(allowed, np.exp(neg - m), 0.0)
    z = np.sum(e, axis=-1, keepdims=True)
    p = np.divide(e, z, out=np.zeros_like(e), where=z > 0)
    out = Tensor(p)

    def bwd(g: np.ndarray) -> None:
        dot = np.sum(g * p, axis=-1, keepdims=True)
        _accumulate(x, p * (g - dot), own=True)

    return _record(out, (x,), bwd)


def logsumexp(x: Tensor) -> Tensor:
    """log(sum(exp(x))) over the last axis, max-shifted for stability."""
    m = np.max(x.data, axis=-1, keepdims=True)
    e = np.exp(x.data - m)
    s = np.sum(e, axis=-1, keepdims=True)
    out = Tensor((m + np.log(s)).squeeze(-1))
    p = e / s

    def bwd(g: np.ndarray) -> None:
        _accumulate(x, np.expand_dims(g, -1) * p, own=True)

    return _record(out, (x,), bwd)


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor(np.sum(x.data, axis=axis, keepdims=keepdims))

    def bwd(g: np.ndarray) -> None:
        if axis is None:
            _accumulate(x, np.broadcast_to(g, x.shape))
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            _accumulate(x, np.broadcast_to(ge, x.shape))

    return _record(out, (x,), bwd)


def tmean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.size if axis is None else x.shape[axis]
    return scale(tsum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor(x.data.reshape(shape))

    def bwd(g: np.ndarray) -> None:
        _accumulate(x, g.reshape(x.shape))

    return _record(out, (x,), bwd)


def swap_last(x: Tensor) -> Tensor:
    """Transpose the last two axes."""
    out = Tensor(np.swapaxes(x.data, -1, -2))

    def bwd(g: np.ndarray) -> None:
        _accumulate(x, np.swapaxes(g, -1, -2))

    return _record(out, (x,), bwd)


def slice_last(x: Tensor, lo: int, hi: int) -> Tensor:
    out = Tensor(x.data[..., lo:hi])

    def bwd(g: np.ndarray) -> None:
        z = np.zeros_like(x.data)
        z[..., lo:hi] = g
        _accumulate(x, z, own=True)

    return _record(out, (x,), bwd)


def concat(parts: Iterable[Tensor], axis: int = -1) -> Tensor:
    parts = list(parts)
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis))
    widths = [p.shape[axis] for p in parts]

    def bwd(g: np.ndarray) -> None:
        offset = 0
        for p, w in zip(parts, widths):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(offset, offset + w)
            _accumulate(p, g[tuple(idx)])
            offset += w

    return _record(out, tuple(parts), bwd)


# gathers -------------------------------------------------------------------


def take(values: Tensor, idx: np.ndarray) -> Tensor:
    """Gather from a 1-D parameter vector: out = values[idx], any idx shape."""
    if values.ndim != 1:
        raise ShapeError(f"take: values must be 1-D, got {values.shape}")
    out = Tensor(values.data[idx])

    def bwd(g: np.ndarray) -> None:
        if values.requires_grad:
            if values.grad is None:
                values.grad = np.zeros_like(values.data)
            values.grad += np.bincount(
                idx.ravel(), weights=g.ravel(), minlength=values.data.shape[0]
            )

    return _record(out, (values,), bwd)


def take_rows(table: Tensor, idx: np.ndarray) -> Tensor:
    """Gather rows of a 2-D table: out[..., :] = table[idx[...], :]."""
    if table.ndim != 2:
        raise ShapeError(f"take_rows: table must be 2-D, got {table.shape}")
    out = Tensor(table.data[idx])
    d = table.shape[1]

    def bwd(g: np.ndarray) -> None:
        if table.requires_grad:
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            flat_idx = idx.ravel()
            flat_g = g.reshape(-1, d)
            # Per-column bincount is much faster than ufunc.at for the
            # millions-of-rows scatter the sampled loss produces.
            v = table.shape[0]
            for j in range(d):
                table.grad[:, j] += np.bincount(flat_idx, weights=flat_g[:, j], minlength=v)

    return _record(out, (table,), bwd)


def rows_dot(x: Tensor, table: Tensor, idx: np.ndarray) -> Tensor:
    """Score rows of x against gathered table rows without materializing the gather.

    out[..., k] = x[..., :] . table[idx[..., k], :]. idx shares x's leading
    shape plus a trailing candidate axis. Work is chunked so peak memory
    stays bounded even for large candidate counts.
    """
    if table.ndim != 2:
        raise ShapeError(f"rows_dot: table must be 2-D, got {table.shape}")
    if idx.shape[:-1] != x.shape[:-1]:
        raise ShapeError(f"rows_dot: index shape {idx.shape} does not match x shape {x.shape}")
    d = x.shape[-1]
    k = idx.shape[-1]
    rows = int(np.prod(x.shape[:-1], dtype=np.int64)) if x.ndim > 1 else 1
    xf = x.data.reshape(rows, d)
    idf = idx.reshape(rows, k)
    out_flat = np.empty((rows, k))
    chunk = max(1, _CHUNK_ELEMS // max(1, k * d))
    for s in range(0, rows, chunk):
        e = min(rows, s + chunk)
        gathered = table.data[idf[s:e]]
        out_flat[s:e] = np.einsum("rd,rkd->rk", xf[s:e], gathered)
    out = Tensor(out_flat.reshape(idx.shape))

    def bwd(g: np.ndarray) -> None:
        gf = g.reshape(rows, k)
        want_x = x.requires_grad
        want_t = table.requires_grad
        if want_x and x.grad is None:
            x.grad = np.zeros_like(x.data)
        if want_t and table.grad is None:
            table.grad = np.zeros_like(table.data)
        if want_x:
            xg = x.grad.reshape(rows, d)
            for s in range(0, rows, chunk):
                e = min(rows, s + chunk)
                gathered = table.data[idf[s:e]]
                xg[s:e] += np.einsum("rk,rkd->rd", gf[s:e], gathered)
        if want_t:
            # columnwise scatter avoids materializing the rows x k x d outer product
            v = table.shape[0]
            flat_idx = idf.ravel()
            for j in range(d):
                w = (gf * xf[:, j : j + 1]).ravel()
                table.grad[:, j] += np.bincount(flat_idx, weights=w, minlength=v)

    return _record(out, (x, table), bwd)


# reverse pass ---------------------------------------------------------------


def backward(loss: Tensor, tape: Tape) -> None:
    """Populate grads of every requires_grad leaf reachable from loss.

    loss must be a scalar recorded on `tape`; a tape can be consumed once.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.shape}")
    if tape._consumed:
        raise RuntimeError("backward: tape already consumed; build a fresh tape")
    if loss.tape is not tape:
        raise RuntimeError("backward: loss was not produced on this tape")
    tape._consumed = True
    loss.grad = np.ones_like(loss.data)
    for out, bwd in reversed(tape._nodes):
        if out.grad is not None:
            bwd(out.grad)
    tape._nodes.clear()


# gradient checking ----------------------------------------------------------


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, fd_step: float = 1e-5) -> float:
    """Max relative error of the analytic gradient of scalar f against central differences."""
    return grad_check_params(lambda: f(x), [x], fd_step)


def grad_check_params(f: Callable[[], Tensor], params: Sequence[Tensor], fd_step: float = 1e-5) -> float:
    if not (0.0 < fd_step <= 1e-3):
        raise ValueError("grad_check: fd_step must lie in (0, 1e-3]")
    saved_flags = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad = True
        p.grad = None
    try:
        with Tape() as tape:
            loss = f()
        if loss.data.size != 1:
            raise ValueError(f"grad_check: f must be scalar-valued, got shape {loss.shape}")
        backward(loss, tape)
        analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    finally:
        for p, flag in zip(params, saved_flags):
            p.requires_grad = flag
            p.grad = None

    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.ravel()
        gflat = ga.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + fd_step
            fp = f().item()
            flat[i] = orig - fd_step
            fm = f().item()
            flat[i] = orig
            fd = (fp - fm) / (2.0 * fd_step)
            err = abs(gflat[i] - fd) / max(1.0, abs(fd))
            if err > worst:
                worst = err
    return worst
