"""Differentiable primitives on :class:`Matrix`.

Every function here either records a single node with its own
vector-Jacobian product or is a short composition of recorded primitives.
Numpy broadcasting is supported for the elementwise binary operations.
"""

from __future__ import annotations

import numpy as np

from ..errors import DegenerateVectorError, EmptyInputError, ShapeError
from .tape import Matrix, as_matrix, make


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_broadcast(a: Matrix, b: Matrix, name: str) -> None:
    if a.data.shape == b.data.shape:
        return
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{name}: cannot combine shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Matrix:
    a, b = as_matrix(a), as_matrix(b)
    _check_broadcast(a, b, "add")
    sa, sb = a.shape, b.shape
    return make(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Matrix:
    a, b = as_matrix(a), as_matrix(b)
    _check_broadcast(a, b, "sub")
    sa, sb = a.shape, b.shape
    return make(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Matrix:
    a, b = as_matrix(a), as_matrix(b)
    _check_broadcast(a, b, "mul")
    ad, bd = a.data, b.data
    return make(
        ad * bd,
        (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
    )


def div(a, b) -> Matrix:
    a, b = as_matrix(a), as_matrix(b)
    _check_broadcast(a, b, "div")
    ad, bd = a.data, b.data
    out = ad / bd
    return make(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / bd, ad.shape), _unbroadcast(-g * out / bd, bd.shape)),
    )


def neg(a) -> Matrix:
    a = as_matrix(a)
    return make(-a.data, (a,), lambda g: (-g,))


def tanh(a) -> Matrix:
    a = as_matrix(a)
    out = np.tanh(a.data)
    return make(out, (a,), lambda g: (g * (1.0 - out * out),))


def exp(a) -> Matrix:
    a = as_matrix(a)
    out = np.exp(a.data)
    return make(out, (a,), lambda g: (g * out,))


def log(a) -> Matrix:
    a = as_matrix(a)
    ad = a.data
    return make(np.log(ad), (a,), lambda g: (g / ad,))


def square(a) -> Matrix:
    a = as_matrix(a)
    ad = a.data
    return make(ad * ad, (a,), lambda g: (2.0 * g * ad,))


def sqrt(a) -> Matrix:
    """Square root; the derivative at exactly zero is taken as zero."""
    a = as_matrix(a)
    out = np.sqrt(a.data)

    def vjp(g):
        safe = np.where(out > 0.0, out, 1.0)
        return (np.where(out > 0.0, g / (2.0 * safe), 0.0),)

    return make(out, (a,), vjp)


def clamp_min(a, floor: float) -> Matrix:
    a = as_matrix(a)
    keep = a.data > floor
    return make(np.where(keep, a.data, floor), (a,), lambda g: (np.where(keep, g, 0.0),))


def clip(a, lo: float, hi: float) -> Matrix:
    a = as_matrix(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return make(np.clip(a.data, lo, hi), (a,), lambda g: (np.where(inside, g, 0.0),))


def where(mask, a, b) -> Matrix:
    """Select ``a`` where the constant boolean ``mask`` holds, else ``b``."""
    a, b = as_matrix(a), as_matrix(b)
    mask = np.asarray(mask, dtype=bool)
    sa, sb = a.shape, b.shape
    return make(
        np.where(mask, a.data, b.data),
        (a, b),
        lambda g: (_unbroadcast(np.where(mask, g, 0.0), sa), _unbroadcast(np.where(mask, 0.0, g), sb)),
    )


# ---------------------------------------------------------------- linear algebra


def matmul(a, b) -> Matrix:
    a, b = as_matrix(a), as_matrix(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")
    ad, bd = a.data, b.data
    return make(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def transpose(a) -> Matrix:
    a = as_matrix(a)
    return make(a.data.T, (a,), lambda g: (g.T,))


def reshape(a, shape) -> Matrix:
    a = as_matrix(a)
    old = a.shape
    return make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def concat(parts, axis: int = -1) -> Matrix:
    parts = [as_matrix(p) for p in parts]
    if not parts:
        raise EmptyInputError("concat of no values")
    try:
        out = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[p.shape for p in parts]}") from None
    cuts = np.cumsum([p.shape[axis] for p in parts])[:-1]
    return make(out, parts, lambda g: tuple(np.split(g, cuts, axis=axis)))


def take(a, index, axis: int = 0) -> Matrix:
    """Gather along ``axis`` with a constant integer index (repeats allowed)."""
    a = as_matrix(a)
    index = np.asarray(index, dtype=np.intp)
    shape = a.shape

    def vjp(g):
        out = np.zeros(shape)
        moved = np.moveaxis(out, axis, 0)
        np.add.at(moved, index, np.moveaxis(g, axis, 0))
        return (out,)

    return make(np.take(a.data, index, axis=axis), (a,), vjp)


# ---------------------------------------------------------------- reductions


def sum(a, axis=None, keepdims: bool = False) -> Matrix:  # noqa: A001 - mirrors numpy
    a = as_matrix(a)
    shape = a.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return make(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), vjp)


def mean(a, axis=None, keepdims: bool = False) -> Matrix:
    a = as_matrix(a)
    n = a.data.size if axis is None else a.shape[axis]
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def logsumexp(a, axis: int = -1, keepdims: bool = False) -> Matrix:
    a = as_matrix(a)
    if a.data.size == 0 or a.shape[axis] == 0:
        raise EmptyInputError("logsumexp over an empty axis")
    ad = a.data
    peak = np.max(ad, axis=axis, keepdims=True)
    shifted = np.exp(ad - peak)
    total = np.sum(shifted, axis=axis, keepdims=True)
    out = np.log(total) + peak
    probs = shifted / total

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (g * probs,)

    return make(out if keepdims else np.squeeze(out, axis=axis), (a,), vjp)


# ---------------------------------------------------------------- segments
# Rows of a stacked (N, ...) array are grouped into consecutive segments of
# the given lengths; these ops let a batch of variable-length sequences share
# one tape record per step.


def segment_sum(a, lengths) -> Matrix:
    a = as_matrix(a)
    lengths = np.asarray(lengths, dtype=np.intp)
    if np.any(lengths <= 0) or lengths.sum() != a.shape[0]:
        raise ShapeError(f"segment lengths {lengths.tolist()} do not tile {a.shape[0]} rows")
    starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    out = np.add.reduceat(a.data, starts, axis=0)
    return make(out, (a,), lambda g: (np.repeat(g, lengths, axis=0),))


def segment_repeat(a, lengths) -> Matrix:
    """Repeat row ``i`` of ``a`` ``lengths[i]`` times (adjoint of segment_sum)."""
    a = as_matrix(a)
    lengths = np.asarray(lengths, dtype=np.intp)
    if len(lengths) != a.shape[0]:
        raise ShapeError(f"{len(lengths)} segment lengths for {a.shape[0]} rows")
    starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    return make(
        np.repeat(a.data, lengths, axis=0),
        (a,),
        lambda g: (np.add.reduceat(g, starts, axis=0),),
    )


def segment_softmax(scores, lengths) -> Matrix:
    """Softmax of a 1-D score vector within each segment."""
    scores = as_matrix(scores)
    lengths = np.asarray(lengths, dtype=np.intp)
    starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    # the per-segment max is a constant shift; softmax is invariant to it
    peak = np.maximum.reduceat(scores.data, starts)
    e = exp(sub(scores, np.repeat(peak, lengths)))
    return div(e, segment_repeat(segment_sum(e, lengths), lengths))


# ---------------------------------------------------------------- composites


def softmax(logits, axis: int = -1) -> Matrix:
    """Softmax with max-subtraction; outputs are positive and sum to one."""
    logits = as_matrix(logits)
    if logits.data.size == 0:
        raise EmptyInputError("softmax of an empty vector")
    return exp(sub(logits, logsumexp(logits, axis=axis, keepdims=True)))


def l2_normalize(x, axis: int = -1) -> Matrix:
    x = as_matrix(x)
    norms = np.sqrt(np.sum(x.data * x.data, axis=axis))
    if np.any(norms == 0.0):
        raise DegenerateVectorError("cannot normalize a zero-norm vector")
    return div(x, sqrt(sum(square(x), axis=axis, keepdims=True)))


def cosine(u, v) -> Matrix:
    """Cosine similarity of two vectors, clamped to [-1, 1]."""
    u, v = as_matrix(u), as_matrix(v)
    if u.shape != v.shape or u.ndim != 1:
        raise ShapeError(f"cosine: vectors of shapes {u.shape} and {v.shape}")
    return clip(sum(mul(l2_normalize(u), l2_normalize(v))), -1.0, 1.0)


def cosine_value(u, v) -> float:
    """Plain-float cosine for scoring; no tape involvement."""
    u = np.asarray(getattr(u, "data", u), dtype=np.float64)
    v = np.asarray(getattr(v, "data", v), dtype=np.float64)
    if u.shape != v.shape:
        raise ShapeError(f"cosine: vectors of shapes {u.shape} and {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise DegenerateVectorError("cosine of a zero-norm vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))
