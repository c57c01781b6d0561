"""Immutable float64 arrays and a reverse-mode tape.

Operations on :class:`Matrix` values are recorded on the innermost active
:class:`Tape` whenever one of their inputs is differentiable.  Replaying the
tape walks the records in exact reverse creation order and accumulates
vector-Jacobian products additively.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

_local = threading.local()


def _tape_stack() -> list:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Matrix:
    """A read-only float64 array (usually 1-D or 2-D).

    ``requires_grad`` marks leaves the tape should differentiate with respect
    to; results of recorded operations inherit it.
    """

    __slots__ = ("data", "requires_grad")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        arr.flags.writeable = False
        self.data = arr
        self.requires_grad = requires_grad

    @classmethod
    def _wrap(cls, arr: np.ndarray, requires_grad: bool) -> "Matrix":
        out = cls.__new__(cls)
        if arr.dtype != np.float64:
            arr = arr.astype(np.float64)
        arr.flags.writeable = False
        out.data = arr
        out.requires_grad = requires_grad
        return out

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1] if self.data.ndim > 1 else 1

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element value, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Matrix":
        return Matrix._wrap(self.data, False)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Matrix(shape={self.shape}{flag})"

    def __len__(self):
        return len(self.data)

    # operator sugar; implementations live in ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    @property
    def T(self) -> "Matrix":
        from . import ops
        return ops.transpose(self)


def as_matrix(x) -> Matrix:
    return x if isinstance(x, Matrix) else Matrix(x)


VJP = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


@dataclass
class Node:
    output: Matrix
    inputs: tuple
    vjp: VJP


class Tape:
    """Records primitive operations while active (``with Tape() as tape:``).

    A tape belongs to the thread that created it and must not be shared.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self._owner = threading.get_ident()

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        else:  # pragma: no cover - misuse
            raise RuntimeError("tape exited out of order")
        return False

    def record(self, output: Matrix, inputs: Iterable[Matrix], vjp: VJP) -> None:
        if threading.get_ident() != self._owner:
            raise RuntimeError("a tape must not be used from two threads")
        self.nodes.append(Node(output, tuple(inputs), vjp))

    def backward(self, output: Matrix, seed: np.ndarray | None = None) -> dict[int, np.ndarray]:
        """Return adjoints for every value reachable from ``output``, keyed by ``id``."""
        if seed is None:
            if output.data.size != 1:
                raise ValueError("backward from a non-scalar needs an explicit seed")
            seed = np.ones_like(output.data)
        adjoints: dict[int, np.ndarray] = {id(output): np.asarray(seed, dtype=np.float64)}
        for node in reversed(self.nodes):
            g = adjoints.get(id(node.output))
            if g is None:
                continue
            grads = node.vjp(g)
            for inp, gi in zip(node.inputs, grads):
                if gi is None or not inp.requires_grad:
                    continue
                key = id(inp)
                prev = adjoints.get(key)
                adjoints[key] = gi if prev is None else prev + gi
        return adjoints

    def gradient(self, output: Matrix, wrt):
        """Gradients of scalar ``output`` w.r.t. ``wrt`` (a Matrix, list or dict).

        Values never touched by the output receive zeros.
        """
        adjoints = self.backward(output)

        def grad_of(m: Matrix) -> np.ndarray:
            g = adjoints.get(id(m))
            return np.zeros_like(m.data) if g is None else g

        if isinstance(wrt, Matrix):
            return grad_of(wrt)
        if isinstance(wrt, dict):
            return {k: grad_of(v) for k, v in wrt.items()}
        return [grad_of(m) for m in wrt]


def make(arr: np.ndarray, inputs: Sequence[Matrix], vjp: VJP) -> Matrix:
    """Wrap a primitive's result and record it on the active tape if needed."""
    tape = active_tape()
    needs = tape is not None and any(m.requires_grad for m in inputs)
    out = Matrix._wrap(np.asarray(arr), needs)
    if needs:
        tape.record(out, inputs, vjp)
    return out
