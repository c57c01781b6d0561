from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from ..errors import EvaluationError
from .tape import Matrix, Tape

# Gradients below this magnitude are compared absolutely: central differences
# with h=1e-4 carry ~1e-9 truncation error, so a pure ratio is meaningless there.
NOISE_FLOOR = 1e-5


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    n_checked: int
    worst: tuple  # (parameter name, flat index)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = NOISE_FLOOR) -> np.ndarray:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def grad_check(
    f: Callable,
    params,
    tolerance: float = 1e-4,
    h: float = 1e-4,
    floor: float = NOISE_FLOOR,
) -> GradCheckReport:
    """Compare tape gradients of scalar ``f(params)`` with central differences.

    Coordinates whose first estimate is off by more than a tenth of the
    tolerance are re-estimated by Richardson extrapolation from steps h and 2h.

    ``params`` is a Matrix or a mapping name -> Matrix; ``f`` receives the same
    structure, with every leaf marked differentiable.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    single = isinstance(params, Matrix) or not isinstance(params, Mapping)
    named = {"x": params} if single else dict(params)
    base = {k: np.array(getattr(v, "data", v), dtype=np.float64) for k, v in named.items()}

    def call(values: dict) -> Matrix:
        leaves = {k: Matrix(v, requires_grad=True) for k, v in values.items()}
        return leaves, f(leaves["x"] if single else leaves)

    with Tape() as tape:
        leaves, out = call(base)
        value = float(np.sum(out.data))
        if not np.isfinite(value):
            raise EvaluationError(f"f(params) is not finite: {value}")
        grads = tape.gradient(out, leaves)

    def evaluate(values: dict) -> float:
        # no tape is active here, so nothing is recorded
        arg = Matrix._wrap(values["x"].copy(), False) if single else {
            k: Matrix._wrap(v.copy(), False) for k, v in values.items()
        }
        v = float(np.sum(f(arg).data))
        if not np.isfinite(v):
            raise EvaluationError(f"f is not finite near params: {v}")
        return v

    def central(flat, i, step) -> float:
        orig = flat[i]
        flat[i] = orig + step
        up = evaluate(base)
        flat[i] = orig - step
        down = evaluate(base)
        flat[i] = orig
        return (up - down) / (2.0 * step)

    worst, worst_at, n = 0.0, ("", -1), 0
    for name, arr in base.items():
        flat = arr.reshape(-1)
        analytic = grads[name].reshape(-1)
        numeric = np.array([central(flat, i, h) for i in range(flat.size)])
        # Coordinates that disagree get a Richardson step, cancelling the
        # O(h^2) truncation term that dominates for sharply curved losses.
        suspect = np.flatnonzero(relative_error(analytic, numeric, floor) > tolerance / 10)
        for i in suspect:
            numeric[i] = (4.0 * numeric[i] - central(flat, i, 2.0 * h)) / 3.0
        err = relative_error(analytic, numeric, floor)
        n += err.size
        if err.size and err.max() > worst:
            worst, worst_at = float(err.max()), (name, int(err.argmax()))
    return GradCheckReport(worst, tolerance, n, worst_at)
