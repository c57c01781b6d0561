import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from srctrace.errors import DegenerateVectorError, EmptyInputError, EvaluationError, ShapeError
from srctrace.numerics import Matrix, Tape, cosine, grad_check, matmul, ops, softmax


def central_diff(f, x, h=1e-4):
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        up, down = x.copy(), x.copy()
        up[i] += h
        down[i] -= h
        g[i] = (f(up) - f(down)) / (2 * h)
    return g


def test_matmul_identity():
    out = matmul(np.eye(2), [[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(out.data, [[1, 2], [3, 4]])


def test_matmul_dot():
    assert matmul([[1.0, 2.0]], [[3.0], [4.0]]).data.tolist() == [[11.0]]


def test_matmul_shape_error_names_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_gradient_matches_central_differences(rng):
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    A = Matrix(a, requires_grad=True)
    with Tape() as tape:
        out = ops.sum(A @ b)
        g = tape.gradient(out, A)
    numeric = central_diff(lambda x: (x @ b).sum(), a)
    assert np.max(np.abs(g - numeric) / np.maximum(np.abs(numeric), 1e-12)) < 1e-5


def test_cosine_examples():
    x = np.array([0.3, -2.0, 5.0])
    assert cosine(x, x).item() == pytest.approx(1.0, abs=1e-12)
    assert cosine([1.0, 0.0], [0.0, 1.0]).item() == 0.0
    assert cosine([1.0, 1.0], [1.0, 0.0]).item() == pytest.approx(0.7071068, abs=1e-6)


def test_cosine_zero_vector():
    with pytest.raises(DegenerateVectorError):
        cosine([0.0, 0.0], [1.0, 0.0])


vectors = arrays(np.float64, 5, elements=st.floats(-10, 10, allow_nan=False)).filter(
    lambda v: np.linalg.norm(v) > 1e-3
)


@given(vectors, vectors, st.floats(0.01, 100), st.floats(0.01, 100))
def test_cosine_symmetric_scale_invariant_bounded(u, v, a, b):
    c = cosine(u, v).item()
    assert -1.0 <= c <= 1.0
    assert cosine(v, u).item() == pytest.approx(c, abs=1e-12)
    assert cosine(a * u, b * v).item() == pytest.approx(c, abs=1e-9)


def test_softmax_examples():
    np.testing.assert_allclose(softmax([2.5, 2.5, 2.5]).data, [1 / 3] * 3, atol=1e-15)
    big = softmax([1000.0, 0.0]).data
    assert np.all(np.isfinite(big)) and big[0] == pytest.approx(1.0) and big[1] < 1e-300
    np.testing.assert_allclose(softmax([1.0, 2.0, 3.0]).data, [0.0900306, 0.2447285, 0.6652410], atol=1e-6)


def test_softmax_empty():
    with pytest.raises(EmptyInputError):
        softmax([])


@given(arrays(np.float64, st.integers(1, 12), elements=st.floats(-50, 50)), st.floats(-100, 100))
def test_softmax_sums_to_one_and_shift_invariant(x, c):
    p = softmax(x).data
    assert np.all(p > 0)
    assert abs(p.sum() - 1.0) < 1e-9
    np.testing.assert_allclose(softmax(x + c).data, p, atol=1e-9)


def test_grad_check_sum_of_squares():
    report = grad_check(lambda x: ops.sum(ops.square(x)), Matrix([1.0, 2.0, 3.0]), tolerance=1e-6)
    assert report.passed and report.max_rel_error < 1e-6


def test_grad_check_nonfinite():
    with pytest.raises(EvaluationError):
        grad_check(lambda x: ops.sum(ops.log(x)), Matrix([-1.0, 2.0]))


def test_tape_replays_in_reverse_creation_order():
    x = Matrix([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        y = ops.tanh(x)
        z = ops.exp(y)
        w = ops.sum(z)
    assert [n.output for n in tape.nodes] == [y, z, w]
    seen = []
    for node in tape.nodes:
        rule = node.vjp
        node.vjp = lambda g, rule=rule, out=node.output: (seen.append(out), rule(g))[1]
    tape.backward(w)
    assert seen == [w, z, y]


def test_tape_accumulates_reused_values():
    x = Matrix([3.0], requires_grad=True)
    with Tape() as tape:
        out = ops.sum(x * x + x)
        g = tape.gradient(out, x)
    assert g.tolist() == [7.0]


def test_untouched_values_get_zero_gradient():
    x = Matrix([1.0, 2.0], requires_grad=True)
    unused = Matrix([5.0], requires_grad=True)
    with Tape() as tape:
        out = ops.sum(x)
        g = tape.gradient(out, [x, unused])
    assert g[1].tolist() == [0.0]


def test_matrix_is_read_only():
    m = Matrix([[1.0, 2.0]])
    with pytest.raises(ValueError):
        m.data[0, 0] = 5.0


# every primitive against central differences, 100 seeds each
def _primitives():
    lengths = [2, 3, 1]
    return {
        "add": (lambda p: ops.sum(ops.add(p["a"], p["b"]) * p["w"]), {"a": (3, 4), "b": (4,), "w": (3, 4)}),
        "sub": (lambda p: ops.sum(ops.sub(p["a"], p["b"]) * p["w"]), {"a": (3, 4), "b": (3, 1), "w": (3, 4)}),
        "mul": (lambda p: ops.sum(ops.mul(p["a"], p["b"])), {"a": (3, 4), "b": (4,)}),
        "div": (lambda p: ops.sum(ops.div(p["a"], ops.exp(p["b"]))), {"a": (3, 2), "b": (3, 2)}),
        "matmul": (lambda p: ops.sum(ops.tanh(ops.matmul(p["a"], p["b"]))), {"a": (3, 4), "b": (4, 2)}),
        "transpose": (lambda p: ops.sum(ops.transpose(p["a"]) * p["w"]), {"a": (3, 2), "w": (2, 3)}),
        "tanh": (lambda p: ops.sum(ops.tanh(p["a"]) * p["w"]), {"a": (5,), "w": (5,)}),
        "exp": (lambda p: ops.sum(ops.exp(p["a"]) * p["w"]), {"a": (5,), "w": (5,)}),
        "log": (lambda p: ops.sum(ops.log(ops.exp(p["a"]) + 1.0) * p["w"]), {"a": (5,), "w": (5,)}),
        "square": (lambda p: ops.sum(ops.square(p["a"]) * p["w"]), {"a": (5,), "w": (5,)}),
        "sqrt": (lambda p: ops.sum(ops.sqrt(ops.exp(p["a"])) * p["w"]), {"a": (5,), "w": (5,)}),
        "clamp_min": (lambda p: ops.sum(ops.clamp_min(p["a"], -0.5) * p["w"]), {"a": (5,), "w": (5,)}),
        "clip": (lambda p: ops.sum(ops.clip(p["a"], -1.0, 1.0) * p["w"]), {"a": (5,), "w": (5,)}),
        "where": (lambda p: ops.sum(ops.where([True, False, True], p["a"], p["b"]) * p["w"]), {"a": (3,), "b": (3,), "w": (3,)}),
        "reshape": (lambda p: ops.sum(ops.reshape(p["a"], (2, 3)) * p["w"]), {"a": (6,), "w": (2, 3)}),
        "concat": (lambda p: ops.sum(ops.concat([p["a"], p["b"]], axis=1) * p["w"]), {"a": (2, 2), "b": (2, 3), "w": (2, 5)}),
        "take": (lambda p: ops.sum(ops.take(p["a"], [0, 2, 2], axis=1) * p["w"]), {"a": (2, 3), "w": (2, 3)}),
        "sum_axis": (lambda p: ops.sum(ops.tanh(ops.sum(p["a"], axis=0))), {"a": (3, 4)}),
        "logsumexp": (lambda p: ops.sum(ops.logsumexp(p["a"], axis=1) * p["w"]), {"a": (3, 4), "w": (3,)}),
        "softmax": (lambda p: ops.sum(ops.softmax(p["a"]) * p["w"]), {"a": (6,), "w": (6,)}),
        "segment_sum": (lambda p: ops.sum(ops.tanh(ops.segment_sum(p["a"], lengths))), {"a": (6, 2)}),
        "segment_repeat": (lambda p: ops.sum(ops.segment_repeat(p["a"], lengths) * p["w"]), {"a": (3, 2), "w": (6, 2)}),
        "segment_softmax": (lambda p: ops.sum(ops.segment_softmax(p["a"], lengths) * p["w"]), {"a": (6,), "w": (6,)}),
        "l2_normalize": (lambda p: ops.sum(ops.l2_normalize(p["a"]) * p["w"]), {"a": (2, 4), "w": (2, 4)}),
        "cosine": (lambda p: ops.cosine(p["a"], p["b"]), {"a": (4,), "b": (4,)}),
    }


@pytest.mark.parametrize("name", sorted(_primitives()))
def test_primitive_gradients_over_100_seeds(name):
    f, shapes = _primitives()[name]
    worst = 0.0
    for seed in range(100):
        r = np.random.default_rng(seed)
        params = {k: Matrix(r.normal(size=s)) for k, s in shapes.items()}
        worst = max(worst, grad_check(f, params).max_rel_error)
    assert worst < 1e-4, f"{name}: {worst}"
