import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pbrnn.tape import GradTape, Var, absolute, grad_backward, identity, relu, square, value_of

from oracles import central_difference, max_relative_error


def _grad(f, **values):
    tape = GradTape()
    vs = {k: tape.param(k, np.asarray(v, dtype=float)) for k, v in values.items()}
    return grad_backward(tape, f(**vs))


def test_square_derivative():
    assert _grad(lambda w: square(w).sum(), w=3.0)["w"] == pytest.approx(6.0)


def test_relu_dead_region():
    assert _grad(lambda w: relu(w).sum(), w=-2.0)["w"] == 0.0


def test_abs_subgradient_zero_at_zero():
    g = _grad(lambda w: absolute(w).sum(), w=np.array([-1.5, 0.0, 2.0]))["w"]
    np.testing.assert_array_equal(g, [-1.0, 0.0, 1.0])


def test_empty_tape_and_unused_param():
    assert grad_backward(GradTape(), None) == {}
    tape = GradTape()
    a = tape.param("a", np.ones((2, 3)))
    tape.param("b", np.ones(4))
    grads = grad_backward(tape, (a * 2.0).sum())
    np.testing.assert_array_equal(grads["b"], np.zeros(4))
    assert grads["a"].shape == (2, 3)


def test_mixed_tapes_rejected():
    a = GradTape().param("a", 1.0)
    b = GradTape().param("b", 1.0)
    with pytest.raises(ValueError):
        a + b


def test_reflected_ops_with_ndarray():
    M = np.array([[1.0, 2.0], [3.0, 4.0]])
    g = _grad(lambda x: (M @ x).sum() + (2.0 - x).sum() + (3.0 * x).sum(), x=np.array([1.0, -1.0]))["x"]
    np.testing.assert_allclose(g, M.sum(axis=0) - 1.0 + 3.0)


def test_helpers_work_on_plain_arrays():
    x = np.array([-1.0, 2.0])
    np.testing.assert_array_equal(relu(x), [0.0, 2.0])
    assert identity(x) is x
    np.testing.assert_array_equal(absolute(x), [1.0, 2.0])
    np.testing.assert_array_equal(square(x), [1.0, 4.0])
    np.testing.assert_array_equal(value_of(x), x)


def _rnn_unroll(p, xs):
    h = np.zeros(p["W"].shape[0]) if not isinstance(p["W"], Var) else None
    out = None
    for t in range(xs.shape[0]):
        pre = p["U"] @ xs[t] + p["b"]
        if out is not None:
            pre = pre + p["W"] @ out
        out = relu(pre)
    return square(p["V"] @ out + p["c"]).sum() if h is None else np.sum(np.square(p["V"] @ out + p["c"]))


def test_three_step_rnn_matches_finite_differences():
    rng = np.random.default_rng(4)
    params = {
        "W": rng.standard_normal((3, 3)) * 0.5,
        "U": rng.standard_normal((3, 2)),
        "b": rng.standard_normal(3) + 0.5,
        "V": rng.standard_normal((2, 3)),
        "c": rng.standard_normal(2),
    }
    xs = rng.standard_normal((3, 2))
    tape = GradTape()
    vs = {k: tape.param(k, v) for k, v in params.items()}
    analytic = grad_backward(tape, _rnn_unroll(vs, xs))
    numeric = central_difference(lambda p: float(_rnn_unroll(p, xs)), {k: v.copy() for k, v in params.items()})
    assert max_relative_error(analytic, numeric) < 1e-4


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_graph_gradients(seed):
    rng = np.random.default_rng(seed)
    params = {"A": rng.standard_normal((3, 4)), "x": rng.standard_normal(4), "s": rng.standard_normal((1, 4))}
    C = rng.standard_normal((2, 3))

    def f(p):
        y = C @ (p["A"] @ p["x"]) - C @ p["A"].T.sum(axis=0)
        z = (p["s"] * p["x"]).mean() * 3.0
        return square(y).sum() + z - (p["A"] * p["A"]).sum(axis=0).sum()

    tape = GradTape()
    vs = {k: tape.param(k, v) for k, v in params.items()}
    analytic = grad_backward(tape, f(vs))
    numeric = central_difference(lambda p: float(value_of(f(p))), {k: v.copy() for k, v in params.items()})
    for k, v in params.items():
        assert analytic[k].shape == v.shape
    assert max_relative_error(analytic, numeric) < 1e-4
