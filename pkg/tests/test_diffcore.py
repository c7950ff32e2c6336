import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qcofr import diffcore as D
from qcofr.diffcore import ParamSet, ShapeError, Tape, Tensor, grad_check

RNG = np.random.default_rng(0)


def away_from(x, points, gap=0.05):
    """Nudge entries away from kinks so central differences are valid."""
    x = x.copy()
    for p in points:
        close = np.abs(x - p) < gap
        x[close] = p + gap * np.where(x[close] >= p, 1.5, -1.5)
    return x


UNARY = {
    "neg": (D.neg, None),
    "scale": (lambda x: D.scale(x, -2.5), None),
    "absolute": (D.absolute, [0.0]),
    "maximum_const": (lambda x: D.maximum_const(x, 0.3), [0.3]),
    "reciprocal": (D.reciprocal, [0.0]),
    "relu": (D.relu, [0.0]),
    "sigmoid": (D.sigmoid, None),
    "tanh": (D.tanh, None),
    "exp": (D.exp, None),
    "square": (D.square, None),
    "softmax": (D.softmax, None),
    "sum_axis": (lambda x: D.sum(x, axis=0), None),
    "mean_axis": (lambda x: D.mean(x, axis=-1), None),
    "reshape": (lambda x: D.reshape(x, (-1,)), None),
    "getitem": (lambda x: x[1:, ::2], None),
    "getitem_fancy": (lambda x: D.getitem(x, (np.array([0, 0, 2]), slice(None))), None),
    "concat": (lambda x: D.concat([x, D.square(x)], axis=0), None),
    "stack": (lambda x: D.stack([x, D.tanh(x)], axis=1), None),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_gradients_match_finite_differences(name):
    fn, kinks = UNARY[name]
    x = RNG.normal(size=(3, 4))
    if kinks:
        x = away_from(x, kinks)
    weights = RNG.normal(size=fn(Tensor(x)).shape)
    report = grad_check(lambda t: D.sum(D.mul(fn(t), weights)), Tensor(x))
    assert report.passed, (name, report.max_rel_error, report.worst_index)


def test_log_gradient():
    x = RNG.uniform(0.2, 2.0, size=(5,))
    assert grad_check(lambda t: D.sum(D.log(t)), Tensor(x)).passed


@pytest.mark.parametrize("op", [D.add, D.sub, D.mul])
@pytest.mark.parametrize("shapes", [((3, 4), (3, 4)), ((3, 4), (4,)), ((2, 1, 4), (3, 1))])
def test_broadcast_binary_gradients(op, shapes):
    a, b = RNG.normal(size=shapes[0]), RNG.normal(size=shapes[1])
    assert grad_check(lambda t: D.sum(D.square(op(t, b))), Tensor(a)).passed
    assert grad_check(lambda t: D.sum(D.square(op(a, t))), Tensor(b)).passed


@pytest.mark.parametrize("sa,sb", [((3, 4), (4, 2)), ((5, 3, 4), (4, 2)), ((2, 3, 4), (2, 4, 5)), ((2, 1, 4), (2, 4, 3))])
def test_matmul_gradients(sa, sb):
    a, b = RNG.normal(size=sa), RNG.normal(size=sb)
    assert grad_check(lambda t: D.sum(D.tanh(D.matmul(t, b))), Tensor(a)).passed
    assert grad_check(lambda t: D.sum(D.tanh(D.matmul(a, t))), Tensor(b)).passed


def test_gather_gradient_with_repeats():
    x = RNG.normal(size=(4, 3, 5))
    idx = RNG.integers(0, 5, size=(4, 3))
    out = D.gather(Tensor(x), idx)
    np.testing.assert_array_equal(out.data, np.take_along_axis(x, idx[..., None], -1)[..., 0])
    assert grad_check(lambda t: D.sum(D.square(D.gather(t, idx))), Tensor(x)).passed


def test_maximum_const_floor_gets_zero_gradient_at_tie():
    x = Tensor(np.array([0.3, 0.5]), requires_grad=True)
    with Tape() as tape:
        y = D.sum(D.maximum_const(x, 0.3))
    tape.backward(y)
    np.testing.assert_array_equal(x.grad, [0.0, 1.0])


def test_grad_accumulates_over_reuse():
    x = Tensor(np.array([1.5, -2.0]), requires_grad=True)
    with Tape() as tape:
        y = D.sum(D.add(D.mul(x, x), x))
    tape.backward(y)
    np.testing.assert_allclose(x.grad, 2 * x.data + 1)


def test_no_recording_without_tape_or_grad():
    x = Tensor(np.ones(3), requires_grad=True)
    y = D.mul(x, 2.0)
    assert not y.requires_grad
    with Tape() as tape:
        z = D.mul(Tensor(np.ones(3)), 2.0)
    assert len(tape) == 0 and not z.requires_grad


def test_backward_requires_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = D.mul(x, 2.0)
    with pytest.raises(ValueError, match="scalar"):
        tape.backward(y)


def test_shape_error_names_operands():
    with pytest.raises(ShapeError) as err:
        D.add(Tensor(np.ones((2, 3))), Tensor(np.ones((4,))))
    assert "(2, 3)" in str(err.value) and "(4,)" in str(err.value)
    with pytest.raises(ShapeError):
        D.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))


def test_custom_op_routes_gradients():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    with Tape() as tape:
        y = D.custom_op(x.data ** 3, (x,), lambda g: (3 * x.data**2 * g,))
        loss = D.sum(y)
    tape.backward(loss)
    np.testing.assert_allclose(x.grad, [3.0, 12.0])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_grad_check_reports_nonfinite_coordinate():
    with pytest.raises(FloatingPointError, match="coordinate"):
        grad_check(lambda t: D.sum(D.log(t)), Tensor(np.array([1.0, 5e-6])))


def test_grad_check_detects_wrong_gradient():
    def bad(t):
        return D.custom_op(np.sum(t.data**2), (t,), lambda g: (g * t.data,))  # should be 2x

    assert not grad_check(bad, Tensor(np.array([1.0, -2.0]))).passed


def test_paramset_helpers():
    ps = ParamSet(a=Tensor(np.ones((2, 3)), True), b=Tensor(np.zeros(4), True))
    assert ps.num_params() == 10
    clone = ps.copy()
    clone["a"].data[0, 0] = 7.0
    assert ps["a"].data[0, 0] == 1.0
    ps.load_(clone)
    assert ps["a"].data[0, 0] == 7.0


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (3, 3), elements=st.floats(-3, 3)))
def test_softmax_rows_sum_to_one(x):
    out = D.softmax(Tensor(x)).data
    np.testing.assert_allclose(out.sum(-1), 1.0)
    assert np.all(out > 0)


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (2, 3), elements=st.floats(-2, 2)), arrays(np.float64, (3, 2), elements=st.floats(-2, 2)))
def test_composite_gradient_property(a, b):
    rep = grad_check(lambda t: D.sum(D.sigmoid(D.matmul(D.tanh(t), b))), Tensor(a))
    assert rep.passed
