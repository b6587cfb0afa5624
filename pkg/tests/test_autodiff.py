import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from abcgan import autodiff as ad
from abcgan.autodiff import Parameter, ShapeError, Tape, TapeError

from conftest import away_from_zero

N_INSTANCES = 20
TOL = 1e-5


def _shapes(rng):
    return int(rng.integers(1, 5)), int(rng.integers(1, 5))


# Each builder returns (params, loss_fn) for one random instance.  Losses
# reduce through a fixed random weighting so every output entry matters.

def _weighted(out, w):
    return ad.sum(ad.multiply(out, w))


def _unary(op, positive=False):
    def build(rng):
        shape = _shapes(rng)
        x = np.abs(away_from_zero(rng, shape)) + 0.1 if positive else away_from_zero(rng, shape)
        p = Parameter(x)
        w = rng.standard_normal(shape)
        return [p], lambda: _weighted(op(p.var()), w)
    return build


def _binary(op, broadcast=False):
    def build(rng):
        shape = _shapes(rng)
        a = Parameter(rng.standard_normal(shape))
        b = Parameter(rng.standard_normal((1, shape[1]) if broadcast else shape))
        w = rng.standard_normal(shape)
        return [a, b], lambda: _weighted(op(a.var(), b.var()), w)
    return build


def _matmul(rng):
    n, k = _shapes(rng)
    m = int(rng.integers(1, 5))
    a, b = Parameter(rng.standard_normal((n, k))), Parameter(rng.standard_normal((k, m)))
    w = rng.standard_normal((n, m))
    return [a, b], lambda: _weighted(ad.matmul(a.var(), b.var()), w)


def _reduce(op, axis):
    def build(rng):
        shape = _shapes(rng)
        p = Parameter(rng.standard_normal(shape))
        w = rng.standard_normal(shape[1 - axis] if axis is not None else ())
        return [p], lambda: ad.sum(ad.multiply(op(p.var(), axis=axis), w))
    return build


def _concat(rng):
    n, k = _shapes(rng)
    a, b = Parameter(rng.standard_normal((n, k))), Parameter(rng.standard_normal((n, 2)))
    w = rng.standard_normal((n, k + 2))
    return [a, b], lambda: _weighted(ad.concat([a.var(), b.var()], axis=1), w)


def _slice(rng):
    n, k = int(rng.integers(2, 6)), int(rng.integers(1, 4))
    p = Parameter(rng.standard_normal((n, k)))
    lo = int(rng.integers(0, n - 1))
    w = rng.standard_normal((n - lo - 1, k))
    return [p], lambda: _weighted(ad.slice(p.var(), 0, lo, n - 1), w)


def _l2norm(rng):
    shape = _shapes(rng)
    p = Parameter(rng.standard_normal(shape) + 0.5)
    w = rng.standard_normal(shape[0])
    return [p], lambda: ad.sum(ad.multiply(ad.l2norm_rows(p.var()), w))


def _sqdist(rng):
    m, n, d = (int(v) for v in rng.integers(1, 5, size=3))
    x, y = Parameter(rng.standard_normal((m, d))), Parameter(rng.standard_normal((n, d)))
    w = rng.standard_normal((m, n))
    return [x, y], lambda: _weighted(ad.sqdist(x.var(), y.var()), w)


def _reshape(rng):
    n, k = _shapes(rng)
    p = Parameter(rng.standard_normal((n, k)))
    w = rng.standard_normal(n * k)
    return [p], lambda: _weighted(ad.reshape(p.var(), (n * k,)), w)


def _scale(rng):
    shape = _shapes(rng)
    p, c = Parameter(rng.standard_normal(shape)), float(rng.standard_normal())
    w = rng.standard_normal(shape)
    return [p], lambda: _weighted(ad.scale(p.var(), c), w)


OPS = {
    "add": _binary(ad.add),
    "add_broadcast": _binary(ad.add, broadcast=True),
    "subtract": _binary(ad.subtract),
    "multiply": _binary(ad.multiply),
    "multiply_broadcast": _binary(ad.multiply, broadcast=True),
    "scale": _scale,
    "matmul": _matmul,
    "sigmoid": _unary(ad.sigmoid),
    "relu": _unary(ad.relu),
    "tanh": _unary(ad.tanh),
    "exp": _unary(ad.exp),
    "square": _unary(ad.square),
    "sqrt": _unary(ad.sqrt, positive=True),
    "sum_all": _reduce(ad.sum, None),
    "sum_axis0": _reduce(ad.sum, 0),
    "sum_axis1": _reduce(ad.sum, 1),
    "mean_axis0": _reduce(ad.mean, 0),
    "mean_all": _reduce(ad.mean, None),
    "concat": _concat,
    "slice": _slice,
    "reshape": _reshape,
    "l2norm_rows": _l2norm,
    "sqdist": _sqdist,
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_gradcheck_every_op(name):
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    worst = max(ad.gradcheck(loss, params) for params, loss in
                (OPS[name](rng) for _ in range(N_INSTANCES)))
    assert worst <= TOL


def test_sigmoid_at_zero():
    p = Parameter(np.zeros(1))
    with Tape():
        out = ad.sigmoid(p.var())
        ad.backward(ad.sum(out))
    assert out.value[0] == 0.5
    assert p.grad[0] == 0.25


def test_relu_negative_has_zero_value_and_grad():
    p = Parameter(np.array([-2.0]))
    with Tape():
        out = ad.relu(p.var())
        ad.backward(ad.sum(out))
    assert out.value[0] == 0.0 and p.grad[0] == 0.0


@given(hnp.arrays(np.float64, st.tuples(st.just(3), st.integers(1, 4)),
                  elements=st.floats(-1e3, 1e3)))
def test_identity_matmul(x):
    assert np.array_equal(ad.matmul(np.eye(3), x).value, x)


def test_sigmoid_is_stable_for_large_inputs():
    out = ad.sigmoid(np.array([-800.0, 800.0])).value
    assert np.all(np.isfinite(out)) and out[0] == 0.0 and out[1] == 1.0


def test_shape_error_names_op_and_shapes():
    with pytest.raises(ShapeError, match=r"matmul.*\(2, 3\).*\(2, 3\)"):
        ad.matmul(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(ShapeError, match="add"):
        ad.add(np.ones((2, 3)), np.ones((3, 2)))


def test_backward_accumulates_and_zero_grad_resets():
    p = Parameter(np.array([1.0, 2.0]))
    for _ in range(2):
        with Tape():
            ad.backward(ad.sum(ad.square(p.var())))
    np.testing.assert_array_equal(p.grad, [4.0, 8.0])
    ad.zero_grad([p])
    assert not p.grad.any()


def test_parameter_used_twice_sums_gradients():
    p = Parameter(np.array([3.0]))
    with Tape():
        v = p.var()
        ad.backward(ad.sum(ad.multiply(v, v)))
    assert p.grad[0] == pytest.approx(6.0)


def test_backward_rejects_non_scalar_and_constant_roots():
    p = Parameter(np.ones(3))
    with Tape():
        with pytest.raises(TapeError, match="scalar"):
            ad.backward(ad.square(p.var()))
        with pytest.raises(TapeError):
            ad.backward(ad.sum(ad.constant(np.ones(3))))


def test_backward_after_tape_cleared_fails():
    p = Parameter(np.ones(2))
    with Tape() as tape:
        root = ad.sum(p.var())
    tape.clear()
    with pytest.raises(TapeError):
        ad.backward(root)


def test_tape_is_topologically_ordered():
    p = Parameter(np.ones((2, 2)))
    with Tape() as tape:
        ad.sum(ad.tanh(ad.matmul(p.var(), p.var())))
    index = {id(n): k for k, n in enumerate(tape.nodes)}
    for k, node in enumerate(tape.nodes):
        assert all(index[id(par)] < k for par in node.parents if id(par) in index)


def test_detach_blocks_gradient():
    p = Parameter(np.array([2.0]))
    with Tape():
        v = p.var()
        ad.backward(ad.sum(ad.add(ad.detach(ad.square(v)), v)))
    assert p.grad[0] == 1.0


def test_frozen_parameters_get_no_gradient():
    a, b = Parameter(np.array([1.0])), Parameter(np.array([2.0]))
    with Tape(), ad.frozen([b]):
        ad.backward(ad.sum(ad.multiply(a.var(), b.var())))
    assert a.grad[0] == 2.0 and b.grad[0] == 0.0
    assert not b.frozen


def test_is_finite_detects_nan_and_inf():
    assert ad.is_finite(np.ones(3))
    assert not ad.is_finite(np.array([1.0, np.nan]))
    assert not ad.is_finite(np.array([np.inf]))


# ----------------------------------------------------------------- RMSProp

def test_rmsprop_first_step_hand_computed():
    # state = 0.1 * g^2 -> step = lr * g / (sqrt(0.1) |g| + eps)
    p = Parameter(np.array([1.0, -2.0]))
    p.grad[:] = [0.5, -4.0]
    ad.rmsprop_step(p, lr=0.01, decay=0.9, eps=1e-8)
    expected = np.array([1.0, -2.0]) - 0.01 * np.array([0.5, -4.0]) / (np.sqrt(0.1 * np.array([0.25, 16.0])) + 1e-8)
    np.testing.assert_allclose(p.value, expected, rtol=1e-15)
    np.testing.assert_allclose(p.state, [0.025, 1.6])
    assert not p.grad.any()


def test_rmsprop_zero_gradient_leaves_value():
    p = Parameter(np.array([1.5]))
    ad.rmsprop_step(p, lr=0.1, eps=0.0)
    assert p.value[0] == 1.5


def test_rmsprop_rejects_nonfinite_gradient():
    p = Parameter(np.zeros(2), name="w")
    p.grad[0] = np.nan
    with pytest.raises(ad.NonFiniteGradient, match="w"):
        ad.rmsprop_step(p, lr=0.1)


def test_rmsprop_minimizes_quadratic():
    p = Parameter(np.array([3.0, -2.0]))
    opt = ad.RMSProp([p], lr=0.05)
    for _ in range(500):
        with Tape():
            ad.backward(ad.sum(ad.square(p.var())))
        opt.step()
    assert np.all(np.abs(p.value) < 0.1)


@settings(max_examples=50)
@given(hnp.arrays(np.float64, 4, elements=st.floats(-1e3, 1e3)),
       st.integers(1, 10))
def test_rmsprop_state_stays_nonnegative(g, steps):
    p = Parameter(np.zeros(4))
    for _ in range(steps):
        p.grad[:] = g
        ad.rmsprop_step(p, lr=1e-3)
    assert np.all(p.state >= 0)
    assert p.state.shape == p.value.shape == p.grad.shape


def test_rmsprop_rejects_bad_hyperparameters():
    with pytest.raises(ValueError):
        ad.RMSProp([], lr=0.0)
    with pytest.raises(ValueError):
        ad.RMSProp([], decay=1.0)
