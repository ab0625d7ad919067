"""Elementwise maps, reductions, and shape guards."""

import numpy as np
import pytest

from typedrnn.linalg import (
    ShapeError,
    complement,
    coordwise,
    coordwise_bin,
    matvec,
    relu,
    sigmoid,
    softmax,
    spectral_norm,
)


def test_sigmoid_matches_logistic_on_moderate_inputs():
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = rng.uniform(-20.0, 20.0, size=17)
        ref = 1.0 / (1.0 + np.exp(-x))
        assert np.max(np.abs(sigmoid(x) - ref)) < 1e-15


def test_sigmoid_saturates_without_overflow():
    with np.errstate(over="raise"):
        big = sigmoid(np.array([-1e6, -800.0, 800.0, 1e6]))
    assert np.array_equal(big, [0.0, 0.0, 1.0, 1.0])


def test_sigmoid_symmetry_within_one_ulp():
    rng = np.random.default_rng(1)
    x = rng.uniform(-30.0, 30.0, size=200)
    gap = np.abs(sigmoid(-x) - (1.0 - sigmoid(x)))
    assert gap.max() <= np.finfo(np.float64).eps / 2


def test_relu_and_complement():
    x = np.array([-2.0, 0.0, 3.5])
    assert np.array_equal(relu(x), [0.0, 0.0, 3.5])
    assert np.array_equal(complement(x), [3.0, 1.0, -2.5])


def test_softmax_rows_sum_to_one_and_shift_invariant():
    rng = np.random.default_rng(2)
    x = rng.uniform(-5.0, 5.0, size=(4, 9))
    p = softmax(x)
    assert np.max(np.abs(p.sum(axis=-1) - 1.0)) < 1e-12
    q = softmax(x + 123.0)
    assert np.max(np.abs(p - q)) < 1e-12
    assert np.all(softmax(np.array([0.0, 1000.0])) == [0.0, 1.0])


def test_matvec_shapes():
    m = np.ones((3, 2))
    assert np.array_equal(matvec(m, np.array([1.0, 2.0])), [3.0, 3.0, 3.0])
    with pytest.raises(ShapeError):
        matvec(m, np.ones(3))
    with pytest.raises(ShapeError):
        matvec(np.ones(3), np.ones(3))


def test_coordwise_tags():
    v = np.array([-1.0, 0.5])
    assert np.array_equal(coordwise("relu", v), [0.0, 0.5])
    assert np.array_equal(coordwise("complement", v), [2.0, 0.5])
    assert np.array_equal(coordwise("scale", v, a=2.0), [-2.0, 1.0])
    assert np.allclose(coordwise("tanh", v), np.tanh(v))
    with pytest.raises(ValueError):
        coordwise("scale", v)
    with pytest.raises(ValueError):
        coordwise("exp", v)


def test_coordwise_bin():
    u = np.array([1.0, -2.0])
    v = np.array([3.0, 5.0])
    assert np.array_equal(coordwise_bin("+", u, v), [4.0, 3.0])
    assert np.array_equal(coordwise_bin("-", u, v), [-2.0, -7.0])
    assert np.array_equal(coordwise_bin("max", u, v), [3.0, 5.0])
    assert np.array_equal(coordwise_bin("min", u, v), [1.0, -2.0])
    assert np.array_equal(coordwise_bin("mul", u, v), [3.0, -10.0])
    with pytest.raises(ShapeError):
        coordwise_bin("+", u, np.ones(3))
    with pytest.raises(ValueError):
        coordwise_bin("/", u, v)


def test_spectral_norm_against_svd():
    assert spectral_norm(np.diag([3.0, -1.0])) == pytest.approx(3.0)
    rng = np.random.default_rng(3)
    for _ in range(5):
        m = rng.standard_normal((6, 4))
        assert spectral_norm(m) == pytest.approx(np.linalg.svd(m)[1][0])
