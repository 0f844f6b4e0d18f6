import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from carlemanlab.errors import StepTooLarge
from carlemanlab.jets import Jet2, convergence_order, fd_gradient, fd_hessian, fd_jet, scaled_steps


def cubic(x):
    return x[0] ** 3 - 2 * x[0] * x[1] + 0.5 * x[1] ** 2 * x[2]


def cubic_grad(x):
    return np.array([3 * x[0] ** 2 - 2 * x[1], -2 * x[0] + x[1] * x[2], 0.5 * x[1] ** 2])


def test_jet_rejects_unknown_source():
    with pytest.raises(ValueError):
        Jet2(np.zeros(1), np.zeros((2, 1)), np.zeros((2, 2, 1)), source="guess")


def test_scaled_steps_respect_magnitude():
    x = np.array([0.5, -20.0, 3.0])
    np.testing.assert_allclose(scaled_steps(x, 1e-3), [1e-3, 2e-2, 3e-3])


@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_gradient_exact_on_cubics(vals):
    x = np.array(vals)
    d, err = fd_gradient(cubic, x)
    np.testing.assert_allclose(d, cubic_grad(x), atol=1e-8)
    assert np.all(err >= 0)


def test_hessian_symmetric_and_exact():
    x = np.array([[0.3, 1.2], [-0.4, 2.0], [1.1, -0.5]])
    d2, _ = fd_hessian(cubic, x)
    np.testing.assert_array_equal(d2, np.swapaxes(d2, 0, 1))
    expect = np.zeros((3, 3, 2))
    expect[0, 0] = 6 * x[0]
    expect[0, 1] = expect[1, 0] = -2
    expect[1, 1] = x[2]
    expect[1, 2] = expect[2, 1] = x[1]
    np.testing.assert_allclose(d2, expect, atol=1e-7)


def test_fd_jet_carries_error_estimate():
    jet = fd_jet(lambda y: np.sin(y[0]) * y[1], np.full((2, 1), 0.4))
    assert jet.source == "finite-difference"
    np.testing.assert_allclose(jet.d1[:, 0], [np.cos(0.4) * 0.4, np.sin(0.4)], atol=1e-9)
    assert set(jet.error) == {"d1", "d2"}


def test_invalid_stencil_raises():
    x = np.array([0.0, 1.0])
    with pytest.raises(StepTooLarge):
        fd_gradient(lambda y: y[0] ** 2, x, step=1e-2, valid=lambda y: y[0] >= 0)


@pytest.mark.parametrize("richardson", [False, True])
def test_fourth_order_convergence(richardson):
    x = np.array([0.7])
    steps = np.array([4e-2, 2e-2, 1e-2])
    errs = [abs(fd_gradient(lambda y: np.exp(y[0]), x, step=h, richardson=False)[0][0] - np.exp(0.7)) for h in steps]
    order = convergence_order(steps, errs)
    assert order == pytest.approx(4.0, abs=0.2)
    if richardson:
        d, _ = fd_gradient(lambda y: np.exp(y[0]), x, step=1e-2, richardson=True)
        assert abs(d[0] - np.exp(0.7)) < min(errs)
