import numpy as np
import pytest

from bbfn import tensor as T
from bbfn.gradcheck import finite_diff_check, relative_error
from bbfn.optim import Adam, AdamState, adam_step
from bbfn.tensor import Tensor


def _p(v):
    return Tensor(np.asarray(v, dtype=np.float64), requires_grad=True)


def test_zero_gradient_is_a_fixed_point():
    p = _p([1.0, -2.0])
    st = AdamState(lr=0.1)
    for _ in range(5):
        adam_step({"p": p}, {"p": np.zeros(2)}, st)
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_constant_gradient_moves_against_sign():
    p = _p([0.0, 0.0])
    st = AdamState(lr=0.01)
    for _ in range(50):
        adam_step({"p": p}, {"p": np.array([2.0, -0.5])}, st)
    assert p.data[0] < 0 < p.data[1]


def test_single_step_size_matches_hand_evaluation():
    p = _p([0.0])
    adam_step({"p": p}, {"p": np.array([1.0])}, AdamState(lr=0.1))
    # m_hat = 1, v_hat = 1 -> step = lr / (1 + eps)
    assert p.data[0] == pytest.approx(-0.1 / (1 + 1e-8), rel=1e-12)


def test_adam_reference_recurrence(rng):
    p = _p(rng.normal(size=3))
    opt = Adam({"p": p}, lr=0.05, betas=(0.8, 0.95), eps=1e-6)
    theta, m, v = p.data.copy(), np.zeros(3), np.zeros(3)
    for t in range(1, 6):
        g = rng.normal(size=3)
        p.grad = g
        opt.step()
        m = 0.8 * m + 0.2 * g
        v = 0.95 * v + 0.05 * g * g
        theta = theta - 0.05 * (m / (1 - 0.8 ** t)) / (np.sqrt(v / (1 - 0.95 ** t)) + 1e-6)
    np.testing.assert_allclose(p.data, theta, rtol=1e-12)


def test_adam_skips_missing_grads_and_keeps_dtype():
    a = Tensor(np.ones(2, dtype=np.float32), requires_grad=True)
    b = _p([1.0])
    opt = Adam({"a": a, "b": b}, lr=0.1)
    a.grad = np.ones(2, dtype=np.float32)
    opt.step()
    assert a.dtype == np.float32 and a.data[0] < 1
    assert b.data[0] == 1.0
    with pytest.raises(ValueError):
        adam_step({"a": a}, {"a": np.ones(3)}, AdamState())


def test_quadratic_form_is_exact(rng):
    A = rng.normal(size=(4, 4))
    x = _p(rng.normal(size=(4, 1)))
    rep = finite_diff_check(lambda: T.sum_(x * T.matmul(Tensor(A), x)), [x], tol=1e-8)
    assert rep.max_rel_error < 1e-8, rep


def test_gradcheck_detects_a_wrong_gradient():
    x = _p([0.3, -0.7])

    def broken():
        y = T.tanh(x)
        # wrong backward: claims d/dx = 1
        return T.sum_(T._result(y.data, (x,), lambda g: (g,)))

    rep = finite_diff_check(broken, [x], tol=1e-4)
    assert not rep.passed
    assert "FAIL" in str(rep)


def test_relative_error_floor():
    np.testing.assert_allclose(relative_error(np.array([1e-9]), np.array([0.0])), [1e-3])
    np.testing.assert_allclose(relative_error(np.array([2.0]), np.array([1.0])), [0.5])


def test_sampled_coordinates(rng):
    x = _p(rng.normal(size=(10, 10)))
    rep = finite_diff_check(lambda: T.sum_(T.tanh(x)), {"x": x}, max_entries=7, rng=rng)
    assert rep.entries_checked == 7 and rep.passed


def test_directional_check(rng):
    from bbfn.gradcheck import directional_check

    a, b = _p(rng.normal(size=(3, 2))), _p(rng.normal(size=4))
    good = directional_check(lambda: T.sum_(T.tanh(a)) * T.sum_(b * b), {"a": a, "b": b}, tol=1e-6)
    assert good.passed, good
    x = _p(rng.normal(size=5))
    bad = directional_check(lambda: T.sum_(T._result(np.tanh(x.data), (x,), lambda g: (2 * g,))), {"x": x})
    assert not bad.passed
