import numpy as np
import pytest

from bbfn.kernels import _numba, _numpy

BACKENDS = [_numpy, _numba]


def _gru_inputs(rng, N=3, T=5, h=4):
    gi = rng.normal(size=(N, T, 3 * h))
    U = rng.normal(size=(h, 3 * h)) * 0.5
    bh = rng.normal(size=3 * h) * 0.1
    mask = np.ones((N, T), dtype=bool)
    mask[1, 3:] = False
    mask[2, 1:] = False
    return gi, U, bh, mask


@pytest.mark.parametrize("reverse", [False, True])
def test_gru_backends_agree(rng, reverse):
    gi, U, bh, mask = _gru_inputs(rng)
    o1, s1 = _numpy.gru_scan_forward(gi, U, bh, mask, reverse)
    o2, s2 = _numba.gru_scan_forward(gi, U, bh, mask, reverse)
    np.testing.assert_allclose(o1, o2, rtol=1e-12, atol=1e-13)
    g = rng.normal(size=o1.shape)
    for a, b in zip(_numpy.gru_scan_backward(g, U, mask, reverse, s1), _numba.gru_scan_backward(g, U, mask, reverse, s2)):
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("kern", BACKENDS)
def test_gru_masked_steps_emit_zero(rng, kern):
    gi, U, bh, mask = _gru_inputs(rng)
    out, _ = kern.gru_scan_forward(gi, U, bh, mask, False)
    assert np.all(out[~mask] == 0)


@pytest.mark.parametrize("kern", BACKENDS)
def test_gru_reverse_starts_at_last_real_step(rng, kern):
    gi, U, bh, mask = _gru_inputs(rng)
    out, _ = kern.gru_scan_forward(gi, U, bh, mask, True)
    solo, _ = kern.gru_scan_forward(gi[1:2, :3], U, bh, np.ones((1, 3), bool), True)
    np.testing.assert_allclose(out[1, :3], solo[0], rtol=1e-12)


def test_layer_norm_backends_agree(rng):
    x = rng.normal(size=(7, 6))
    g, b = rng.normal(size=6), rng.normal(size=6)
    f1, f2 = _numpy.layer_norm_forward(x, g, b, 1e-5), _numba.layer_norm_forward(x, g, b, 1e-5)
    for a, c in zip(f1, f2):
        np.testing.assert_allclose(a, c, rtol=1e-12, atol=1e-13)
    dy = rng.normal(size=x.shape)
    for a, c in zip(_numpy.layer_norm_backward(dy, f1[1], f1[2], g), _numba.layer_norm_backward(dy, f2[1], f2[2], g)):
        np.testing.assert_allclose(a, c, rtol=1e-12, atol=1e-12)


def test_softmax_backends_agree(rng):
    x = rng.normal(size=(6, 5))
    m = rng.random((6, 5)) > 0.3
    m[:, 2] = True
    p1, p2 = _numpy.softmax_forward(x, m), _numba.softmax_forward(x, m)
    np.testing.assert_allclose(p1, p2, rtol=1e-13, atol=1e-15)
    g = rng.normal(size=x.shape)
    np.testing.assert_allclose(_numpy.softmax_backward(g, p1), _numba.softmax_backward(g, p2), rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("kern", BACKENDS)
def test_softmax_all_masked_row_raises(kern):
    with pytest.raises(ValueError):
        kern.softmax_forward(np.zeros((2, 3)), np.array([[True, True, True], [False, False, False]]))


def test_backend_selection_by_environment():
    import subprocess
    import sys

    code = "import bbfn.kernels as k; print(k.BACKEND)"
    for name in ("numpy", "numba"):
        out = subprocess.run([sys.executable, "-c", code], env={**__import__("os").environ, "BBFN_KERNELS": name},
                             capture_output=True, text=True, check=True)
        assert out.stdout.strip() == name
