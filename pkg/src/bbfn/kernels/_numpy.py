"""Vectorised numpy kernels. Reference path and fallback for the numba twins."""

import numpy as np


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def gru_scan_forward(gi, U, bh, mask, reverse):
    """Run one GRU direction over precomputed input projections.

    gi is [N, T, 3h] holding x @ W_ih + b_ih in gate order (update, reset,
    candidate). Masked steps leave the hidden state untouched and emit zeros.
    Returns the outputs and the saved activations the backward pass needs.
    """
    N, T, h3 = gi.shape
    h = h3 // 3
    dt = gi.dtype
    out = np.zeros((N, T, h), dtype=dt)
    Z = np.zeros((N, T, h), dtype=dt)
    R = np.zeros((N, T, h), dtype=dt)
    C = np.zeros((N, T, h), dtype=dt)
    An = np.zeros((N, T, h), dtype=dt)
    Hp = np.zeros((N, T, h), dtype=dt)
    hcur = np.zeros((N, h), dtype=dt)
    steps = range(T - 1, -1, -1) if reverse else range(T)
    for t in steps:
        a = hcur @ U + bh
        g = gi[:, t]
        z = _sigmoid(g[:, :h] + a[:, :h])
        r = _sigmoid(g[:, h:2 * h] + a[:, h:2 * h])
        an = a[:, 2 * h:]
        c = np.tanh(g[:, 2 * h:] + r * an)
        hnew = (1 - z) * c + z * hcur
        m = mask[:, t, None]
        Z[:, t], R[:, t], C[:, t], An[:, t], Hp[:, t] = z, r, c, an, hcur
        out[:, t] = np.where(m, hnew, 0)
        hcur = np.where(m, hnew, hcur)
    return out, (Z, R, C, An, Hp)


def gru_scan_backward(dout, U, mask, reverse, saved):
    Z, R, C, An, Hp = saved
    N, T, h = dout.shape
    dt = dout.dtype
    dgi = np.zeros((N, T, 3 * h), dtype=dt)
    dU = np.zeros_like(U)
    dbh = np.zeros(3 * h, dtype=dt)
    dh = np.zeros((N, h), dtype=dt)
    steps = range(T) if reverse else range(T - 1, -1, -1)
    for t in steps:
        m = mask[:, t, None]
        z, r, c, an, hp = Z[:, t], R[:, t], C[:, t], An[:, t], Hp[:, t]
        dht = dh + dout[:, t]
        dc = dht * (1 - z)
        dz = dht * (hp - c)
        dcp = dc * (1 - c * c)
        dzp = dz * z * (1 - z)
        drp = dcp * an * r * (1 - r)
        da = np.concatenate([dzp, drp, dcp * r], axis=1) * m
        dgi[:, t] = np.concatenate([dzp, drp, dcp], axis=1) * m
        dU += hp.T @ da
        dbh += da.sum(axis=0)
        dh = np.where(m, dht * z + da @ U.T, dh)
    return dgi, dU, dbh


def layer_norm_forward(x, gamma, beta, eps):
    """Row-wise layer norm of a 2-D array."""
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    return xhat * gamma + beta, xhat, rstd


def layer_norm_backward(dy, xhat, rstd, gamma):
    dxhat = dy * gamma
    dx = rstd * (dxhat - dxhat.mean(axis=1, keepdims=True)
                 - xhat * (dxhat * xhat).mean(axis=1, keepdims=True))
    return dx, (dy * xhat).sum(axis=0), dy.sum(axis=0)


def softmax_forward(x, mask):
    """Row softmax of a 2-D array restricted to ``mask``; masked entries get 0."""
    live = mask & (x > -np.inf)
    if not live.any(axis=1).all():
        raise ValueError("softmax row has no unmasked entries")
    xm = np.where(live, x, -np.inf)
    mx = xm.max(axis=1, keepdims=True)
    e = np.where(live, np.exp(np.where(live, x - mx, 0)), 0)
    return e / e.sum(axis=1, keepdims=True)


def softmax_backward(dp, p):
    return p * (dp - (dp * p).sum(axis=1, keepdims=True))
