"""numba twins of the kernels in ``_numpy``. Same signatures, same results up to rounding."""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _sig(x):
    return 0.5 * (1.0 + math.tanh(0.5 * x))


@njit(cache=True)
def _gru_forward(gi, U, bh, mask, reverse):
    N, T, h3 = gi.shape
    h = h3 // 3
    out = np.zeros((N, T, h), dtype=gi.dtype)
    Z = np.zeros((N, T, h), dtype=gi.dtype)
    R = np.zeros((N, T, h), dtype=gi.dtype)
    C = np.zeros((N, T, h), dtype=gi.dtype)
    An = np.zeros((N, T, h), dtype=gi.dtype)
    Hp = np.zeros((N, T, h), dtype=gi.dtype)
    hcur = np.zeros(h, dtype=gi.dtype)
    a = np.empty(h3, dtype=gi.dtype)
    for n in range(N):
        hcur[:] = 0.0
        for s in range(T):
            t = T - 1 - s if reverse else s
            if not mask[n, t]:
                continue
            for j in range(h3):
                acc = bh[j]
                for k in range(h):
                    acc += hcur[k] * U[k, j]
                a[j] = acc
            for j in range(h):
                z = _sig(gi[n, t, j] + a[j])
                r = _sig(gi[n, t, h + j] + a[h + j])
                c = math.tanh(gi[n, t, 2 * h + j] + r * a[2 * h + j])
                Z[n, t, j] = z
                R[n, t, j] = r
                C[n, t, j] = c
                An[n, t, j] = a[2 * h + j]
                Hp[n, t, j] = hcur[j]
            for j in range(h):
                hnew = (1.0 - Z[n, t, j]) * C[n, t, j] + Z[n, t, j] * hcur[j]
                out[n, t, j] = hnew
                hcur[j] = hnew
    return out, Z, R, C, An, Hp


@njit(cache=True)
def _gru_backward(dout, U, mask, reverse, Z, R, C, An, Hp):
    N, T, h = dout.shape
    h3 = 3 * h
    dgi = np.zeros((N, T, h3), dtype=dout.dtype)
    dU = np.zeros_like(U)
    dbh = np.zeros(h3, dtype=dout.dtype)
    dh = np.zeros(h, dtype=dout.dtype)
    da = np.empty(h3, dtype=dout.dtype)
    for n in range(N):
        dh[:] = 0.0
        for s in range(T):
            t = s if reverse else T - 1 - s
            if not mask[n, t]:
                continue
            for j in range(h):
                z = Z[n, t, j]
                r = R[n, t, j]
                c = C[n, t, j]
                dht = dh[j] + dout[n, t, j]
                dcp = dht * (1.0 - z) * (1.0 - c * c)
                dzp = dht * (Hp[n, t, j] - c) * z * (1.0 - z)
                drp = dcp * An[n, t, j] * r * (1.0 - r)
                da[j] = dzp
                da[h + j] = drp
                da[2 * h + j] = dcp * r
                dgi[n, t, j] = dzp
                dgi[n, t, h + j] = drp
                dgi[n, t, 2 * h + j] = dcp
                dh[j] = dht * z
            for k in range(h):
                hp = Hp[n, t, k]
                acc = 0.0
                for j in range(h3):
                    dU[k, j] += hp * da[j]
                    acc += da[j] * U[k, j]
                dh[k] += acc
            for j in range(h3):
                dbh[j] += da[j]
    return dgi, dU, dbh


def gru_scan_forward(gi, U, bh, mask, reverse):
    out, *saved = _gru_forward(gi, U, bh, np.ascontiguousarray(mask, dtype=np.bool_), bool(reverse))
    return out, tuple(saved)


def gru_scan_backward(dout, U, mask, reverse, saved):
    return _gru_backward(np.ascontiguousarray(dout), U,
                         np.ascontiguousarray(mask, dtype=np.bool_), bool(reverse), *saved)


@njit(cache=True)
def _ln_forward(x, gamma, beta, eps):
    rows, d = x.shape
    y = np.empty_like(x)
    xhat = np.empty_like(x)
    rstd = np.empty((rows, 1), dtype=x.dtype)
    for i in range(rows):
        mu = 0.0
        for j in range(d):
            mu += x[i, j]
        mu /= d
        var = 0.0
        for j in range(d):
            var += (x[i, j] - mu) ** 2
        var /= d
        rs = 1.0 / math.sqrt(var + eps)
        rstd[i, 0] = rs
        for j in range(d):
            xh = (x[i, j] - mu) * rs
            xhat[i, j] = xh
            y[i, j] = xh * gamma[j] + beta[j]
    return y, xhat, rstd


@njit(cache=True)
def _ln_backward(dy, xhat, rstd, gamma):
    rows, d = dy.shape
    dx = np.empty_like(dy)
    dgamma = np.zeros(d, dtype=dy.dtype)
    dbeta = np.zeros(d, dtype=dy.dtype)
    for i in range(rows):
        m1 = 0.0
        m2 = 0.0
        for j in range(d):
            g = dy[i, j] * gamma[j]
            m1 += g
            m2 += g * xhat[i, j]
            dgamma[j] += dy[i, j] * xhat[i, j]
            dbeta[j] += dy[i, j]
        m1 /= d
        m2 /= d
        for j in range(d):
            dx[i, j] = rstd[i, 0] * (dy[i, j] * gamma[j] - m1 - xhat[i, j] * m2)
    return dx, dgamma, dbeta


def layer_norm_forward(x, gamma, beta, eps):
    return _ln_forward(np.ascontiguousarray(x), gamma, beta, eps)


def layer_norm_backward(dy, xhat, rstd, gamma):
    return _ln_backward(np.ascontiguousarray(dy), xhat, rstd, gamma)


@njit(cache=True)
def _softmax_forward(x, mask):
    rows, cols = x.shape
    p = np.zeros_like(x)
    for i in range(rows):
        mx = -np.inf
        for j in range(cols):
            if mask[i, j] and x[i, j] > mx:
                mx = x[i, j]
        if mx == -np.inf:
            return p, i
        s = 0.0
        for j in range(cols):
            if mask[i, j] and x[i, j] > -np.inf:
                e = math.exp(x[i, j] - mx)
                p[i, j] = e
                s += e
        for j in range(cols):
            p[i, j] /= s
    return p, -1


@njit(cache=True)
def _softmax_backward(dp, p):
    rows, cols = p.shape
    dx = np.empty_like(p)
    for i in range(rows):
        s = 0.0
        for j in range(cols):
            s += dp[i, j] * p[i, j]
        for j in range(cols):
            dx[i, j] = p[i, j] * (dp[i, j] - s)
    return dx


def softmax_forward(x, mask):
    p, bad = _softmax_forward(np.ascontiguousarray(x), np.ascontiguousarray(mask, dtype=np.bool_))
    if bad >= 0:
        raise ValueError("softmax row has no unmasked entries")
    return p


def softmax_backward(dp, p):
    return _softmax_backward(np.ascontiguousarray(dp), p)
