"""Finite-difference suite over every differentiable op and the full model."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .complementation import GCTLayer, MultiHeadAttention, gated_cross_attention, pool_sequence, separator_loss
from .data import SyntheticGenSpec, generate, make_batches
from .encoders import SequenceEncoder
from .gradcheck import GradCheckReport, directional_check, finite_diff_check
from .model import BBFN, ModelConfig
from .nn import LayerNorm
from .rng import make_rng

OP_TOL = 1e-4
MODEL_TOL = 1e-3


def _leaf(rng, *shape, name=None, scale=1.0):
    return T.Tensor(rng.normal(size=shape) * scale, requires_grad=True, name=name)


def _f64(module):
    return module.to(np.float64)


def op_checks(seed: int = 0) -> list[tuple[str, GradCheckReport]]:
    rng = make_rng(seed, "gradcheck-ops")
    out = []

    def run(name, f, params):
        out.append((name, finite_diff_check(f, params, tol=OP_TOL)))

    a, b = _leaf(rng, 3, 4, name="a"), _leaf(rng, 4, 2, name="b")
    w = rng.normal(size=(3, 2))
    run("matmul", lambda: T.sum_(T.matmul(a, b) * w), [a, b])

    xa, xb = _leaf(rng, 2, 3, 4, name="xa"), _leaf(rng, 2, 4, 5, name="xb")
    w3 = rng.normal(size=(2, 3, 5))
    run("matmul_batched", lambda: T.sum_(T.matmul(xa, xb) * w3), [xa, xb])

    x, y, v = _leaf(rng, 3, 5, name="x"), _leaf(rng, 3, 5, name="y"), _leaf(rng, 5, name="v")
    we = rng.normal(size=(3, 5))
    for kind in ("sigmoid", "tanh", "relu"):
        run(kind, lambda k=kind: T.sum_(T.elementwise(k, x) * we), [x])
    run("add_sub_mul", lambda: T.sum_((T.elementwise("mul", x, y) + v - x * v) * we), [x, y, v])
    pos = T.Tensor(rng.uniform(0.2, 2.0, size=(3, 5)), requires_grad=True, name="pos")
    run("log_exp", lambda: T.sum_(T.log(pos) * we + T.exp(pos * 0.3)), [pos])

    s = _leaf(rng, 2, 3, 5, name="s")
    mask = rng.random((2, 3, 5)) > 0.3
    mask[..., 0] = True
    ws = rng.normal(size=(2, 3, 5))
    run("softmax_lastdim", lambda: T.sum_(T.softmax_lastdim(s, mask) * ws), [s])

    z = _leaf(rng, 5, name="z")
    labels = (rng.random(5) > 0.5).astype(float)

    def softmax_bce():
        p = T.softmax_lastdim(T.reshape(z, (1, 5)))
        return separator_loss(T.reshape(p, (5,)) * 2.0, labels)

    run("softmax_bce", softmax_bce, [z])

    ln = _f64(LayerNorm(6))
    ln.gamma.data = rng.normal(size=6)
    ln.beta.data = rng.normal(size=6)
    xl = _leaf(rng, 4, 6, name="x")
    wl = rng.normal(size=(4, 6))
    run("layer_norm", lambda: T.sum_(ln(xl) * wl), {"x": xl, **ln.parameters()})

    enc = _f64(SequenceEncoder(3, 4, 2, rng))
    xs = _leaf(rng, 2, 4, 3, name="x")
    m = np.ones((2, 4), dtype=bool)
    m[1, 3] = False
    wg = rng.normal(size=(2, 4, 4))
    run("bigru", lambda: T.sum_(enc(xs, m) * wg), {"x": xs, **enc.parameters()})
    wp = rng.normal(size=(2, 4))
    run("pool_bigru", lambda: T.sum_(pool_sequence(xs, m, enc) * wp), {"x": xs, **enc.parameters()})

    attn = _f64(MultiHeadAttention(4, 2, rng))
    lnq = _f64(LayerNorm(4))
    xm, xc = _leaf(rng, 1, 3, 4, name="main"), _leaf(rng, 1, 3, 4, name="comp")
    gr = T.Tensor(rng.uniform(0.1, 0.9, size=(1, 4)), requires_grad=True, name="g_r")
    gc = T.Tensor(rng.uniform(0.1, 0.9, size=(1, 4)), requires_grad=True, name="g_c")
    wa = rng.normal(size=(1, 3, 4))

    run("gated_cross_attention",
        lambda: T.sum_(gated_cross_attention(xm, xc, None, attn, gr, gc, lnq) * wa),
        {"main": xm, "comp": xc, "g_r": gr, "g_c": gc, **attn.parameters(), **lnq.parameters()})

    layer = _f64(GCTLayer(4, 2, 8, 2, rng))
    x1, x2 = _leaf(rng, 2, 3, 4, name="x1"), _leaf(rng, 2, 3, 4, name="x2")
    t1, t2 = rng.normal(size=(2, 3, 4)), rng.normal(size=(2, 3, 4))
    mm = np.ones((2, 3), dtype=bool)

    def gct_mse():
        o = layer.forward(x1, x2, mm, mm, 2)
        d1, d2 = o.x1 - t1, o.x2 - t2
        return T.mean(d1 * d1) + T.mean(d2 * d2) + o.sep_loss * 0.5

    run("gct_layer_mse", gct_mse, {"x1": x1, "x2": x2, **layer.parameters()})
    return out


def tiny_setup(seed: int = 0, dtype=np.float64):
    """2 samples, T=4, d=8, L=2, K=2, lambda=0.5, modules {TV, TA}."""
    spec = SyntheticGenSpec(seed=seed, n_min=2, n_max=2, dims={"t": 3, "v": 3, "a": 3})
    batch = next(make_batches(generate(spec, 2), 2))
    cfg = ModelConfig(modules=("TV", "TA"), d=8, layers=2, group_size=2, lam=0.5,
                      inputs={m: {"dim": 3, "source": "features"} for m in "tva"})
    return BBFN(cfg, seed=seed).to(dtype), batch


def model_check(seed: int = 0, max_entries: int | None = 8) -> GradCheckReport:
    """Full-model check. Every parameter tensor is probed; ``max_entries``
    caps the coordinates per tensor (None probes all of them)."""
    model, batch = tiny_setup(seed)
    return finite_diff_check(lambda: model.loss(model(batch))[0], model.parameters(), tol=MODEL_TOL,
                             max_entries=max_entries, rng=make_rng(seed, "gradcheck-sample"))


def model_directional_check(seed: int = 0, directions: int = 16) -> GradCheckReport:
    """Random whole-gradient directions; complements the sampled coordinates."""
    model, batch = tiny_setup(seed)
    return directional_check(lambda: model.loss(model(batch))[0], model.parameters(), tol=MODEL_TOL,
                             directions=directions, rng=make_rng(seed, "gradcheck-direction"))


def run_suite(seed: int = 0, max_entries: int | None = 8) -> list[tuple[str, GradCheckReport]]:
    return op_checks(seed) + [("full_model", model_check(seed, max_entries)),
                              ("full_model_directional", model_directional_check(seed))]
