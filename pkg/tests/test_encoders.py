import numpy as np
import pytest

from bbfn import tensor as T
from bbfn.encoders import (HEAD_ID, TAIL_ID, AlignmentError, BiGRU, ModalityEncoder, ModalitySpec, bigru, embed,
                           encode_modality, encode_sample)
from bbfn.gradcheck import finite_diff_check
from bbfn.tensor import Tensor


def _zero(module):
    for p in module.parameters().values():
        p.data[...] = 0.0
    return module


def test_embed_empty_and_single_token(rng):
    table = Tensor(rng.normal(size=(7, 3)))
    out = embed([], table)
    np.testing.assert_array_equal(out.data, table.data[[HEAD_ID, TAIL_ID]])
    out = embed([5], table)
    np.testing.assert_array_equal(out.data, table.data[[HEAD_ID, 5, TAIL_ID]])


def test_feature_source_passes_rows_through(rng):
    enc = ModalityEncoder(ModalitySpec("t", 5), 4, 3, rng)
    x = rng.normal(size=(1, 6, 5))
    np.testing.assert_array_equal(enc.inputs(x).data, x)


def test_bigru_zero_fixed_point(rng):
    g = _zero(BiGRU(3, 4, rng))
    out = bigru(Tensor(np.zeros((6, 3))), g)
    assert out.shape == (6, 8)
    np.testing.assert_array_equal(out.data, 0.0)


def test_bigru_single_step_is_two_independent_cells(rng):
    g = BiGRU(3, 4, rng)
    x = rng.normal(size=(1, 3))

    def cell(d):
        gi = x @ d.w_ih.data + d.b_ih.data
        gh = d.b_hh.data  # h0 = 0
        h = 4
        z = 1 / (1 + np.exp(-(gi[:, :h] + gh[:h])))
        r = 1 / (1 + np.exp(-(gi[:, h:2 * h] + gh[h:2 * h])))
        c = np.tanh(gi[:, 2 * h:] + r * gh[2 * h:])
        return (1 - z) * c

    out = g(Tensor(x))
    np.testing.assert_allclose(out.data, np.hstack([cell(g.fwd), cell(g.bwd)]), rtol=1e-12)


def test_bigru_gradient(rng):
    g = BiGRU(3, 2, rng)
    x = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    w = rng.normal(size=(4, 4))
    rep = finite_diff_check(lambda: T.sum_(g(x) * w), {"x": x, **g.parameters()}, tol=1e-4)
    assert rep.passed, rep


def test_bigru_forward_direction_is_causal(rng):
    g = BiGRU(2, 3, rng)
    x = rng.normal(size=(5, 2))
    y = x.copy()
    y[3:] += 1.0
    a, b = g(Tensor(x)).data, g(Tensor(y)).data
    np.testing.assert_array_equal(a[:3, :3], b[:3, :3])
    assert not np.allclose(a[:3, 3:], b[:3, 3:])


def test_padding_does_not_change_real_steps(rng):
    g = BiGRU(2, 3, rng)
    x = rng.normal(size=(1, 4, 2))
    padded = np.concatenate([x, rng.normal(size=(1, 2, 2))], axis=1)
    mask = np.array([[True] * 4 + [False] * 2])
    np.testing.assert_allclose(g(Tensor(padded), mask).data[:, :4], g(Tensor(x)).data, rtol=1e-12)


@pytest.mark.parametrize("dm", [47, 35, 74, 75])
def test_output_width_is_config_width(rng, dm):
    enc = ModalityEncoder(ModalitySpec("a", dm), 8, 4, rng)
    out = encode_modality(enc, rng.normal(size=(5, dm)))
    assert out.shape == (5, 8)


def test_zero_projection_with_bias_gives_bias_rows(rng):
    enc = ModalityEncoder(ModalitySpec("v", 4), 6, 3, rng)
    enc.encoder.proj.weight.data[...] = 0.0
    b = rng.normal(size=6)
    enc.encoder.proj.bias.data[...] = b
    out = encode_modality(enc, rng.normal(size=(5, 4)))
    np.testing.assert_array_equal(out.data, np.tile(b, (5, 1)))


def test_alignment_error(rng):
    encs = {"t": ModalityEncoder(ModalitySpec("t", 3), 4, 2, rng), "v": ModalityEncoder(ModalitySpec("v", 3), 4, 2, rng)}
    with pytest.raises(AlignmentError):
        encode_sample(encs, {"t": rng.normal(size=(6, 3)), "v": rng.normal(size=(5, 3))})
    out = encode_sample(encs, {"t": rng.normal(size=(5, 3)), "v": rng.normal(size=(5, 3))})
    assert out["t"].shape == out["v"].shape == (5, 4)


def test_token_encoder_frames_sentence(rng):
    enc = ModalityEncoder(ModalitySpec("t", 3, "tokens"), 4, 2, rng, vocab_size=9)
    out = encode_modality(enc, np.array([4, 7, 2]))
    assert out.shape == (5, 4)
    with pytest.raises(ValueError):
        ModalitySpec("v", 3, "tokens")


def test_visual_head_slot_replaced(rng):
    enc = ModalityEncoder(ModalitySpec("v", 3), 4, 2, rng)
    x = np.zeros((2, 4, 3))
    inp = enc.inputs(x).data
    np.testing.assert_array_equal(inp[:, 0], np.tile(enc.head.data, (2, 1)))
    np.testing.assert_array_equal(inp[:, 1:], 0.0)


def test_width_mismatch_raises(rng):
    enc = ModalityEncoder(ModalitySpec("a", 3), 4, 2, rng)
    with pytest.raises(ValueError):
        enc.inputs(np.zeros((1, 4, 5)))
