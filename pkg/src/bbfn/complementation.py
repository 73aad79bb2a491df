"""Gated complementation layers and the modality-feature separator.

A complementation module fuses one modality pair (m1, m2) through a stack
of layers. Each layer runs two structurally identical pipelines: pipeline
m1 keeps m1 as its main stream and attends to m2, pipeline m2 does the
converse. Per layer, both inputs are also pooled into sequence-level
vectors which feed (a) the retain/compound gates of each pipeline and (b)
a layer-specific discriminator whose BCE loss keeps the two modalities
separable.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .encoders import SequenceEncoder
from .nn import FeedForward, LayerNorm, Linear, Module
from .tensor import Tensor

log = logging.getLogger(__name__)

BCE_EPS = 1e-7


@dataclass
class GateTrace:
    layer: int
    module: str
    modality: str
    kind: str  # "r" (retain) or "c" (compound)
    values: np.ndarray  # [d], averaged over the batch

    @property
    def label(self) -> str:
        return f"{self.module}-{self.modality.upper()}-{self.kind}"


# ---------------------------------------------------------------------------
# separator pieces

def pool_sequence(X: Tensor, mask, encoder: SequenceEncoder) -> Tensor:
    """Mean over unmasked timesteps of ``encoder(X)``; [N, T, d] -> [N, d]."""
    N, Tn = X.shape[:2]
    m = np.ones((N, Tn), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    counts = m.sum(axis=1)
    if (counts == 0).any():
        raise ValueError("cannot pool a fully masked sequence")
    H = encoder(X, m)
    w = (m / counts[:, None]).astype(X.dtype)[:, :, None]
    return T.sum_(H * w, axis=1)


def group_representations(H: Tensor, K: int) -> Tensor:
    """Average consecutive blocks of K rows; a trailing partial block is dropped."""
    if K < 1:
        raise ValueError("group size must be >= 1")
    N, d = H.shape
    G = N // K
    if G == 0:
        raise ValueError(f"batch of {N} is smaller than group size {K}")
    if N % K:
        log.warning("dropping %d trailing rows that do not fill a group of %d", N % K, K)
        H = H[: G * K]
    return T.mean(T.reshape(H, (G, K, d)), axis=1)


class Discriminator(Module):
    """d -> d/2 -> 1 classifier with a sigmoid output."""

    def __init__(self, d: int, rng: np.random.Generator):
        self.fc1 = Linear(d, max(1, d // 2), rng)
        self.fc2 = Linear(max(1, d // 2), 1, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return T.sigmoid(self.fc2(T.relu(self.fc1(x))))


def discriminate(g1: Tensor, g2: Tensor, disc: Discriminator) -> Tensor:
    """Scores for the m1 groups followed by the m2 groups, shape [2G]."""
    if g1.shape != g2.shape:
        raise T.DimensionError(f"group blocks differ in shape: {g1.shape} vs {g2.shape}")
    scores = disc(T.concat([g1, g2], axis=0))
    return T.reshape(scores, (scores.shape[0],))


def pseudo_labels(n_groups: int, dtype=np.float64) -> np.ndarray:
    """m1 groups are labelled 1, m2 groups 0."""
    return np.concatenate([np.ones(n_groups), np.zeros(n_groups)]).astype(dtype)


def separator_loss(c_hat: Tensor, c) -> Tensor:
    """Mean binary cross entropy over all 2G group predictions.

    With G = N_b / K groups per modality the mean carries the K / (2 N_b)
    prefactor of the separator objective.
    """
    c = np.asarray(c, dtype=c_hat.dtype)
    if c.shape != c_hat.shape:
        raise T.DimensionError(f"labels {c.shape} and predictions {c_hat.shape} differ")
    p = T.clip(c_hat, BCE_EPS, 1.0 - BCE_EPS)
    ll = T.log(p) * c + T.log(1.0 - p) * (1.0 - c)
    return T.sum_(ll) * (-1.0 / c.size)


# ---------------------------------------------------------------------------
# gated complementation transformer

def compute_gates(h_main: Tensor, h_comp: Tensor, w_r: Linear, w_c: Linear) -> tuple[Tensor, Tensor]:
    """Retain and compound gates from [h_main || h_comp]."""
    hc = T.concat([h_main, h_comp], axis=-1)
    return T.sigmoid(w_r(hc)), T.sigmoid(w_c(hc))


class MultiHeadAttention(Module):
    def __init__(self, d: int, heads: int, rng: np.random.Generator):
        if d % heads:
            raise ValueError(f"width {d} is not divisible by {heads} heads")
        self.heads = heads
        self.w_q = Linear(d, d, rng, bias=False)
        self.w_k = Linear(d, d, rng, bias=False)
        self.w_v = Linear(d, d, rng, bias=False)
        self.w_o = Linear(d, d, rng)

    def _split(self, x: Tensor) -> Tensor:
        N, Tn, d = x.shape
        return T.swapaxes(T.reshape(x, (N, Tn, self.heads, d // self.heads)), 1, 2)

    def context(self, x_q: Tensor, x_kv: Tensor, key_mask=None) -> Tensor:
        """Concatenated per-head attention output, before the output projection."""
        N, Tq, d = x_q.shape
        q, k, v = self._split(self.w_q(x_q)), self._split(self.w_k(x_kv)), self._split(self.w_v(x_kv))
        scores = T.matmul(q, T.swapaxes(k, -1, -2)) * (1.0 / np.sqrt(d // self.heads))
        mask = None if key_mask is None else np.asarray(key_mask, dtype=bool)[:, None, None, :]
        if mask is not None and not mask.any(axis=-1).all():
            raise ValueError("every key position of the complementary sequence is masked")
        att = T.softmax_lastdim(scores, mask)
        return T.reshape(T.swapaxes(T.matmul(att, v), 1, 2), (N, Tq, d))

    def __call__(self, x_q: Tensor, x_kv: Tensor, key_mask=None) -> Tensor:
        return self.w_o(self.context(x_q, x_kv, key_mask))


def gated_cross_attention(x_main: Tensor, x_comp: Tensor, comp_mask, attn: MultiHeadAttention,
                          g_r: Tensor | None, g_c: Tensor | None, ln: LayerNorm) -> Tensor:
    """LN(g_c * MHA(main, comp, comp) + g_r * main); plain residual when gates are None."""
    m = attn(x_main, x_comp, comp_mask)
    if g_r is None:
        return ln(m + x_main)
    N, d = g_r.shape
    g_r = T.reshape(g_r, (N, 1, d))
    g_c = T.reshape(g_c, (N, 1, d))
    return ln(g_c * m + g_r * x_main)


class Pipeline(Module):
    """One side of a complementation layer."""

    def __init__(self, d: int, heads: int, d_ff: int, use_gates: bool, rng: np.random.Generator):
        self.gate_r = Linear(2 * d, d, rng) if use_gates else None
        self.gate_c = Linear(2 * d, d, rng) if use_gates else None
        self.attn = MultiHeadAttention(d, heads, rng)
        self.ln1 = LayerNorm(d)
        self.ffn = FeedForward(d, d_ff, d, rng)
        self.ln2 = LayerNorm(d)

    def forward(self, x_main, x_comp, comp_mask, h_main=None, h_comp=None):
        """Returns (output, g_r, g_c); gates are None when disabled."""
        g_r = g_c = None
        if self.gate_r is not None:
            g_r, g_c = compute_gates(h_main, h_comp, self.gate_r, self.gate_c)
        x_tilde = gated_cross_attention(x_main, x_comp, comp_mask, self.attn, g_r, g_c, self.ln1)
        return self.ln2(x_tilde + self.ffn(x_tilde)), g_r, g_c


@dataclass
class LayerOutput:
    x1: Tensor
    x2: Tensor
    sep_loss: Tensor | None
    gates: dict  # modality -> (g_r, g_c) tensors [N, d], or empty
    c_hat: Tensor | None = None


class GCTLayer(Module):
    def __init__(self, d: int, heads: int, d_ff: int, gru_hidden: int, rng: np.random.Generator,
                 use_gates: bool = True, use_separator: bool = True, split_gate_encoder: bool = False):
        self.use_gates = use_gates
        self.use_separator = use_separator
        need_pool = use_gates or use_separator
        self.pool = [SequenceEncoder(d, d, gru_hidden, rng) for _ in range(2)] if need_pool else None
        self.gate_pool = None
        if use_gates and use_separator and split_gate_encoder:
            self.gate_pool = [SequenceEncoder(d, d, gru_hidden, rng) for _ in range(2)]
        self.disc = Discriminator(d, rng) if use_separator else None
        self.pipes = [Pipeline(d, heads, d_ff, use_gates, rng) for _ in range(2)]

    def pooled(self, x1, x2, m1, m2, for_gates=False):
        enc = self.gate_pool if (for_gates and self.gate_pool is not None) else self.pool
        return pool_sequence(x1, m1, enc[0]), pool_sequence(x2, m2, enc[1])

    def separator(self, h1: Tensor, h2: Tensor, K: int) -> tuple[Tensor, Tensor]:
        g1, g2 = group_representations(h1, K), group_representations(h2, K)
        c_hat = discriminate(g1, g2, self.disc)
        return separator_loss(c_hat, pseudo_labels(g1.shape[0], c_hat.dtype)), c_hat

    def pipeline_forward(self, side: int, x_main, x_comp, comp_mask, h_main=None, h_comp=None):
        return self.pipes[side].forward(x_main, x_comp, comp_mask, h_main, h_comp)

    def forward(self, x1: Tensor, x2: Tensor, m1, m2, K: int, modalities=("1", "2")) -> LayerOutput:
        h1 = h2 = None
        if self.pool is not None:
            h1, h2 = self.pooled(x1, x2, m1, m2)
        sep = c_hat = None
        if self.use_separator:
            sep, c_hat = self.separator(h1, h2, K)
        gh1, gh2 = (self.pooled(x1, x2, m1, m2, for_gates=True) if self.gate_pool is not None else (h1, h2))
        y1, r1, c1 = self.pipeline_forward(0, x1, x2, m2, gh1, gh2)
        y2, r2, c2 = self.pipeline_forward(1, x2, x1, m1, gh2, gh1)
        gates = {}
        if self.use_gates:
            gates = {modalities[0]: (r1, c1), modalities[1]: (r2, c2)}
        return LayerOutput(y1, y2, sep, gates, c_hat)


@dataclass
class ModuleOutput:
    x1: Tensor
    x2: Tensor
    sep_losses: list  # one scalar Tensor per layer, empty when the separator is off
    traces: list
    layer_outputs: list

    @property
    def sep_sum(self) -> Tensor | float:
        if not self.sep_losses:
            return 0.0
        total = self.sep_losses[0]
        for s in self.sep_losses[1:]:
            total = total + s
        return total


class ComplementationModule(Module):
    """Stack of GCT layers over the modality pair ``pair`` (e.g. ("t", "v"))."""

    def __init__(self, pair: tuple[str, str], d: int, layers: int, heads: int, d_ff: int, gru_hidden: int,
                 rng: np.random.Generator, use_gates=True, use_separator=True, split_gate_encoder=False):
        if layers < 1:
            raise ValueError("a complementation module needs at least one layer")
        self.pair = tuple(pair)
        self.name = (pair[0] + pair[1]).upper()
        self.layers = [GCTLayer(d, heads, d_ff, gru_hidden, rng, use_gates, use_separator, split_gate_encoder)
                       for _ in range(layers)]

    def forward(self, x1: Tensor, x2: Tensor, m1, m2, K: int) -> ModuleOutput:
        seps, traces, outs = [], [], []
        for i, layer in enumerate(self.layers):
            out = layer.forward(x1, x2, m1, m2, K, self.pair)
            outs.append(out)
            if out.sep_loss is not None:
                seps.append(out.sep_loss)
            for mod in self.pair:
                if mod in out.gates:
                    g_r, g_c = out.gates[mod]
                    traces.append(GateTrace(i, self.name, mod, "r", g_r.data.mean(axis=0)))
                    traces.append(GateTrace(i, self.name, mod, "c", g_c.data.mean(axis=0)))
            x1, x2 = out.x1, out.x2
        return ModuleOutput(x1, x2, seps, traces, outs)
