"""Modality sequence encoders: token embedding, BiGRU, projection to the shared width."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .nn import Linear, Module, param
from .tensor import Tensor

MODALITIES = ("t", "v", "a")

# reserved rows of the text embedding table
HEAD_ID = 0
TAIL_ID = 1


class AlignmentError(ValueError):
    """Modalities of one sample disagree on sequence length."""


@dataclass(frozen=True)
class ModalitySpec:
    modality: str
    dim: int
    source: str = "features"  # "features" or "tokens"

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}")
        if self.dim < 1:
            raise ValueError(f"feature width for {self.modality} must be >= 1")
        if self.source not in ("features", "tokens"):
            raise ValueError(f"unknown source kind {self.source!r}")
        if self.source == "tokens" and self.modality != "t":
            raise ValueError("only text may be given as token ids")


def frame_tokens(tokens) -> np.ndarray:
    """[HEAD] + tokens + [TAIL] as an id array of length n + 2."""
    return np.concatenate([[HEAD_ID], np.asarray(tokens, dtype=np.int64).reshape(-1), [TAIL_ID]]).astype(np.int64)


def embed(tokens, table: Tensor) -> Tensor:
    """Look up a sentence in the embedding table, framed by the HEAD and TAIL rows."""
    if table.shape[0] < 2:
        raise ValueError("embedding table needs the two reserved HEAD/TAIL rows")
    return T.gather_rows(table, frame_tokens(tokens))


class GRUDirection(Module):
    def __init__(self, d_in: int, h: int, rng: np.random.Generator):
        s = 1.0 / np.sqrt(h)
        self.w_ih = param(rng.uniform(-s, s, size=(d_in, 3 * h)))
        self.b_ih = param(np.zeros(3 * h))
        self.w_hh = param(rng.uniform(-s, s, size=(h, 3 * h)))
        self.b_hh = param(np.zeros(3 * h))

    def __call__(self, x: Tensor, mask, reverse: bool) -> Tensor:
        gi = T.matmul(x, self.w_ih) + self.b_ih
        return T.gru_scan(gi, self.w_hh, self.b_hh, mask, reverse=reverse)


class BiGRU(Module):
    """Single-layer bidirectional GRU.

    Gate order inside the 3h blocks is (update, reset, candidate):

        z = sigmoid(x W_z + b_iz + h U_z + b_hz)
        r = sigmoid(x W_r + b_ir + h U_r + b_hr)
        c = tanh(x W_c + b_ic + r * (h U_c + b_hc))
        h' = (1 - z) * c + z * h

    Padded steps (mask False) keep the state and emit zeros, so the reverse
    direction starts at each sequence's own last real step.
    """

    def __init__(self, d_in: int, h: int, rng: np.random.Generator):
        self.h = h
        self.fwd = GRUDirection(d_in, h, rng)
        self.bwd = GRUDirection(d_in, h, rng)

    def __call__(self, x: Tensor, mask=None) -> Tensor:
        if x.ndim == 2:
            return self(T.reshape(x, (1,) + x.shape), None if mask is None else np.asarray(mask)[None])[0]
        if x.shape[1] < 1:
            raise ValueError("BiGRU needs at least one timestep")
        if mask is None:
            mask = np.ones(x.shape[:2], dtype=bool)
        return T.concat([self.fwd(x, mask, False), self.bwd(x, mask, True)], axis=-1)


def bigru(x: Tensor, params: BiGRU, mask=None) -> Tensor:
    return params(x, mask)


class SequenceEncoder(Module):
    """BiGRU followed by a linear projection to width ``d``."""

    def __init__(self, d_in: int, d: int, h: int, rng: np.random.Generator):
        self.gru = BiGRU(d_in, h, rng)
        self.proj = Linear(2 * h, d, rng)

    def __call__(self, x: Tensor, mask=None) -> Tensor:
        return self.proj(self.gru(x, mask))


class ModalityEncoder(Module):
    """Raw modality input to the first fusion-layer input.

    Text given as token ids goes through a trainable table whose rows 0 and
    1 are the HEAD and TAIL embeddings. Visual and acoustic rows are
    word-aligned to the framed text, so their slot 0 carries no frame of its
    own; it is replaced by a learned HEAD vector so every pipeline has a
    well-defined head position.
    """

    def __init__(self, spec: ModalitySpec, d: int, h: int, rng: np.random.Generator, vocab_size: int = 0):
        self.spec = spec
        self.table = None
        self.head = None
        if spec.source == "tokens":
            if vocab_size < 3:
                raise ValueError("token source needs a vocabulary beyond the two reserved ids")
            self.table = param(rng.normal(0.0, 1.0, size=(vocab_size, spec.dim)))
        elif spec.modality != "t":
            self.head = param(rng.normal(0.0, 1.0, size=spec.dim))
        self.encoder = SequenceEncoder(spec.dim, d, h, rng)

    def inputs(self, raw, mask=None) -> Tensor:
        """Batch input [N, T, d_m] (or ids [N, T]) to the pre-GRU sequence."""
        if self.table is not None:
            return T.gather_rows(self.table, raw)
        x = raw if isinstance(raw, Tensor) else Tensor(np.asarray(raw, dtype=self.encoder.proj.weight.dtype))
        if x.shape[-1] != self.spec.dim:
            raise ValueError(f"modality {self.spec.modality}: expected width {self.spec.dim}, got {x.shape[-1]}")
        if self.head is None:
            return x
        slot0 = np.zeros((1, x.shape[1], 1), dtype=x.dtype)
        slot0[0, 0, 0] = 1.0
        head = T.reshape(self.head, (1, 1, self.spec.dim)) * slot0
        return x * (1.0 - slot0) + head

    def __call__(self, raw, mask=None) -> Tensor:
        return self.encoder(self.inputs(raw, mask), mask)


def encode_modality(encoder: ModalityEncoder, raw, mask=None) -> Tensor:
    """Encode one sample ([T, d_m] or token ids of length n) or a padded batch."""
    if encoder.table is not None:
        ids = np.asarray(raw)
        if ids.ndim == 1:
            ids = frame_tokens(ids)[None]
            return encoder(ids, None)[0]
        return encoder(ids, mask)
    arr = raw.data if isinstance(raw, Tensor) else np.asarray(raw)
    if arr.ndim == 2:
        return encoder(arr[None], None)[0]
    return encoder(raw, mask)


def encode_sample(encoders: dict[str, ModalityEncoder], sample: dict) -> dict[str, Tensor]:
    """Encode every modality of one unbatched sample, enforcing equal lengths."""
    lengths = {}
    for m, raw in sample.items():
        enc = encoders[m]
        lengths[m] = len(raw) + 2 if enc.table is not None else len(raw)
    if len(set(lengths.values())) > 1:
        raise AlignmentError(f"sequence lengths differ across modalities: {lengths}")
    return {m: encode_modality(encoders[m], raw) for m, raw in sample.items()}
