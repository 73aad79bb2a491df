"""Synthetic tri-modal data, the JSON-lines dataset format, and batching.

File layout: line 1 is the manifest object, every following line is one
record. See ``docs/formats.md`` for the normative description.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .encoders import MODALITIES, frame_tokens
from .rng import make_rng

FORMAT_NAME = "bbfn-dataset"
FORMAT_VERSION = 1
LABEL_RANGE = 3.0


class DataError(ValueError):
    def __init__(self, msg, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


@dataclass
class SampleRecord:
    id: str
    label: float
    n: int
    features: dict  # modality -> float array [n+2, d_m], or int array [n] of raw token ids for text

    def length(self) -> int:
        return self.n + 2


@dataclass
class DatasetManifest:
    task: str
    modalities: dict  # modality -> {"dim": int, "source": "features"|"tokens"}
    vocab_size: int = 0
    split: str = "train"
    splits: dict = field(default_factory=dict)
    generator: dict | None = None

    def to_json(self) -> dict:
        out = {"format": FORMAT_NAME, "version": FORMAT_VERSION}
        out.update(asdict(self))
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "DatasetManifest":
        if obj.get("format") != FORMAT_NAME:
            raise DataError("not a bbfn dataset manifest", 1)
        if obj.get("version") != FORMAT_VERSION:
            raise DataError(f"unsupported dataset version {obj.get('version')}", 1)
        return cls(obj["task"], obj["modalities"], obj.get("vocab_size", 0), obj.get("split", "train"),
                   obj.get("splits", {}), obj.get("generator"))


@dataclass
class SyntheticGenSpec:
    """Parameters of the synthetic generator.

    Each modality m has a scalar latent s_m ~ N(0, latent_std^2). The label is
    clip(sum_m w_m s_m, -3, 3) (rounded to an integer in ``integer`` label
    mode, thresholded at 0 for the binary task). Word rows 1..n of modality m
    are ``amp * s_m * u_m + mu_m + B_m xi + noise`` where u_m is a unit
    signal direction, mu_m a modality offset and B_m a nuisance basis
    orthogonal to u_m. Text given as token ids instead carries its latent as
    the mean value of its tokens.
    """

    seed: int = 0
    n_min: int = 4
    n_max: int = 8
    weights: tuple = (1.0, 0.3, 0.3)
    noise: float = 0.1
    dims: dict = field(default_factory=lambda: {"t": 12, "v": 8, "a": 6})
    task: str = "regression"
    label_mode: str = "continuous"  # or "integer"
    text_source: str = "features"  # or "tokens"
    vocab_size: int = 34
    latent_std: float = 1.0
    amplitude: float = 1.0
    nuisance: float = 0.5

    def validate(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (3,) or (w < 0).any() or not w.any():
            raise ValueError("weights must be three non-negative values, not all zero")
        if not 1 <= self.n_min <= self.n_max:
            raise ValueError("need 1 <= n_min <= n_max")
        if self.label_mode not in ("continuous", "integer"):
            raise ValueError(f"unknown label mode {self.label_mode!r}")
        if self.text_source not in ("features", "tokens"):
            raise ValueError(f"unknown text source {self.text_source!r}")
        if self.text_source == "tokens" and self.vocab_size < 4:
            raise ValueError("token text needs vocab_size >= 4")


def _basis(spec: SyntheticGenSpec) -> dict:
    rng = make_rng(spec.seed, "generator-basis")
    out = {}
    for m in MODALITIES:
        dm = spec.dims[m]
        u = rng.normal(size=dm)
        u /= np.linalg.norm(u)
        mu = rng.normal(size=dm)
        mu -= (mu @ u) * u
        B = rng.normal(size=(dm, 2))
        B -= np.outer(u, u @ B)
        out[m] = {"u": u, "mu": mu, "B": B, "head": rng.normal(size=dm), "tail": rng.normal(size=dm)}
    return out


def token_values(vocab_size: int) -> np.ndarray:
    """Sentiment value carried by each token id; reserved ids carry 0."""
    vals = np.zeros(vocab_size)
    vals[2:] = np.linspace(-2.0, 2.0, vocab_size - 2)
    return vals


def label_from_latents(latents, spec: SyntheticGenSpec) -> float:
    raw = float(np.dot(spec.weights, latents))
    if spec.task == "binary":
        return 1.0 if raw > 0 else 0.0
    y = min(LABEL_RANGE, max(-LABEL_RANGE, raw))
    if spec.label_mode == "integer":
        y = float(math.copysign(math.floor(abs(y) + 0.5), y))
    return y


def generate(spec: SyntheticGenSpec, count: int, split: str = "train") -> list[SampleRecord]:
    if count < 1:
        raise ValueError("count must be >= 1")
    spec.validate()
    basis = _basis(spec)
    rng = make_rng(spec.seed, f"generate-{split}")
    vals = token_values(spec.vocab_size) if spec.text_source == "tokens" else None
    records = []
    for i in range(count):
        n = int(rng.integers(spec.n_min, spec.n_max + 1))
        s = rng.normal(0.0, spec.latent_std, size=3)
        feats = {}
        for k, m in enumerate(MODALITIES):
            b = basis[m]
            if m == "t" and vals is not None:
                center = (s[0] + 2.0) / 4.0 * (spec.vocab_size - 3) + 2
                ids = np.clip(np.rint(center + rng.normal(0, 1.5, size=n)), 2, spec.vocab_size - 1).astype(np.int64)
                s[0] = float(vals[ids].mean())
                feats[m] = ids
                continue
            xi = rng.normal(size=(n, 2)) * spec.nuisance
            eps = rng.normal(size=(n, spec.dims[m])) * spec.noise
            rows = spec.amplitude * s[k] * b["u"] + b["mu"] + xi @ b["B"].T + eps
            if m == "t":
                first, last = b["head"], b["tail"]
            else:
                first = last = np.zeros(spec.dims[m])
            feats[m] = np.vstack([first, rows, last])
        records.append(SampleRecord(f"{split}-{i:06d}", label_from_latents(s, spec), n, feats))
    return records


def manifest_for(spec: SyntheticGenSpec, split: str = "train", splits: dict | None = None) -> DatasetManifest:
    mods = {m: {"dim": spec.dims[m], "source": "features"} for m in MODALITIES}
    if spec.text_source == "tokens":
        mods["t"] = {"dim": spec.dims["t"], "source": "tokens"}
    gen = asdict(spec)
    gen["weights"] = list(spec.weights)
    return DatasetManifest(spec.task, mods, spec.vocab_size if spec.text_source == "tokens" else 0,
                           split, dict(splits or {}), gen)


# ---------------------------------------------------------------------------
# file format

def record_to_json(rec: SampleRecord) -> dict:
    obj = {"id": rec.id, "label": rec.label, "n": rec.n}
    for m, arr in rec.features.items():
        arr = np.asarray(arr)
        obj[m] = {"ids": [int(x) for x in arr]} if arr.dtype.kind in "iu" else arr.tolist()
    return obj


def save(path, manifest: DatasetManifest, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(manifest.to_json(), sort_keys=True) + "\n")
        for rec in records:
            fh.write(json.dumps(record_to_json(rec)) + "\n")


def _parse_record(obj: dict, manifest: DatasetManifest, line: int) -> SampleRecord:
    for key in ("id", "label", "n"):
        if key not in obj:
            raise DataError(f"record is missing {key!r}", line)
    n = obj["n"]
    if not isinstance(n, int) or n < 0:
        raise DataError("n must be a non-negative integer", line)
    label = float(obj["label"])
    if not math.isfinite(label):
        raise DataError("label is not finite", line)
    if manifest.task == "binary" and label not in (0.0, 1.0):
        raise DataError(f"binary label must be 0 or 1, got {label}", line)
    if manifest.task == "regression" and abs(label) > LABEL_RANGE:
        raise DataError(f"label {label} outside [-3, 3]", line)
    feats = {}
    for m, spec in manifest.modalities.items():
        if m not in obj:
            raise DataError(f"record lacks modality {m!r}", line)
        val = obj[m]
        if spec.get("source", "features") == "tokens":
            if not isinstance(val, dict) or "ids" not in val:
                raise DataError(f"modality {m} expects {{\"ids\": [...]}}", line)
            ids = np.asarray(val["ids"], dtype=np.int64)
            if ids.shape != (n,):
                raise DataError(f"modality {m}: {ids.size} token ids for n={n}", line)
            if ids.size and (ids.min() < 2 or ids.max() >= manifest.vocab_size):
                raise DataError(f"modality {m}: token id outside [2, {manifest.vocab_size})", line)
            feats[m] = ids
            continue
        try:
            arr = np.asarray(val, dtype=np.float64)
        except (TypeError, ValueError):
            raise DataError(f"modality {m} is not a numeric matrix", line) from None
        if arr.ndim != 2 or arr.shape[1] != spec["dim"]:
            raise DataError(f"modality {m}: width {arr.shape[-1] if arr.ndim else '?'} != manifest {spec['dim']}",
                            line)
        if arr.shape[0] != n + 2:
            raise DataError(f"modality {m}: {arr.shape[0]} rows, expected n+2={n + 2}", line)
        if not np.isfinite(arr).all():
            raise DataError(f"modality {m} contains non-finite values", line)
        feats[m] = arr
    return SampleRecord(str(obj["id"]), label, n, feats)


def iter_records(path) -> Iterator[tuple[DatasetManifest, SampleRecord | None]]:
    """Stream (manifest, record) pairs; yields (manifest, None) once for an empty dataset."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if not first.strip():
            raise DataError("missing manifest", 1)
        try:
            manifest = DatasetManifest.from_json(json.loads(first))
        except json.JSONDecodeError as exc:
            raise DataError(f"bad manifest JSON: {exc.msg}", 1) from None
        except KeyError as exc:
            raise DataError(f"manifest lacks {exc}", 1) from None
        empty = True
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"bad JSON: {exc.msg}", lineno) from None
            if not isinstance(obj, dict):
                raise DataError("record must be a JSON object", lineno)
            empty = False
            yield manifest, _parse_record(obj, manifest, lineno)
        if empty:
            yield manifest, None


def load(path) -> tuple[DatasetManifest, list[SampleRecord]]:
    manifest, records = None, []
    for manifest, rec in iter_records(Path(path)):
        if rec is not None:
            records.append(rec)
    return manifest, records


# ---------------------------------------------------------------------------
# batching

@dataclass
class ModalityBatch:
    ids: list
    features: dict  # modality -> [N, T, d_m] float array, or [N, T] framed token ids
    mask: np.ndarray  # [N, T] bool
    labels: np.ndarray  # [N]

    def __len__(self):
        return len(self.ids)


def collate(records: list[SampleRecord]) -> ModalityBatch:
    lengths = [r.length() for r in records]
    Tmax = max(lengths)
    N = len(records)
    mask = np.zeros((N, Tmax), dtype=bool)
    for i, L in enumerate(lengths):
        mask[i, :L] = True
    feats = {}
    for m in records[0].features:
        first = np.asarray(records[0].features[m])
        if first.dtype.kind in "iu":
            arr = np.zeros((N, Tmax), dtype=np.int64)
            for i, r in enumerate(records):
                framed = frame_tokens(r.features[m])
                arr[i, :framed.size] = framed
        else:
            arr = np.zeros((N, Tmax, first.shape[1]))
            for i, r in enumerate(records):
                x = r.features[m]
                arr[i, :x.shape[0]] = x
        feats[m] = arr
    return ModalityBatch([r.id for r in records], feats, mask, np.array([r.label for r in records], dtype=np.float64))


def make_batches(records: list[SampleRecord], batch_size: int, seed: int | None = None, shuffle: bool = False,
                 epoch: int = 0, min_size: int = 1) -> Iterator[ModalityBatch]:
    """Yield padded batches. Batches smaller than ``min_size`` are skipped
    (training passes the group size here); evaluation keeps the short tail."""
    if batch_size < 1:
        raise ValueError("batch size must be >= 1")
    order = np.arange(len(records))
    if shuffle:
        if seed is None:
            raise ValueError("shuffling needs a seed")
        order = make_rng(seed, "shuffle", epoch).permutation(len(records))
    for start in range(0, len(order), batch_size):
        chunk = [records[i] for i in order[start:start + batch_size]]
        if len(chunk) < min_size:
            continue
        yield collate(chunk)
