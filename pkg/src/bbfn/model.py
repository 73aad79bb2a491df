"""The bi-bimodal fusion network: encoders, complementation modules, heads, losses."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .complementation import BCE_EPS, ComplementationModule, GateTrace, ModuleOutput
from .encoders import MODALITIES, ModalityEncoder, ModalitySpec
from .nn import FeedForward, Module
from .rng import make_rng
from .tensor import Tensor

MODULE_PAIRS = {"TV": ("t", "v"), "TA": ("t", "a"), "VA": ("v", "a")}
TASKS = ("regression", "binary")


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    modules: tuple = ("TV", "TA")
    d: int = 32
    layers: int = 2
    group_size: int = 2
    lam: float = 0.5
    heads: int = 4
    d_ff: int | None = None
    gru_hidden: int | None = None
    use_gates: bool = True
    use_separator: bool = True
    split_gate_encoder: bool = False
    shared_text_encoder: bool = True
    task: str = "regression"
    inputs: dict = field(default_factory=lambda: {"t": {"dim": 12, "source": "features"},
                                                  "v": {"dim": 8, "source": "features"},
                                                  "a": {"dim": 6, "source": "features"}})
    vocab_size: int = 0

    def __post_init__(self):
        self.modules = tuple(m.upper() for m in self.modules)
        self.validate()

    @property
    def ffn_width(self) -> int:
        return self.d_ff if self.d_ff else 4 * self.d

    @property
    def hidden(self) -> int:
        return self.gru_hidden if self.gru_hidden else max(1, self.d // 2)

    @property
    def head_width(self) -> int:
        return 2 * len(self.modules) * self.d

    @property
    def modalities(self) -> tuple[str, ...]:
        used = {m for name in self.modules for m in MODULE_PAIRS[name]}
        return tuple(m for m in MODALITIES if m in used)

    def validate(self):
        if not self.modules:
            raise ConfigError("module set must be non-empty")
        bad = [m for m in self.modules if m not in MODULE_PAIRS]
        if bad:
            raise ConfigError(f"unknown modules {bad}; choose from {sorted(MODULE_PAIRS)}")
        if len(set(self.modules)) != len(self.modules):
            raise ConfigError("duplicate module in module set")
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        if self.group_size < 1 or self.layers < 1 or self.d < 1:
            raise ConfigError("group_size, layers and d must be positive")
        if self.d % self.heads:
            raise ConfigError(f"d={self.d} not divisible by heads={self.heads}")
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}")
        for m in self.modalities:
            if m not in self.inputs:
                raise ConfigError(f"no input spec for modality {m!r}")

    def spec(self, m: str) -> ModalitySpec:
        s = self.inputs[m]
        return ModalitySpec(m, int(s["dim"]), s.get("source", "features"))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["modules"] = list(self.modules)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["modules"] = tuple(d.get("modules", ("TV", "TA")))
        return cls(**d)


@dataclass
class PredictionBatch:
    y_hat: Tensor
    y: np.ndarray
    h_final: Tensor
    module_outputs: dict  # module name -> ModuleOutput
    traces: list

    @property
    def sep_losses(self) -> list:
        return [s for out in self.module_outputs.values() for s in out.sep_losses]


def extract_heads(outputs: dict[str, ModuleOutput], order) -> Tensor:
    """Position-0 vectors of every pipeline's last layer, concatenated by
    (module order) x (pipeline order)."""
    heads = []
    for name in order:
        out = outputs[name]
        heads += [out.x1[:, 0, :], out.x2[:, 0, :]]
    return T.concat(heads, axis=-1)


def predict(h_final: Tensor, head: FeedForward, task: str) -> Tensor:
    logits = head(h_final)
    y = T.reshape(logits, (logits.shape[0],))
    return T.sigmoid(y) if task == "binary" else y


def task_loss(y_hat: Tensor, y, task: str, reduce: bool = True) -> Tensor:
    """Per-sample squared error or clamped BCE; averaged when ``reduce``."""
    y = np.asarray(y, dtype=y_hat.dtype)
    if y.shape != y_hat.shape:
        raise T.DimensionError(f"labels {y.shape} vs predictions {y_hat.shape}")
    if task == "regression":
        diff = y_hat - y
        per = diff * diff
    elif task == "binary":
        if not np.isin(y, (0.0, 1.0)).all():
            raise ValueError("binary labels must be 0 or 1")
        p = T.clip(y_hat, BCE_EPS, 1.0 - BCE_EPS)
        per = -(T.log(p) * y + T.log(1.0 - p) * (1.0 - y))
    else:
        raise ConfigError(f"unknown task {task!r}")
    return T.mean(per) if reduce else per


def separator_weight(lam: float, K: int, L: int) -> float:
    return lam * K / (2.0 * L)


def total_loss(tau: Tensor, sep_losses, lam: float, K: int, L: int) -> Tensor:
    """mean(tau) + (lam K / 2L) * sum of all layer/module separator losses.

    The separator term does not depend on the sample index, so averaging it
    over the batch leaves it unchanged.
    """
    if lam < 0:
        raise ConfigError("lambda must be >= 0")
    base = T.mean(tau) if tau.ndim else tau
    if lam == 0 or not sep_losses:
        return base
    reg = sep_losses[0]
    for s in sep_losses[1:]:
        reg = reg + s
    return base + reg * separator_weight(lam, K, L)


class BBFN(Module):
    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        rng = make_rng(seed, "init")
        c = config
        self.encoders = {}
        if c.shared_text_encoder:
            for m in c.modalities:
                self.encoders[m] = ModalityEncoder(c.spec(m), c.d, c.hidden, rng, c.vocab_size)
        else:
            for name in c.modules:
                for m in MODULE_PAIRS[name]:
                    self.encoders[f"{name}.{m}"] = ModalityEncoder(c.spec(m), c.d, c.hidden, rng, c.vocab_size)
        self.modules = {
            name: ComplementationModule(MODULE_PAIRS[name], c.d, c.layers, c.heads, c.ffn_width, c.hidden, rng,
                                        c.use_gates, c.use_separator, c.split_gate_encoder)
            for name in c.modules
        }
        self.head = FeedForward(c.head_width, c.d, 1, rng)

    def encode(self, batch) -> dict[str, Tensor]:
        missing = [m for m in self.config.modalities if m not in batch.features]
        if missing:
            raise ConfigError(f"batch lacks modalities {missing} required by modules {self.config.modules}")
        out = {}
        for key, enc in self.encoders.items():
            m = key.split(".")[-1]
            out[key] = enc(batch.features[m], batch.mask)
        return out

    def forward(self, batch) -> PredictionBatch:
        c = self.config
        x0 = self.encode(batch)
        outs = {}
        for name, module in self.modules.items():
            m1, m2 = module.pair
            k1, k2 = (m1, m2) if c.shared_text_encoder else (f"{name}.{m1}", f"{name}.{m2}")
            outs[name] = module.forward(x0[k1], x0[k2], batch.mask, batch.mask, c.group_size)
        h_final = extract_heads(outs, c.modules)
        y_hat = predict(h_final, self.head, c.task)
        traces: list[GateTrace] = [t for o in outs.values() for t in o.traces]
        return PredictionBatch(y_hat, np.asarray(batch.labels), h_final, outs, traces)

    __call__ = forward

    def loss(self, pred: PredictionBatch) -> tuple[Tensor, Tensor, float]:
        """(total loss, mean task loss, summed separator loss value)."""
        c = self.config
        tau = task_loss(pred.y_hat, pred.y, c.task, reduce=False)
        seps = pred.sep_losses
        total = total_loss(tau, seps, c.lam, c.group_size, c.layers)
        sep_value = float(sum(s.item() for s in seps)) if seps else 0.0
        tau_mean = T.mean(tau)
        return total, tau_mean, sep_value

    def gate_parameter_names(self) -> list[str]:
        return [k for k in self.parameters() if ".gate_r." in k or ".gate_c." in k]

    def discriminator_parameter_names(self) -> list[str]:
        return [k for k in self.parameters() if ".disc." in k]
