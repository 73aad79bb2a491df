"""Training, evaluation, ablation sweeps and gate export."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import checkpoint
from .complementation import GateTrace
from .data import DatasetManifest, SampleRecord, make_batches
from .metrics import METRIC_COLUMNS, MetricsReport, evaluate_predictions
from .model import BBFN, ModelConfig
from .optim import Adam

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    pass


class CompatibilityError(ValueError):
    pass


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    lr: float = 3e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epochs: int = 50
    batch_size: int = 16
    seed: int = 0
    patience: int = 10
    train_path: str | None = None
    valid_path: str | None = None
    test_path: str | None = None
    checkpoint_path: str | None = None
    log_path: str | None = None

    def validate(self):
        if self.seed is None:
            raise ValueError("seed is mandatory")
        if self.model.use_separator and self.batch_size < self.model.group_size:
            raise ValueError(f"batch size {self.batch_size} < group size {self.model.group_size}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


@dataclass
class TrainResult:
    model: BBFN
    history: list
    best_epoch: int

    def log_lines(self) -> str:
        return "".join(json.dumps(row, sort_keys=True) + "\n" for row in self.history)


def check_compatible(config: ModelConfig, manifest: DatasetManifest):
    if manifest.task != config.task:
        raise CompatibilityError(f"dataset task {manifest.task!r} != model task {config.task!r}")
    for m in config.modalities:
        spec = manifest.modalities.get(m)
        want = config.inputs[m]
        if spec is None:
            raise CompatibilityError(f"dataset lacks modality {m!r}")
        if int(spec["dim"]) != int(want["dim"]) or spec.get("source", "features") != want.get("source", "features"):
            raise CompatibilityError(f"modality {m}: dataset {spec} vs model {want}")


def config_for_manifest(config: ModelConfig, manifest: DatasetManifest) -> ModelConfig:
    """Copy of ``config`` whose input widths and task follow the dataset."""
    return replace(config, inputs={m: dict(s) for m, s in manifest.modalities.items()},
                   task=manifest.task, vocab_size=manifest.vocab_size)


def predict_all(model: BBFN, records: list[SampleRecord], batch_size: int = 64) -> tuple[np.ndarray, np.ndarray]:
    ys, preds = [], []
    for batch in make_batches(records, batch_size):
        out = model(batch)
        ys.append(batch.labels)
        preds.append(out.y_hat.data.astype(np.float64))
    return np.concatenate(ys), np.concatenate(preds)


def evaluate(model: BBFN, records: list[SampleRecord], batch_size: int = 64) -> tuple[MetricsReport, np.ndarray, np.ndarray]:
    """Full-set metrics; never touches parameters."""
    y, y_hat = predict_all(model, records, batch_size)
    return evaluate_predictions(y, y_hat, model.config.task), y, y_hat


def _selection_score(report: MetricsReport) -> float:
    # lower is better
    return report.mae if report.task == "regression" else -report.acc2


def train(cfg: TrainConfig, train_records: list[SampleRecord], valid_records: list[SampleRecord] | None = None,
          target_train_loss: float | None = None) -> TrainResult:
    """Adam on the total loss. Deterministic for a fixed config and data.

    With a validation set the best-scoring epoch (MAE, or accuracy for the
    binary task) is kept and training stops after ``patience`` epochs without
    improvement. ``target_train_loss`` stops as soon as the epoch's mean task
    loss falls below it.
    """
    cfg.validate()
    mc = cfg.model
    model = BBFN(mc, seed=cfg.seed).to(np.float32)
    opt = Adam(model.parameters(), lr=cfg.lr, betas=(cfg.beta1, cfg.beta2))
    min_size = mc.group_size if mc.use_separator else 1
    history = []
    best_score, best_epoch, best_state, stale = math.inf, -1, None, 0
    for epoch in range(cfg.epochs):
        sums = np.zeros(3)
        seen = 0
        for batch in make_batches(train_records, cfg.batch_size, seed=cfg.seed, shuffle=True, epoch=epoch,
                                  min_size=min_size):
            pred = model(batch)
            total, tau, sep = model.loss(pred)
            values = (total.item(), tau.item(), sep)
            if not all(math.isfinite(v) for v in values):
                raise DivergenceError(f"non-finite loss at epoch {epoch}: total={values[0]} task={values[1]} sep={values[2]}")
            opt.zero_grad()
            total.backward()
            opt.step()
            sums += np.array(values) * len(batch)
            seen += len(batch)
        if seen == 0:
            raise ValueError("no training batch survived the group-size filter")
        row = {"epoch": epoch, "loss": sums[0] / seen, "task_loss": sums[1] / seen, "sep_loss": sums[2] / seen}
        if valid_records:
            report, _, _ = evaluate(model, valid_records)
            row.update({f"val_{k}": v for k, v in report.as_dict().items() if k in METRIC_COLUMNS})
            score = _selection_score(report)
            if score < best_score:
                best_score, best_epoch, stale = score, epoch, 0
                best_state = {k: p.data.copy() for k, p in model.parameters().items()}
            else:
                stale += 1
        history.append(row)
        log.info("epoch %d loss=%.6f task=%.6f sep=%.6f", epoch, row["loss"], row["task_loss"], row["sep_loss"])
        if valid_records and stale >= cfg.patience:
            log.info("early stop after %d stale epochs", stale)
            break
        if target_train_loss is not None and row["task_loss"] < target_train_loss:
            break
    if best_state is not None:
        for k, p in model.parameters().items():
            p.data = best_state[k]
    else:
        best_epoch = len(history) - 1
    result = TrainResult(model, history, best_epoch)
    if cfg.checkpoint_path:
        checkpoint.save(cfg.checkpoint_path, model, {"seed": cfg.seed, "best_epoch": best_epoch})
    if cfg.log_path:
        with open(cfg.log_path, "w", encoding="utf-8") as fh:
            fh.write(result.log_lines())
    return result


def separator_accuracy(model: BBFN, records: list[SampleRecord], layer: int = 0, batch_size: int = 32) -> dict:
    """Held-out accuracy of each module's layer discriminator at predicting
    which modality a group representation came from."""
    K = model.config.group_size
    hits: dict[str, list] = {name: [0, 0] for name in model.config.modules}
    for batch in make_batches(records, batch_size, min_size=K):
        out = model(batch)
        for name, mo in out.module_outputs.items():
            c_hat = mo.layer_outputs[layer].c_hat
            if c_hat is None:
                raise ValueError("model has no separator")
            g = c_hat.shape[0] // 2
            truth = np.concatenate([np.ones(g, bool), np.zeros(g, bool)])
            hits[name][0] += int(np.sum((c_hat.data > 0.5) == truth))
            hits[name][1] += c_hat.shape[0]
    return {name: h[0] / h[1] for name, h in hits.items()}


# ---------------------------------------------------------------------------
# ablation

ABLATION_PLAN = [
    ("TV only", {"modules": ("TV",)}),
    ("TA only", {"modules": ("TA",)}),
    ("VA only", {"modules": ("VA",)}),
    ("VA+TA", {"modules": ("VA", "TA")}),
    ("TV+VA", {"modules": ("TV", "VA")}),
    ("TV+TA", {"modules": ("TV", "TA")}),
    ("TV+TA w/o separator", {"modules": ("TV", "TA"), "use_separator": False}),
    ("TV+TA w/o gates", {"modules": ("TV", "TA"), "use_gates": False}),
    ("TV+TA w/o both", {"modules": ("TV", "TA"), "use_separator": False, "use_gates": False}),
    ("TV+TA+VA", {"modules": ("TV", "TA", "VA")}),
]


@dataclass
class AblationRow:
    description: str
    report: MetricsReport | None
    error: str | None = None
    num_parameters: int = 0


def run_ablation(base: TrainConfig, train_records, valid_records, test_records, plan=ABLATION_PLAN) -> list[AblationRow]:
    """Train and test every plan row with the same seed and data. A failing
    row is recorded and the sweep moves on."""
    rows = []
    for name, overrides in plan:
        try:
            mc = replace(base.model, **overrides)
            cfg = replace(base, model=mc, checkpoint_path=None, log_path=None)
            res = train(cfg, train_records, valid_records)
            report, _, _ = evaluate(res.model, test_records)
            rows.append(AblationRow(name, report, None, res.model.num_parameters()))
        except Exception as exc:  # noqa: BLE001 - sweep must continue
            log.error("ablation row %r failed: %s", name, exc)
            rows.append(AblationRow(name, None, f"{type(exc).__name__}: {exc}"))
        log.info("ablation %s done", name)
    return rows


def _fmt(v) -> str:
    if v is None:
        return "nan"
    return f"{v:.6f}"


def ablation_csv(rows: list[AblationRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["description"] + METRIC_COLUMNS)
    for r in rows:
        vals = r.report.row() if r.report is not None else [None] * len(METRIC_COLUMNS)
        w.writerow([r.description] + [_fmt(v) for v in vals])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# gate export

def collect_gates(model: BBFN, records: list[SampleRecord], layer: int, batch_size: int = 64) -> list[GateTrace]:
    """Per-dimension gate values of one layer, averaged over every sample."""
    if not 0 <= layer < model.config.layers:
        raise ValueError(f"layer index {layer} outside [0, {model.config.layers})")
    if not model.config.use_gates:
        return []
    sums: dict[tuple, np.ndarray] = {}
    order: list[tuple] = []
    total = 0
    for batch in make_batches(records, batch_size):
        out = model(batch)
        for t in out.traces:
            if t.layer != layer:
                continue
            key = (t.module, t.modality, t.kind)
            if key not in sums:
                sums[key] = np.zeros_like(t.values, dtype=np.float64)
                order.append(key)
            sums[key] += t.values.astype(np.float64) * len(batch)
        total += len(batch)
    traces = [GateTrace(layer, mod, m, kind, sums[(mod, m, kind)] / total) for mod, m, kind in order]
    return sorted(traces, key=lambda t: (model.config.modules.index(t.module),
                                          model.modules[t.module].pair.index(t.modality), t.kind))


def gates_csv(traces: list[GateTrace]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    d = traces[0].values.size if traces else 0
    w.writerow(["gate", "module", "layer", "pipeline", "kind"] + [f"dim{i}" for i in range(d)])
    for t in traces:
        w.writerow([t.label, t.module, t.layer, t.modality, t.kind] + [f"{v:.8f}" for v in t.values])
    return buf.getvalue()


def history_to_dict(result: TrainResult) -> dict:
    return {"best_epoch": result.best_epoch, "history": result.history}


def train_config_dict(cfg: TrainConfig) -> dict:
    out = asdict(cfg)
    out["model"] = cfg.model.to_dict()
    return out
