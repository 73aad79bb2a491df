import csv
import io
import math

import numpy as np
import pytest

from bbfn import checkpoint
from bbfn.checkpoint import CheckpointError
from bbfn.data import SyntheticGenSpec, generate, manifest_for
from bbfn.harness import (ABLATION_PLAN, CompatibilityError, DivergenceError, TrainConfig, ablation_csv,
                          check_compatible, collect_gates, evaluate, gates_csv, run_ablation, train)
from bbfn.model import BBFN, ModelConfig


def _cfg(**kw):
    model_kw = {k: kw.pop(k) for k in list(kw) if k in ModelConfig.__dataclass_fields__}
    model_kw.setdefault("d", 8)
    model_kw.setdefault("heads", 2)
    return TrainConfig(model=ModelConfig(**model_kw), **{"epochs": 2, "batch_size": 8, **kw})


@pytest.fixture(scope="module")
def data():
    spec = SyntheticGenSpec(seed=11, n_min=2, n_max=4)
    return generate(spec, 24, "train"), generate(spec, 8, "valid"), generate(spec, 12, "test")


def test_training_is_deterministic(data):
    tr, va, te = data
    runs = [train(_cfg(seed=3), tr, va) for _ in range(2)]
    assert runs[0].log_lines() == runs[1].log_lines()
    reports = [evaluate(r.model, te)[0] for r in runs]
    assert reports[0] == reports[1]


def test_log_fields_and_lambda_zero(data):
    tr, va, _ = data
    res = train(_cfg(lam=0.0, epochs=3), tr, va)
    for row in res.history:
        assert row["loss"] == row["task_loss"]
        assert {"epoch", "sep_loss", "val_mae", "val_corr", "val_acc7", "val_acc2", "val_f1"} <= set(row)
    res = train(_cfg(use_separator=False), tr)
    assert all(row["sep_loss"] == 0.0 for row in res.history)


def test_early_stopping_keeps_best(data):
    tr, va, _ = data
    res = train(_cfg(epochs=30, patience=2, lr=0.05), tr, va)
    maes = [row["val_mae"] for row in res.history]
    assert len(res.history) < 30
    assert res.best_epoch == int(np.argmin(maes))
    assert evaluate(res.model, va)[0].mae == pytest.approx(min(maes), abs=1e-12)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported(data):
    tr, _, _ = data
    with pytest.raises(DivergenceError, match="non-finite"):
        train(_cfg(lr=1e8, epochs=3), tr)


def test_train_config_validation(data):
    with pytest.raises(ValueError):
        train(_cfg(batch_size=1, group_size=2), data[0])
    with pytest.raises(ValueError):
        train(_cfg(seed=None), data[0])


def test_checkpoint_round_trip(tmp_path, data):
    tr, va, te = data
    path = tmp_path / "m.ckpt"
    res = train(_cfg(checkpoint_path=str(path), log_path=str(tmp_path / "log.jsonl")), tr, va)
    loaded, extra = checkpoint.load(path)
    assert extra["best_epoch"] == res.best_epoch
    a, ya, pa = evaluate(res.model, te)
    b, yb, pb = evaluate(loaded, te)
    assert pa.tobytes() == pb.tobytes() and a == b
    assert (tmp_path / "log.jsonl").read_text() == res.log_lines()


def test_checkpoint_rejects_corruption(tmp_path, data):
    model = BBFN(ModelConfig(d=8, heads=2)).to(np.float32)
    raw = checkpoint.to_bytes(model)
    with pytest.raises(CheckpointError):
        checkpoint.from_bytes(b"XXXXXXXX" + raw[8:])
    with pytest.raises(CheckpointError):
        checkpoint.from_bytes(raw + b"\0")
    other = checkpoint.to_bytes(BBFN(ModelConfig(d=8, heads=2, use_gates=False)))
    meta_end = 16 + int.from_bytes(raw[12:16], "little")
    other_meta_end = 16 + int.from_bytes(other[12:16], "little")
    with pytest.raises(CheckpointError):
        checkpoint.from_bytes(raw[:meta_end] + other[other_meta_end:])


def test_compatibility_check():
    cfg = ModelConfig(d=8, heads=2)
    spec = SyntheticGenSpec()
    check_compatible(cfg, manifest_for(spec))
    with pytest.raises(CompatibilityError):
        check_compatible(cfg, manifest_for(SyntheticGenSpec(dims={"t": 5, "v": 8, "a": 6})))
    with pytest.raises(CompatibilityError):
        check_compatible(cfg, manifest_for(SyntheticGenSpec(task="binary")))


def test_constant_prediction_flags_correlation(data):
    model = BBFN(ModelConfig(d=8, heads=2)).to(np.float32)
    model.head.fc2.weight.data[...] = 0
    model.head.fc2.bias.data[...] = 0.3
    rep, y, _ = evaluate(model, data[2])
    assert not rep.corr_defined and math.isnan(rep.corr)
    assert rep.acc2_count == int(np.sum(y != 0))


def test_gate_export(data):
    model = BBFN(ModelConfig(d=8, heads=2)).to(np.float32)
    traces = collect_gates(model, data[2], layer=1)
    assert [t.label for t in traces] == ["TV-T-c", "TV-T-r", "TV-V-c", "TV-V-r",
                                         "TA-T-c", "TA-T-r", "TA-A-c", "TA-A-r"]
    assert all(np.all((t.values > 0) & (t.values < 1)) for t in traces)
    rows = list(csv.reader(io.StringIO(gates_csv(traces))))
    assert len(rows) == 9 and len(rows[1]) == 5 + 8
    for name in model.gate_parameter_names():
        model.parameters()[name].data[...] = 0
    assert all(np.all(t.values == 0.5) for t in collect_gates(model, data[2], layer=0))
    with pytest.raises(ValueError):
        collect_gates(model, data[2], layer=2)
    assert collect_gates(BBFN(ModelConfig(d=8, heads=2, use_gates=False)), data[2], 0) == []


def test_ablation_table_shape(data):
    tr, va, te = data
    plan = ABLATION_PLAN + [("broken", {"modules": ("XX",)})]
    rows = run_ablation(_cfg(epochs=1), tr, va, te, plan=plan)
    table = list(csv.reader(io.StringIO(ablation_csv(rows))))
    assert table[0] == ["description", "mae", "corr", "acc7", "acc2", "f1"]
    assert [r[0] for r in table[1:11]] == [name for name, _ in ABLATION_PLAN]
    assert all(all(v != "nan" for v in r[1:]) for r in table[1:11])
    assert table[11][1:] == ["nan"] * 5 and rows[-1].error
    full, no_both = rows[5], rows[8]
    assert no_both.num_parameters < full.num_parameters
    cfg = ModelConfig(d=8, heads=2, use_gates=False, use_separator=False)
    model = BBFN(cfg)
    assert not model.gate_parameter_names() and not model.discriminator_parameter_names()
