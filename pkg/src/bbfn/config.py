"""Key-value run configuration.

Grammar, one setting per line::

    # comment
    key = value

Blank lines and text after ``#`` are ignored. Lists are comma separated,
booleans accept true/false/yes/no/on/off/1/0. Unknown keys are errors.
Command-line flags use the same names with dashes (``group_size`` ->
``--group-size``) and override the file.
"""

from __future__ import annotations

from dataclasses import replace

from .harness import TrainConfig
from .model import ModelConfig


class ConfigSyntaxError(ValueError):
    pass


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "yes", "on", "1"):
        return True
    if v in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _modules(s: str) -> tuple:
    return tuple(p.strip().upper() for p in s.replace("+", ",").split(",") if p.strip())


def _opt_int(s: str):
    return None if s.strip().lower() in ("", "none", "auto") else int(s)


# key -> (parser, target) where target is "model" or "train"
KEYS = {
    "modules": (_modules, "model"),
    "d": (int, "model"),
    "layers": (int, "model"),
    "group_size": (int, "model"),
    "lam": (float, "model"),
    "heads": (int, "model"),
    "d_ff": (_opt_int, "model"),
    "gru_hidden": (_opt_int, "model"),
    "use_gates": (_bool, "model"),
    "use_separator": (_bool, "model"),
    "split_gate_encoder": (_bool, "model"),
    "shared_text_encoder": (_bool, "model"),
    "lr": (float, "train"),
    "beta1": (float, "train"),
    "beta2": (float, "train"),
    "epochs": (int, "train"),
    "batch_size": (int, "train"),
    "seed": (int, "train"),
    "patience": (int, "train"),
    "train": (str, "train"),
    "valid": (str, "train"),
    "test": (str, "train"),
    "checkpoint": (str, "train"),
    "log": (str, "train"),
}

_TRAIN_FIELD = {"train": "train_path", "valid": "valid_path", "test": "test_path",
                "checkpoint": "checkpoint_path", "log": "log_path"}


def parse_text(text: str) -> dict[str, object]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigSyntaxError(f"line {lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in KEYS:
            raise ConfigSyntaxError(f"line {lineno}: unknown key {key!r}")
        try:
            out[key] = KEYS[key][0](value)
        except ValueError as exc:
            raise ConfigSyntaxError(f"line {lineno}: {exc}") from None
    return out


def parse_file(path) -> dict[str, object]:
    with open(path, encoding="utf-8") as fh:
        return parse_text(fh.read())


def build_train_config(settings: dict, base: TrainConfig | None = None) -> TrainConfig:
    base = base or TrainConfig()
    model_kw = {k: v for k, v in settings.items() if KEYS[k][1] == "model"}
    train_kw = {_TRAIN_FIELD.get(k, k): v for k, v in settings.items() if KEYS[k][1] == "train"}
    model = ModelConfig.from_dict({**base.model.to_dict(), **model_kw})
    return replace(base, model=model, **train_kw)
