"""Command-line entry point: ``bbfn <verb> [options]``.

Exit codes: 0 ok, 1 usage, 2 data error, 3 divergence, 4 gradcheck failure.
Log verbosity comes from ``BBFN_LOG_LEVEL`` (default WARNING).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import checkpoint
from .checkpoint import CheckpointError
from .config import KEYS, ConfigSyntaxError, build_train_config, parse_file
from .data import DataError, SyntheticGenSpec, generate, load, manifest_for, save
from .harness import (CompatibilityError, DivergenceError, ablation_csv, check_compatible, collect_gates,
                      config_for_manifest, evaluate, gates_csv, run_ablation, train)
from .metrics import error_histogram, histogram_csv
from .model import ConfigError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED, EXIT_GRADCHECK = 0, 1, 2, 3, 4

class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_config_flags(p):
    p.add_argument("--config", help="key = value config file")
    for key in KEYS:
        p.add_argument("--" + key.replace("_", "-"), dest="cfg_" + key, metavar="VALUE")


def _settings(args) -> dict:
    settings = parse_file(args.config) if args.config else {}
    for key, (conv, _) in KEYS.items():
        raw = getattr(args, "cfg_" + key, None)
        if raw is not None:
            try:
                settings[key] = conv(raw)
            except ValueError as exc:
                raise UsageError(f"--{key.replace('_', '-')}: {exc}") from None
    return settings


def _write(path, text: str):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def cmd_generate_data(args):
    spec = SyntheticGenSpec(seed=args.seed, n_min=args.n_min, n_max=args.n_max,
                            weights=tuple(float(x) for x in args.weights.split(",")), noise=args.noise,
                            dims=dict(zip("tva", (int(x) for x in args.dims.split(",")))), task=args.task,
                            label_mode=args.label_mode, text_source=args.text_source)
    try:
        spec.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sizes = {"train": args.train, "valid": args.valid, "test": args.test}
    for split, count in sizes.items():
        if count > 0:
            save(out / f"{split}.jsonl", manifest_for(spec, split, sizes), generate(spec, count, split))
    print(json.dumps({"out_dir": str(out), "splits": sizes}))


def _load_split(path, required=True):
    if path is None:
        if required:
            raise UsageError("missing dataset path")
        return None, None
    return load(path)


def cmd_train(args):
    cfg = build_train_config(_settings(args))
    manifest, train_recs = _load_split(cfg.train_path)
    _, valid_recs = _load_split(cfg.valid_path, required=False)
    cfg.model = config_for_manifest(cfg.model, manifest)
    res = train(cfg, train_recs, valid_recs)
    if cfg.log_path is None:
        sys.stdout.write(res.log_lines())
    print(json.dumps({"best_epoch": res.best_epoch, "epochs_run": len(res.history),
                      "checkpoint": cfg.checkpoint_path}), file=sys.stderr)


def cmd_evaluate(args):
    model, _ = checkpoint.load(args.checkpoint)
    manifest, records = load(args.data)
    check_compatible(model.config, manifest)
    report, y, y_hat = evaluate(model, records)
    row = {k: (None if isinstance(v, float) and v != v else v) for k, v in report.as_dict().items()}
    _write(args.out, json.dumps(row, sort_keys=True) + "\n")
    if args.hist:
        _write(args.hist, histogram_csv(error_histogram(y, y_hat, args.bin_width)))


def cmd_ablate(args):
    cfg = build_train_config(_settings(args))
    manifest, train_recs = _load_split(cfg.train_path)
    _, valid_recs = _load_split(cfg.valid_path, required=False)
    _, test_recs = _load_split(cfg.test_path or cfg.valid_path)
    cfg.model = config_for_manifest(cfg.model, manifest)
    _write(args.out, ablation_csv(run_ablation(cfg, train_recs, valid_recs, test_recs)))


def cmd_export_gates(args):
    model, _ = checkpoint.load(args.checkpoint)
    manifest, records = load(args.data)
    check_compatible(model.config, manifest)
    layer = args.layer if args.layer is not None else model.config.layers - 1
    _write(args.out, gates_csv(collect_gates(model, records, layer)))


def cmd_gradcheck(args):
    from .checks import run_suite

    results = run_suite(seed=args.seed, max_entries=None if args.full else args.max_entries)
    ok = True
    for name, rep in results:
        print(f"{name:24s} {rep}")
        ok &= rep.passed
    return EXIT_OK if ok else EXIT_GRADCHECK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bbfn", description="bi-bimodal fusion network toolkit")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    g = sub.add_parser("generate-data", help="write synthetic train/valid/test JSON-lines files")
    g.add_argument("--out-dir", required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--train", type=int, default=256)
    g.add_argument("--valid", type=int, default=64)
    g.add_argument("--test", type=int, default=128)
    g.add_argument("--weights", default="1.0,0.3,0.3", help="signal weights for t,v,a")
    g.add_argument("--noise", type=float, default=0.1)
    g.add_argument("--dims", default="12,8,6", help="feature widths for t,v,a")
    g.add_argument("--n-min", type=int, default=4)
    g.add_argument("--n-max", type=int, default=8)
    g.add_argument("--task", choices=("regression", "binary"), default="regression")
    g.add_argument("--label-mode", choices=("continuous", "integer"), default="continuous")
    g.add_argument("--text-source", choices=("features", "tokens"), default="features")
    g.set_defaults(func=cmd_generate_data)

    t = sub.add_parser("train", help="train and save the best checkpoint")
    _add_config_flags(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="metrics of a checkpoint on a dataset")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", default="-")
    e.add_argument("--hist", help="write the absolute-error histogram CSV here")
    e.add_argument("--bin-width", type=float, default=0.05)
    e.set_defaults(func=cmd_evaluate)

    a = sub.add_parser("ablate", help="run the ten-row ablation table")
    _add_config_flags(a)
    a.add_argument("--out", default="-")
    a.set_defaults(func=cmd_ablate)

    x = sub.add_parser("export-gates", help="per-dimension gate values of one layer")
    x.add_argument("--checkpoint", required=True)
    x.add_argument("--data", required=True)
    x.add_argument("--layer", type=int, help="0-based layer index (default: last layer)")
    x.add_argument("--out", default="-")
    x.set_defaults(func=cmd_export_gates)

    c = sub.add_parser("gradcheck", help="finite-difference suite; exit 4 on failure")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--max-entries", type=int, default=8, help="coordinates probed per model parameter tensor")
    c.add_argument("--full", action="store_true", help="probe every model coordinate (slow)")
    c.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("BBFN_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        code = args.func(args)
    except (UsageError, ConfigSyntaxError, ConfigError) as exc:
        print(f"bbfn: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CompatibilityError, CheckpointError, FileNotFoundError) as exc:
        print(f"bbfn: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"bbfn: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
