"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import asyncio
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import erp as erp_mod
from .artifacts import build_artifact, load_model, save_model
from .classical import SvmConfig
from .errors import DataError, NumericError
from .evaluation import class_report, confusion_matrix, cross_validate
from .ingest import (DEFAULT_KEEP_CHANNELS, WINDOW_LEN, assemble_and_split,
                     assemble_by_session, load_session, read_windows,
                     standardize_dataset, standardizer_fit, write_windows)
from .models import MODEL_KINDS, build_estimator
from .nn_core import TrainConfig
from .service import (DEFAULT_PORT, ModelStore, ReplaySession, create_app,
                      replay_run)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise DataError(f"config file not found: {p}")
    if p.suffix == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        with open(p, "rb") as f:
            return tomllib.load(f)
    if p.suffix == ".json":
        return json.loads(p.read_text(encoding="utf-8"))
    raise DataError(f"config must be .toml or .json, got {p.suffix!r}")


def _train_config(cfg: dict, seed: int | None) -> TrainConfig:
    fields = dict(cfg.get("train", {}))
    if seed is not None:
        fields["seed"] = seed
    return TrainConfig(**fields)


def _svm_config(cfg: dict, seed: int | None) -> SvmConfig:
    fields = dict(cfg.get("svm", {}))
    if seed is not None:
        fields["seed"] = seed
    return SvmConfig(**fields)


def cmd_ingest(args) -> int:
    train_sessions = [load_session(stem) for stem in args.stems]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.test_stem:
        test_sessions = [load_session(stem) for stem in args.test_stem]
        train_ds, test_ds = assemble_by_session(train_sessions, test_sessions,
                                                window_len=args.window_len)
    else:
        train_ds, test_ds = assemble_and_split(train_sessions, args.test_fraction,
                                               seed=args.seed, window_len=args.window_len)
    write_windows(out / "train.windows.bin", train_ds)
    write_windows(out / "test.windows.bin", test_ds)
    print(f"train: {len(train_ds)} windows {train_ds.class_counts}")
    print(f"test:  {len(test_ds)} windows {test_ds.class_counts}")
    return 0


def cmd_erp(args) -> int:
    dataset = read_windows(args.windows)
    if args.channel.isdigit():
        channel_idx, channel_name = int(args.channel), args.channel
    else:
        if args.channel not in DEFAULT_KEEP_CHANNELS:
            raise DataError(f"unknown channel {args.channel!r}")
        channel_idx = DEFAULT_KEEP_CHANNELS.index(args.channel)
        channel_name = args.channel
    curve = erp_mod.compute_erp(dataset.windows, channel_idx,
                                class_filter=args.class_filter,
                                channel_name=channel_name)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cls = "all" if args.class_filter is None else str(args.class_filter)
    path = out / f"erp_{channel_name}_{cls}.csv"
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["time_s", "mean_uV", "trial_count"])
        writer.writerows(erp_mod.erp_csv_rows(curve, args.sample_rate))
    print(f"wrote {path} ({curve.trial_count} trials)")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    dataset = read_windows(args.train)
    scaler = standardizer_fit(dataset)
    train_std = standardize_dataset(scaler, dataset)
    estimator = build_estimator(
        args.model,
        train_config=_train_config(cfg, args.seed),
        svm_config=_svm_config(cfg, args.seed),
        hidden_sizes=tuple(cfg.get("mlp", {}).get("hidden_sizes", (256, 128, 64))),
        hidden_size=int(cfg.get("bigru", {}).get("hidden_size", 128)),
    )
    estimator.fit(train_std)
    artifact = build_artifact(estimator.model, standardizer=scaler)
    save_model(artifact, args.out)
    print(f"wrote {args.out}")
    history = getattr(estimator, "history", None)
    if history is not None:
        hist_path = args.history or f"{args.out}.history.jsonl"
        Path(hist_path).write_text(history.to_jsonl(), encoding="utf-8")
        print(f"wrote {hist_path} ({len(history.epochs)} epochs, "
              f"best epoch {history.best_epoch})")
    return 0


def _predictions(artifact_path, dataset):
    from .models import predict_window_values
    from .artifacts import materialize
    from .ingest import standardize_array
    artifact = load_model(artifact_path)
    model = materialize(artifact)
    preds = []
    for w in dataset.windows:
        values = w.values
        if artifact.standardizer is not None:
            values = standardize_array(artifact.standardizer, values)
        cls, _, _ = predict_window_values(artifact.kind, model, values)
        preds.append(cls)
    return artifact, np.array(preds, dtype=np.int64)


def cmd_evaluate(args) -> int:
    dataset = read_windows(args.windows)
    artifact, predicted = _predictions(args.model, dataset)
    cm = confusion_matrix(dataset.labels(), predicted)
    report = class_report(cm)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cm_path = out / f"confusion_{artifact.kind}.csv"
    with open(cm_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["actual\\predicted", "0", "1", "2"])
        for c in range(cm.counts.shape[0]):
            writer.writerow([c] + cm.counts[c].tolist())
    report_path = out / f"report_{artifact.kind}.json"
    report_path.write_text(json.dumps(report.as_dict(), indent=2) + "\n",
                           encoding="utf-8")
    print(f"accuracy {report.accuracy:.4f}; wrote {cm_path} and {report_path}")
    return 0


def cmd_crossval(args) -> int:
    cfg = _load_config(args.config)
    dataset = read_windows(args.windows)

    def factory():
        return build_estimator(
            args.model,
            train_config=_train_config(cfg, args.seed),
            svm_config=_svm_config(cfg, args.seed),
            hidden_sizes=tuple(cfg.get("mlp", {}).get("hidden_sizes", (256, 128, 64))),
            hidden_size=int(cfg.get("bigru", {}).get("hidden_size", 128)),
        )

    result = cross_validate(factory, dataset, k=args.k, seed=args.seed or 42)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cv_path = out / f"cv_{args.model}.json"
    cv_path.write_text(json.dumps(result.as_dict(), indent=2) + "\n", encoding="utf-8")
    report = class_report(confusion_matrix(result.pooled_actual, result.pooled_predicted))
    report_path = out / f"report_{args.model}.json"
    report_path.write_text(json.dumps(report.as_dict(), indent=2) + "\n",
                           encoding="utf-8")
    print(f"cv mean {result.mean:.4f} sd {result.sd:.4f}; wrote {cv_path} and {report_path}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn
    app = create_app(models_dir=args.models, windows_dir=args.windows)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def cmd_replay(args) -> int:
    if args.speed <= 0:
        raise DataError("offline replay needs a positive --speed")
    artifact = load_model(args.model)
    store = ModelStore()
    model_id = Path(args.model).stem
    store.add(model_id, artifact)
    dataset = read_windows(args.windows)
    session = ReplaySession(session_id="cli", dataset=dataset, model_id=model_id,
                            speed=args.speed, include_attention=args.attention)
    typed = []

    async def sink(frame: dict):
        print(json.dumps(frame), flush=True)
        if frame.get("type") == "prediction" and frame.get("key"):
            typed.append(frame["key"])

    asyncio.run(replay_run(session, store, sink))
    print(f"typed: {''.join(typed)!r}", file=sys.stderr)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="cortexkey",
                     description="EEG keystroke decoding pipeline and service")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="cut session bundles into window sets")
    p.add_argument("stems", nargs="+", help="session bundle stems (training pool)")
    p.add_argument("--test-stem", action="append", default=[],
                   help="use subject-wise splitting; repeatable")
    p.add_argument("--out", required=True)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--window-len", type=int, default=WINDOW_LEN)
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("erp", help="export ERP averages as CSV")
    p.add_argument("windows", help="window set file")
    p.add_argument("--channel", required=True, help="channel name or index")
    p.add_argument("--class-filter", type=int, default=None, choices=(0, 1, 2))
    p.add_argument("--sample-rate", type=int, default=erp_mod.DEFAULT_SAMPLE_RATE_HZ)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_erp)

    p = sub.add_parser("train", help="fit a model on a window set")
    p.add_argument("--model", required=True, choices=MODEL_KINDS)
    p.add_argument("--train", required=True, help="training window set file")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None, help="toml or json config")
    p.add_argument("--history", default=None, help="history jsonl path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="confusion matrix + report on a window set")
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--windows", required=True)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("crossval", help="stratified k-fold cross-validation")
    p.add_argument("--model", required=True, choices=MODEL_KINDS)
    p.add_argument("--windows", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("serve", help="run the prediction/replay service")
    p.add_argument("--models", required=True, help="directory of .ekm files")
    p.add_argument("--windows", default=".", help="directory of window sets")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=DEFAULT_PORT)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("replay", help="replay a window set offline, printing events")
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--windows", required=True, help="window set file")
    p.add_argument("--speed", type=float, default=1.0)
    p.add_argument("--attention", action="store_true")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except BrokenPipeError:
        # downstream consumer (e.g. `| head`) closed the pipe; exit quietly
        try:
            sys.stdout.close()
        except OSError:
            pass
        return 0
    except (DataError, FileNotFoundError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
