"""Command-line surface: data generation, teacher training, distillation
variants, reuse, sweeps, and report aggregation."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import data as datamod
from . import emdriver, evaluation, knowledge, nn
from .ogve import OgveConfig

CLI_METHODS = ("full-kd", "kcd", "random", "ogve-only", "no-ovr", "no-car", "fixed-eps")
_METHOD_MAP = {name: name for name in emdriver.ALL_METHODS}
_METHOD_MAP["random"] = emdriver.METHOD_RANDOM

OUT_DIR_ENV = "KCDISTILL_OUT_DIR"


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip() != ""]


def _float_list(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip() != ""]


def _seed_list(text: str) -> list[int]:
    if "," in text:
        return _int_list(text)
    return list(range(int(text)))


def _run_dir(tag: str) -> Path:
    root = Path(os.environ.get(OUT_DIR_ENV, "runs"))
    stamp = time.strftime("%Y%m%d-%H%M%S")
    path = root / f"{stamp}-{tag}"
    path.mkdir(parents=True, exist_ok=True)
    return path


def _add_schedule_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rho", type=float, default=0.7, help="final keep ratio")
    p.add_argument("--alpha", type=float, default=0.03, help="frequency weight exponent")
    p.add_argument("--eps-m", type=float, default=0.3, help="max soft-label blend ratio")
    p.add_argument("--epochs", type=int, default=60, help="total training epochs I")
    p.add_argument("--stage-len", type=int, default=10, help="epochs per stage T")


def _add_train_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=5e-4)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr-decay-epochs", type=str, default=None,
                   help="csv of decay epochs; default 62.5/75/87.5%% of the run")
    p.add_argument("--lr-decay-factor", type=float, default=0.1)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--hard-label-weight", type=float, default=0.0)


def _add_run_io_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="dataset directory (train.csv/test.csv)")
    p.add_argument("--teacher-probs", required=True, help=".npy of cached teacher soft labels")
    p.add_argument("--student-hidden", type=str, default="16")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-record", type=str, default=None)
    p.add_argument("--out-metrics", type=str, default=None)


def _build_config(args, parser: argparse.ArgumentParser) -> emdriver.DistillConfig:
    try:
        schedule = emdriver.ScheduleConfig(
            total_epochs=args.epochs, stage_len=args.stage_len, rho=args.rho)
    except ValueError as exc:
        parser.error(str(exc))
    if args.lr_decay_epochs is None:
        decay = tuple(int(np.floor(f * args.epochs)) for f in (0.625, 0.75, 0.875))
    else:
        decay = tuple(_int_list(args.lr_decay_epochs))
    train = nn.TrainConfig(
        lr=args.lr, momentum=args.momentum, weight_decay=args.weight_decay,
        batch_size=args.batch_size, lr_decay_epochs=decay,
        lr_decay_factor=args.lr_decay_factor, temperature=args.temperature,
        hard_label_weight=args.hard_label_weight,
    )
    return emdriver.DistillConfig(schedule=schedule, ogve=OgveConfig(alpha=args.alpha),
                                  eps_m=args.eps_m, train=train, seed=args.seed)


def _load_run_inputs(args):
    dataset = datamod.load_split_dir(args.data)
    teacher_probs = np.load(args.teacher_probs)
    store = knowledge.build_store(dataset.train_features, teacher_probs,
                                  dataset.train_labels)
    return dataset, store


def _persist_record(record: emdriver.RunRecord, args, tag: str) -> Path:
    if args.out_record:
        record_path = Path(args.out_record)
        record_path.parent.mkdir(parents=True, exist_ok=True)
    else:
        record_path = _run_dir(tag) / "record.json"
    record.save(record_path)
    metrics_path = Path(args.out_metrics) if args.out_metrics \
        else record_path.with_name(record_path.stem + "_metrics.csv")
    metrics_path.write_text(record.epochs_csv())
    return record_path


def cmd_gen_data(args) -> int:
    dataset = datamod.gen_gaussian_mixture(args.classes, args.dims, args.per_class,
                                           args.spread, args.seed)
    out = Path(args.out)
    datamod.save_split_dir(out, dataset)
    meta = {
        "classes": args.classes, "dims": args.dims, "per_class": args.per_class,
        "spread": args.spread, "seed": args.seed,
        "n_train": int(dataset.train_indices.size),
        "n_test": int(dataset.test_indices.size),
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(f"wrote {out}/train.csv ({dataset.train_indices.size} rows), "
          f"{out}/test.csv ({dataset.test_indices.size} rows)")
    return 0


def cmd_train_teacher(args) -> int:
    dataset = datamod.load_split_dir(args.data)
    cfg = nn.TrainConfig.desk_default(args.epochs, lr=args.lr,
                                      batch_size=args.batch_size)
    dims = (dataset.dim, *_int_list(args.hidden), dataset.class_count)
    model, probs = nn.train_teacher(dataset.train_features, dataset.train_labels,
                                    dims, cfg, args.epochs, args.seed)
    nn.save_model(args.out_model, model)
    np.save(args.out_probs, probs)
    train_acc = evaluation.accuracy(model, dataset.train_features, dataset.train_labels)
    test_acc = evaluation.accuracy(model, dataset.test_features, dataset.test_labels)
    print(f"teacher dims={dims} train_acc={train_acc:.4f} test_acc={test_acc:.4f} "
          f"probs={args.out_probs}")
    return 0


def cmd_distill(args, parser) -> int:
    config = _build_config(args, parser)
    dataset, store = _load_run_inputs(args)
    method = _METHOD_MAP[args.method]
    student = emdriver.init_student(store.dim, _int_list(args.student_hidden),
                                    store.num_classes, args.seed)
    student, record = emdriver.run_baseline(config, store, student, dataset, method)
    record_path = _persist_record(record, args, f"{method}-s{args.seed}")
    if args.export_labels:
        knowledge.save_labels(args.export_labels, record.final_labeling())
    print(f"method={method} seed={args.seed} final_acc={record.final_accuracy:.4f} "
          f"relative_cost={record.cost.relative_cost:.4f} "
          f"realized={record.cost.realized_relative_cost:.4f} record={record_path}")
    return 0


def cmd_reuse(args, parser) -> int:
    config = _build_config(args, parser)
    dataset, store = _load_run_inputs(args)
    labeling = knowledge.load_labels(args.labels)
    student = emdriver.init_student(store.dim, _int_list(args.student_hidden),
                                    store.num_classes, args.seed)
    student, record = evaluation.reuse_run(labeling, config, store, dataset,
                                           args.mode, student)
    record_path = _persist_record(record, args, f"reuse-{args.mode}-s{args.seed}")
    print(f"reuse mode={args.mode} seed={args.seed} "
          f"final_acc={record.final_accuracy:.4f} record={record_path}")
    return 0


def cmd_sweep(args, parser) -> int:
    base = _build_config(args, parser)
    dataset, store = _load_run_inputs(args)
    methods = [_METHOD_MAP[m] for m in args.methods.split(",")]
    rows = evaluation.ratio_sweep(
        store, dataset, base, _int_list(args.student_hidden),
        rho_grid=_float_list(args.rho_grid), seeds=_seed_list(args.seeds),
        methods=methods,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(evaluation.sweep_rows_to_csv(rows))
    print(f"wrote {len(rows)} sweep rows to {out}")
    return 0


def cmd_report(args) -> int:
    records_dir = Path(args.records)
    paths = sorted(records_dir.glob("**/*.json"))
    records = []
    for p in paths:
        try:
            records.append((p, emdriver.RunRecord.load(p)))
        except (KeyError, TypeError, ValueError):
            continue  # not a run record
    if not records:
        raise ValueError(f"no run records found under {records_dir}")
    lines = ["record,method,rho,seed,final_accuracy,relative_cost,"
             "realized_relative_cost,wall_time_s"]
    for p, r in records:
        lines.append(f"{p},{r.method},{r.config['rho']},{r.seed},"
                     f"{r.final_accuracy:.10g},{r.cost.relative_cost:.10g},"
                     f"{r.cost.realized_relative_cost:.10g},{r.wall_time_s:.3f}")
    out = Path(args.out_csv)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(lines) + "\n")
    print(f"wrote {len(records)} record summaries to {out}")
    if args.emit_plot_data:
        _emit_plot_data(records, out)
    return 0


def _emit_plot_data(records, out_csv: Path) -> None:
    by_key: dict[tuple, list[float]] = {}
    for _, r in records:
        by_key.setdefault((r.method, r.config["rho"]), []).append(r.final_accuracy)
    curve = ["method,rho,mean_accuracy,std_accuracy,runs"]
    for (method, rho), accs in sorted(by_key.items()):
        arr = np.asarray(accs)
        curve.append(f"{method},{rho},{arr.mean():.10g},{arr.std():.10g},{arr.size}")
    curve_path = out_csv.with_name(out_csv.stem + "_rho_curve.csv")
    curve_path.write_text("\n".join(curve) + "\n")

    sized: dict[int, list[tuple[str, list[int]]]] = {}
    for p, r in records:
        sized.setdefault(len(r.final_labels), []).append((str(p), r.final_labels))
    biggest = max(sized.values(), key=len)
    matrix = evaluation.hamming_matrix([np.asarray(lab) for _, lab in biggest])
    ham = ["record," + ",".join(name for name, _ in biggest)]
    for i, (name, _) in enumerate(biggest):
        ham.append(name + "," + ",".join(str(int(v)) for v in matrix[i]))
    ham_path = out_csv.with_name(out_csv.stem + "_hamming.csv")
    ham_path.write_text("\n".join(ham) + "\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kcdistill",
        description="Stage-scheduled knowledge distillation on a condensed, "
                    "value-ranked knowledge set.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic blob dataset")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--dims", type=int, default=16)
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--spread", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train-teacher", help="train and cache the teacher")
    p.add_argument("--data", required=True)
    p.add_argument("--hidden", type=str, default="64,64")
    p.add_argument("--epochs", type=int, default=80)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-model", required=True)
    p.add_argument("--out-probs", required=True)

    p = sub.add_parser("distill", help="run a distillation variant")
    p.add_argument("--method", choices=CLI_METHODS, default="kcd")
    _add_schedule_args(p)
    _add_train_args(p)
    _add_run_io_args(p)
    p.add_argument("--export-labels", type=str, default=None,
                   help="write the final stage labeling to this .kcl path")

    p = sub.add_parser("reuse", help="retrain against an exported labeling")
    p.add_argument("--labels", required=True)
    p.add_argument("--mode", choices=emdriver.REUSE_MODES, required=True)
    _add_schedule_args(p)
    _add_train_args(p)
    _add_run_io_args(p)

    p = sub.add_parser("sweep", help="keep-ratio sweep over seeds and methods")
    p.add_argument("--rho-grid", type=str, default="0.3,0.5,0.6,0.7,0.8,0.9,1.0")
    p.add_argument("--seeds", type=str, default="5",
                   help="seed count, or csv of explicit seeds")
    p.add_argument("--methods", type=str, default="kcd,random")
    p.add_argument("--out", required=True)
    _add_schedule_args(p)
    _add_train_args(p)
    _add_run_io_args(p)

    p = sub.add_parser("report", help="aggregate run records into CSV")
    p.add_argument("--records", required=True)
    p.add_argument("--out-csv", required=True)
    p.add_argument("--emit-plot-data", action="store_true")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "gen-data":
            return cmd_gen_data(args)
        if args.command == "train-teacher":
            return cmd_train_teacher(args)
        if args.command == "distill":
            return cmd_distill(args, parser)
        if args.command == "reuse":
            return cmd_reuse(args, parser)
        if args.command == "sweep":
            return cmd_sweep(args, parser)
        if args.command == "report":
            return cmd_report(args)
        parser.error(f"unknown command {args.command!r}")
    except (ValueError, OSError, emdriver.DistillationError,
            knowledge.LabelStreamError, datamod.DataFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
