"""Command-line entry point wiring the full workflow.

Subcommands: preprocess, encode-labels, mrf, train, eval, predict, bench.
Exit codes: 0 success, 1 validation error (bad arguments or inputs),
2 runtime failure. Training, evaluation, and benchmark runs write their
outputs under a fresh `runs/<timestamp>-<command>/` directory together
with an immutable manifest.json snapshotting configuration and seeds.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

from . import __version__, bench as bench_mod, container, dsp, labels as labels_mod, models
from .augment import AugmentConfig
from .training import TrainConfig, evaluate, predict_segment, train

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="simpfu", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="WAV directory -> spectrogram files")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--hop", type=int, default=938)

    p = sub.add_parser("encode-labels", help="annotation CSV -> label matrix files")
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", dest="out_dir", required=True)

    p = sub.add_parser("mrf", help="receptive-field report for model variants")
    p.add_argument("--group", choices=models.GROUPS)
    p.add_argument("--index", type=int)
    p.add_argument("--all", action="store_true")
    p.add_argument("--out", help="CSV path for --all (default: stdout)")

    p = sub.add_parser("train", help="train one variant on prepared data")
    p.add_argument("--spec-dir", required=True)
    p.add_argument("--labels-dir", required=True)
    p.add_argument("--group", required=True, choices=models.GROUPS)
    p.add_argument("--index", required=True, type=int)
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--target-epoch-size", type=int)
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--runs-dir", default="runs")

    p = sub.add_parser("eval", help="evaluate trained weights on a test set")
    p.add_argument("--weights", required=True)
    p.add_argument("--spec-dir", required=True)
    p.add_argument("--labels-dir", required=True)
    p.add_argument("--runs-dir", default="runs")

    p = sub.add_parser("predict", help="per-class scores for spectrogram files")
    p.add_argument("--weights", required=True)
    p.add_argument("--spec", required=True, help="a .sfus file or a directory of them")
    p.add_argument("--out", help="CSV path (default: stdout)")

    p = sub.add_parser("bench", help="measure the inference processing factor")
    p.add_argument("--model", required=True, help="weights file")
    p.add_argument("--mode", required=True, choices=["sequential", "batched"])
    p.add_argument("--n", required=True, type=int)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--include-dsp", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="report CSV (appended)")
    p.add_argument("--runs-dir", default="runs")
    return parser


def _require_dir(path_str: str) -> Path:
    path = Path(path_str)
    if not path.is_dir():
        raise UsageError(f"not a directory: {path}")
    return path


def _require_file(path_str: str) -> Path:
    path = Path(path_str)
    if not path.is_file():
        raise UsageError(f"no such file: {path}")
    return path


def _new_run_dir(root: str, command: str) -> Path:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S")
    base = Path(root) / f"{stamp}-{command}"
    path = base
    k = 1
    while path.exists():
        path = Path(f"{base}-{k}")
        k += 1
    path.mkdir(parents=True)
    return path


def _write_manifest(run_dir: Path, command: str, argv, config: dict, seeds, artifacts, started: float) -> None:
    manifest = {
        "command": command,
        "argv": list(argv),
        "config": config,
        "seeds": seeds,
        "artifacts": [str(a) for a in artifacts],
        "started_utc": datetime.fromtimestamp(started, timezone.utc).isoformat(),
        "finished_utc": datetime.now(timezone.utc).isoformat(),
        "version": __version__,
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def _cmd_preprocess(args) -> int:
    in_dir = _require_dir(args.in_dir)
    wavs = sorted(in_dir.glob("*.wav"))
    if not wavs:
        raise UsageError(f"no .wav files in {in_dir}")
    cfg = dsp.DspConfig(hop=args.hop)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n = 0
    for wav in wavs:
        for seg in dsp.load_wav_segments(wav):
            spec = dsp.preprocess(seg, cfg)
            if spec.degenerate:
                print(f"warning: {wav.name} segment {seg.segment_index} is flat", file=sys.stderr)
            container.write_spectrogram(out_dir / f"{seg.source_id}_{seg.segment_index}.sfus", spec.data)
            n += 1
    print(f"wrote {n} spectrograms to {out_dir}")
    return EXIT_OK


def _cmd_encode_labels(args) -> int:
    csv_path = _require_file(args.annotations)
    groups = labels_mod.read_annotations_csv(csv_path)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for segment_id, annotations in groups.items():
        container.write_labels(out_dir / f"{segment_id}.sful", labels_mod.encode(annotations))
    print(f"wrote {len(groups)} label matrices to {out_dir}")
    return EXIT_OK


def _report_line(report: models.MrfReport) -> str:
    return (
        f"model={report.model_id} output_res={report.output_time_res} "
        f"mrf_bins={report.mrf_time_bins} mrf_seconds={report.mrf_seconds:.3g} "
        f"n_params={report.n_params}"
    )


def _cmd_mrf(args) -> int:
    if args.all:
        lines = ["group,index,output_res,mrf_bins,mrf_seconds,n_params"]
        for report in models.table4_report():
            lines.append(
                f"{report.group},{report.index},{report.output_time_res},"
                f"{report.mrf_time_bins},{report.mrf_seconds:.3g},{report.n_params}"
            )
        text = "\n".join(lines) + "\n"
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
        return EXIT_OK
    if args.group is None or args.index is None:
        raise UsageError("mrf needs --group and --index (or --all)")
    try:
        spec = models.ModelSpec(args.group, args.index)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    print(_report_line(models.compute_mrf(spec)))
    return EXIT_OK


def _load_dataset(spec_dir: Path, labels_dir: Path):
    pairs = []
    for spec_path in sorted(spec_dir.glob("*.sfus")):
        label_path = labels_dir / (spec_path.stem + ".sful")
        if not label_path.is_file():
            raise UsageError(f"no label file for {spec_path.stem}")
        pairs.append((container.read_spectrogram(spec_path), container.read_labels(label_path)))
    if not pairs:
        raise UsageError(f"no .sfus files in {spec_dir}")
    return pairs


_CONFIG_KEYS = {
    "epochs": int,
    "batch_size": int,
    "lr0": float,
    "decay": float,
    "replicates": int,
    "seed": int,
    "target_epoch_size": int,
    "max_freq_shift": int,
    "mix_prob": float,
    "augment": str,
}


def _read_config_file(path: Path) -> dict:
    values = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, _, value = (part.strip() for part in line.partition("="))
        if key not in _CONFIG_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _CONFIG_KEYS[key](value)
    return values


def _train_config(args) -> TrainConfig:
    values = _read_config_file(_require_file(args.config)) if args.config else {}
    for key in ("epochs", "batch_size", "replicates", "seed", "target_epoch_size"):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    augment_on = values.pop("augment", "on") != "off" and not args.no_augment
    aug_keys = {k: values.pop(k) for k in ("max_freq_shift", "mix_prob") if k in values}
    augment = AugmentConfig(**aug_keys) if augment_on else None
    try:
        return TrainConfig(augment=augment, **values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad training config: {exc}") from exc


def _cmd_train(args, argv) -> int:
    spec_dir = _require_dir(args.spec_dir)
    labels_dir = _require_dir(args.labels_dir)
    try:
        model_spec = models.ModelSpec(args.group, args.index)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    cfg = _train_config(args)
    dataset = _load_dataset(spec_dir, labels_dir)

    started = time.time()
    run_dir = _new_run_dir(args.runs_dir, "train")
    artifacts = []
    seeds = [cfg.seed + r for r in range(cfg.replicates)]
    loss_rows = ["replicate,epoch,loss"]
    for r, seed in enumerate(seeds):
        rep_cfg = TrainConfig(**{**asdict(cfg), "seed": seed, "augment": cfg.augment})
        result = train(dataset, model_spec, rep_cfg)
        weights_path = run_dir / f"weights_{model_spec.model_id}_r{r}.sfuw"
        models.save_model(weights_path, result.network, extra={"seed": seed})
        artifacts.append(weights_path)
        for epoch, value in enumerate(result.losses):
            loss_rows.append(f"{r},{epoch},{value:.6f}")
        print(f"replicate {r}: final loss {result.losses[-1]:.4f}" if result.losses else f"replicate {r}: no epochs")
    losses_path = run_dir / "losses.csv"
    losses_path.write_text("\n".join(loss_rows) + "\n", encoding="utf-8")
    artifacts.append(losses_path)
    config_snapshot = {**asdict(cfg), "augment": asdict(cfg.augment) if cfg.augment else None,
                       "group": args.group, "index": args.index}
    _write_manifest(run_dir, "train", argv, config_snapshot, seeds, artifacts, started)
    print(f"run directory: {run_dir}")
    return EXIT_OK


def _cmd_eval(args, argv) -> int:
    weights = _require_file(args.weights)
    dataset = _load_dataset(_require_dir(args.spec_dir), _require_dir(args.labels_dir))
    net = models.load_model(weights)
    started = time.time()
    report = evaluate(net, dataset)
    run_dir = _new_run_dir(args.runs_dir, "eval")
    csv_path = run_dir / "report.csv"
    rows = ["class_id,auc,ap,proportion"]
    for c, auc_c, ap_c, prop in report.rows():
        rows.append(f"{c},{auc_c:.6f},{ap_c:.6f},{prop:.6f}")
    csv_path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    summary = {
        "model_id": net.model_id,
        "macro_auc": report.macro_auc,
        "macro_ap": report.macro_ap,
        "n_segments": report.n_segments,
        "undefined_classes": report.undefined_classes,
        "weights": str(weights),
    }
    summary_path = run_dir / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2), encoding="utf-8")
    _write_manifest(run_dir, "eval", argv, {"weights": str(weights)}, [], [csv_path, summary_path], started)
    print(f"macro AUC {report.macro_auc:.4f}  macro AP {report.macro_ap:.4f}  ({run_dir})")
    return EXIT_OK


def _cmd_predict(args) -> int:
    net = models.load_model(_require_file(args.weights))
    spec_path = Path(args.spec)
    if spec_path.is_dir():
        files = sorted(spec_path.glob("*.sfus"))
        if not files:
            raise UsageError(f"no .sfus files in {spec_path}")
    elif spec_path.is_file():
        files = [spec_path]
    else:
        raise UsageError(f"no such file or directory: {spec_path}")
    lines = ["segment_id,class_id,score"]
    for path in files:
        scores = predict_segment(net, container.read_spectrogram(path))
        lines.extend(f"{path.stem},{c},{s:.6f}" for c, s in enumerate(scores))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_bench(args, argv) -> int:
    net = models.load_model(_require_file(args.model))
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    started = time.time()
    if args.mode == "sequential":
        report = bench_mod.bench_sequential(net, args.n, include_dsp=args.include_dsp, seed=args.seed)
    else:
        report = bench_mod.bench_batched(net, args.n, batch=args.batch, seed=args.seed)
    bench_mod.append_report_csv(report, args.out)
    run_dir = _new_run_dir(args.runs_dir, "bench")
    config = {"mode": args.mode, "n": args.n, "batch": args.batch, "include_dsp": args.include_dsp}
    _write_manifest(run_dir, "bench", argv, config, [args.seed], [Path(args.out)], started)
    print(
        f"{report.model_id} {report.mode}: {report.n_segments} segments in "
        f"{report.wall_time_s:.3f}s -> processing_factor={report.processing_factor:.2f}"
    )
    return EXIT_OK


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "preprocess":
            return _cmd_preprocess(args)
        if args.command == "encode-labels":
            return _cmd_encode_labels(args)
        if args.command == "mrf":
            return _cmd_mrf(args)
        if args.command == "train":
            return _cmd_train(args, argv)
        if args.command == "eval":
            return _cmd_eval(args, argv)
        if args.command == "predict":
            return _cmd_predict(args)
        if args.command == "bench":
            return _cmd_bench(args, argv)
        raise UsageError(f"unknown command {args.command!r}")
    except (UsageError, dsp.DspError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # runtime failure: divergence, I/O, ...
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
