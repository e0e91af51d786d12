"""Command line entry point (``ecglstm``).

Every command writes a JSON run manifest next to its main output
(``<output>.manifest.json``) holding the argv, the fully resolved config,
the seed, input/output paths, the tool version and the wall-clock. ``rerun``
replays a manifest.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import shutil
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

from . import __version__, evaluation, net, pipeline, plotting, segmenter, synth, train
from .config import PipelineConfig, apply_overrides, parse_overrides
from .core import DEFAULT_RATE, DatasetIndex, load_recording, split_dataset, write_recording

log = logging.getLogger("ecglstm")


class UsageError(Exception):
    pass


# --------------------------------------------------------------------- helpers

def _config(args) -> PipelineConfig:
    try:
        cfg = apply_overrides(PipelineConfig(), parse_overrides(args.config or []))
    except (KeyError, ValueError) as exc:
        raise UsageError(f"--config: {exc}") from None
    if args.seed is not None:
        cfg = replace(cfg, train=replace(cfg.train, seed=args.seed))
    return cfg


def _write_manifest(output: Path, args, cfg: PipelineConfig, inputs, outputs, started: float) -> Path:
    manifest = {
        "command": args.command,
        "argv": args.argv,
        "config": cfg.to_dict(),
        "seed": cfg.train.seed if args.command != "synth" else args.seed or 0,
        "threads": args.threads,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "version": __version__,
        "wall_clock": {
            "started": datetime.fromtimestamp(started, timezone.utc).isoformat(),
            "seconds": round(time.time() - started, 3),
        },
    }
    path = output.with_name(output.name + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _recording_paths(path: Path) -> list[Path]:
    if path.is_dir():
        found = sorted(path.glob("*.ecgb")) + sorted(path.glob("*.csv"))
        found = [p for p in found if p.name not in ("labels.csv", "truth.csv", "manifest.csv")]
        if not found:
            raise FileNotFoundError(f"no recordings in {path}")
        return found
    if not path.is_file():
        raise FileNotFoundError(path)
    return [path]


def _index(args, cfg: PipelineConfig, split: str = "all") -> DatasetIndex:
    index = DatasetIndex.from_directory(args.data, args.labels)
    if split == "all":
        return index
    index = split_dataset(index, cfg.eval.split_ratio, cfg.eval.split_seed)
    return index.subset(split)


# -------------------------------------------------------------------- commands

def cmd_synth(args, cfg):
    out = Path(args.out)
    index = synth.generate_corpus(args.per_class, args.seed or 0, out, cfg.synth)
    print(f"{len(index)} records written to {out}")
    return out, [], [out]


def cmd_qrs(args, cfg):
    out = Path(args.out)
    paths = _recording_paths(Path(args.input))

    def one(p):
        rec = load_recording(p, args.rate)
        return rec, pipeline.detect_peaks(rec, cfg)

    results = pipeline.map_ordered(one, paths, args.threads)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["record_id", "lead", "sample_index"])
        for rec, peaks in results:
            w.writerows((rec.record_id, peaks.lead, int(i)) for i in peaks.indices)
    outputs = [out]
    if args.figures:
        fig_dir = Path(args.figures)
        fig_dir.mkdir(parents=True, exist_ok=True)
        for rec, peaks in results:
            outputs.append(plotting.peaks_figure(
                rec.samples[peaks.lead], peaks.indices, rec.sampling_rate,
                fig_dir / f"{rec.record_id}_peaks.png", f"{rec.record_id} lead {peaks.lead_name}"))
    print(f"{sum(len(p) for _, p in results)} peaks in {len(results)} recordings -> {out}")
    return out, paths, outputs


def cmd_preprocess(args, cfg):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    src = Path(args.input)
    paths = _recording_paths(src)

    def one(p):
        rec = pipeline.preprocess_recording(load_recording(p, args.rate), cfg)
        dest = out / f"{rec.record_id}.ecgb"
        write_recording(rec, dest)
        return dest

    outputs = pipeline.map_ordered(one, paths, args.threads)
    if src.is_dir() and (src / "labels.csv").is_file():
        shutil.copyfile(src / "labels.csv", out / "labels.csv")
    print(f"{len(outputs)} recordings preprocessed -> {out}")
    return out, paths, outputs


def cmd_segment(args, cfg):
    out = Path(args.out)
    index = _index(args, cfg, args.split)
    kids = pipeline.record_children(index.entries, cfg, args.threads)
    segs = []
    for entry, k in zip(index.entries, kids):
        if not k.preprocessed:
            log.warning("%s: no child segments (%d peaks)", entry.record_id, len(k.peaks))
        segs += k.preprocessed + k.raw
    manifest = segmenter.write_segment_store(segs, out)
    print(f"{len(segs)} segments from {len(index)} records -> {out}")
    return out, [Path(args.data)], [out, manifest]


def cmd_train(args, cfg):
    out = Path(args.out)
    if args.segments:
        stored = segmenter.read_segment_store(args.segments)
        # same order as training from records: preprocessed first, then raw twins
        pre = [s for s in stored if s.preprocessed]
        raw = [s for s in stored if not s.preprocessed]
        data = train.augment(pre, raw, cfg.train.augment)[0] if len(raw) == len(pre) else pre
        val = segmenter.read_segment_store(args.val_segments) if args.val_segments else []
        val = [s for s in val if not s.preprocessed]
        inputs = [Path(args.segments)] + ([Path(args.val_segments)] if args.val_segments else [])
    else:
        if not args.data:
            raise UsageError("train needs --data or --segments")
        index = split_dataset(DatasetIndex.from_directory(args.data, args.labels),
                              cfg.eval.split_ratio, cfg.eval.split_seed)
        data, val = pipeline.training_sets(index, cfg, args.threads, cfg.train.augment)
        inputs = [Path(args.data)]
    if not data:
        raise ValueError("no training segments")
    log_path = Path(args.log) if args.log else out.with_name(out.name + ".log.csv")
    model = net.he_init(cfg.model, cfg.train.seed)
    with open(log_path, "w", encoding="utf-8") as fh:
        fh.write("epoch,mean_loss,val_acc,seconds\n")

        def on_epoch(rec):
            fh.write(rec.csv_line() + "\n")
            fh.flush()
            log.info("epoch %d loss %.4f val_acc %.4f", rec.epoch, rec.mean_loss, rec.val_acc)

        result = train.train(model, data, cfg.train, val, on_epoch)
    net.save_checkpoint(result.state, out)
    print(f"trained on {len(data)} segments, best epoch {result.best_epoch} -> {out}")
    return out, inputs, [out, log_path]


def cmd_eval(args, cfg):
    out = Path(args.out)
    state = net.load_checkpoint(args.model)
    index = _index(args, cfg, args.split)
    report = evaluation.evaluate(state, index, cfg, args.threads)
    report.write(out)
    fig = Path(args.figure) if args.figure else out.with_suffix(".png")
    plotting.confusion_figure(report.confusion, fig,
                              f"simple-mean F1 {report.simple_mean:.3f}")
    print(f"f1_simple_mean={report.simple_mean:.6f} f1_weighted_mean={report.weighted_mean:.6f} "
          f"evaluated={int(report.confusion.sum())} failed={len(report.failed)}")
    return out, [Path(args.model), Path(args.data)], [out, fig]


def cmd_predict(args, cfg):
    state = net.load_checkpoint(args.model)
    rec = load_recording(args.input, args.rate)
    pred = evaluation.predict_record(state, rec, cfg)
    line = (f"{pred.record_id},{pred.label.code},{pred.children},{int(pred.fallback)},"
            f"{';'.join(str(v) for v in pred.votes)}")
    print(line)
    if args.out:
        out = Path(args.out)
        out.write_text("record_id,predicted,children,fallback,votes\n" + line + "\n", encoding="utf-8")
        return out, [Path(args.input)], [out]
    return None, [Path(args.input)], []


def cmd_rerun(args, cfg):
    manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    code = main(manifest["argv"])
    if code:
        raise RuntimeError(f"replayed command exited with {code}")
    return None, [Path(args.manifest)], []


COMMANDS = {
    "synth": cmd_synth, "qrs": cmd_qrs, "preprocess": cmd_preprocess, "segment": cmd_segment,
    "train": cmd_train, "eval": cmd_eval, "predict": cmd_predict, "rerun": cmd_rerun,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (training and synth)")
    common.add_argument("--threads", type=int, default=0,
                        help="worker threads for per-record work; 0 = sequential")
    common.add_argument("--config", action="append", metavar="SECTION.KEY=VALUE",
                        help="override a config value; repeatable")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ecglstm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("qrs", parents=[common], help="R-peak CSV for recordings")
    p.add_argument("--input", required=True, help="recording file or directory")
    p.add_argument("--out", required=True)
    p.add_argument("--figures", help="directory for per-record peak plots")
    p.add_argument("--rate", type=float, default=DEFAULT_RATE, help="sampling rate of CSV input")

    p = sub.add_parser("preprocess", parents=[common], help="high-pass and denoise to ECGB")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rate", type=float, default=DEFAULT_RATE)

    p = sub.add_parser("segment", parents=[common], help="labeled child segments and manifest")
    p.add_argument("--data", required=True)
    p.add_argument("--labels")
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=("all", "train", "validation"), default="all")

    p = sub.add_parser("train", parents=[common], help="train and write a checkpoint")
    p.add_argument("--data")
    p.add_argument("--labels")
    p.add_argument("--segments", help="segment store to train on instead of --data")
    p.add_argument("--val-segments", help="segment store for per-epoch validation")
    p.add_argument("--out", required=True)
    p.add_argument("--log")

    p = sub.add_parser("eval", parents=[common], help="record-level report")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--labels")
    p.add_argument("--out", default="report.txt")
    p.add_argument("--figure", help="confusion PNG (default: report path with .png)")
    p.add_argument("--split", choices=("all", "train", "validation"), default="validation")

    p = sub.add_parser("predict", parents=[common], help="label one recording")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out")
    p.add_argument("--rate", type=float, default=DEFAULT_RATE)

    p = sub.add_parser("rerun", parents=[common], help="replay a run manifest")
    p.add_argument("manifest")
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.time()
    try:
        cfg = _config(args)
        output, inputs, outputs = COMMANDS[args.command](args, cfg)
        if output is not None:
            _write_manifest(Path(output), args, cfg, inputs, outputs, started)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"ecglstm: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"ecglstm {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
