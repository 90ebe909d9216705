"""Batch command-line interface.

Data goes to files or standard output, logs to standard error. Any failure
exits nonzero with a single ``error:`` line.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .config import ConfigError, RunConfig, describe_defaults, load_config
from .dataio.motfiles import (
    MOTFormatError,
    attach_to_tracks,
    load_sequence,
    read_embeddings,
    read_gt,
    read_seqinfo,
    read_tracks,
    save_sequence,
    write_tracks,
)
from .dataio.synth import generate
from .metrics import EvalReport, evaluate
from .mpnn import ModelParams
from .pipeline import PipelineError, associate, check_bundle, run_pipeline, track_bundle, train_model

log = logging.getLogger("trackmerge")

EXIT_FAILURE = 1


class CliError(Exception):
    pass


def _config(args) -> RunConfig:
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    return load_config(args.config, overrides)


def _emit_report(report: EvalReport, args) -> None:
    if args.report:
        Path(args.report).write_text(report.to_json() + "\n", encoding="utf-8")
    sys.stdout.write((report.to_json() if args.format == "json" else report.to_table()) + "\n")


def cmd_synth(args, cfg: RunConfig) -> None:
    out = Path(args.out)
    for k in range(args.count):
        synth = replace(cfg.synth, seed=cfg.synth.seed + k, name="")
        bundle = generate(synth)
        path = save_sequence(bundle, out / bundle.name)
        log.info("wrote %s", path)
        print(path)


def cmd_track(args, cfg: RunConfig) -> None:
    bundle = load_sequence(args.sequence, args.det, args.emb, args.gt)
    check_bundle(bundle)
    tracklets = track_bundle(bundle, cfg)
    write_tracks(args.out, tracklets)
    log.info("%s: %d tracklets at th_c=%g", bundle.name, len(tracklets), cfg.stage1.th_c)
    if bundle.ground_truth:
        _emit_report(evaluate(bundle.ground_truth, tracklets), args)


def cmd_train(args, cfg: RunConfig) -> None:
    bundles = [load_sequence(s) for s in args.sequences]
    result = train_model(bundles, cfg, args.jobs)
    result.params.save(args.out, {"config": cfg.to_dict(), "epochs_run": result.epochs_run})
    loss_log = args.loss_log or f"{args.out}.loss.csv"
    with open(loss_log, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "loss"])
        for epoch, loss in enumerate(result.history, start=1):
            writer.writerow([epoch, repr(loss)])
    log.info("trained %d epochs, final loss %.6f", result.epochs_run, result.history[-1])


def _load_params(path) -> ModelParams:
    try:
        return ModelParams.load(path)
    except FileNotFoundError as exc:
        raise CliError(str(exc)) from exc


def cmd_associate(args, cfg: RunConfig) -> None:
    root = Path(args.sequence)
    info = read_seqinfo(root / "seqinfo.ini")
    emb_path = Path(args.emb) if args.emb else root / "emb" / "emb.csv"
    if not emb_path.exists():
        raise CliError(f"embeddings file {emb_path} not found")
    _, table = read_embeddings(emb_path)
    tracks = attach_to_tracks(read_tracks(args.tracks), table)
    params = _load_params(args.checkpoint)
    trajectories = associate(tracks, params, cfg, info["fps"])
    write_tracks(args.out, trajectories)
    log.info("%d tracklets -> %d trajectories", len(tracks), len(trajectories))


def cmd_eval(args, cfg: RunConfig) -> None:
    gt = read_gt(args.gt)
    result = read_tracks(args.result)
    _emit_report(evaluate(gt, result), args)


def cmd_pipeline(args, cfg: RunConfig) -> None:
    bundle = load_sequence(args.sequence, args.det, args.emb, args.gt)
    params = _load_params(args.checkpoint)
    result = run_pipeline(bundle, params, cfg)
    write_tracks(args.out, result.trajectories)
    if args.tracklets:
        write_tracks(args.tracklets, result.tracklets)
    log.info("%s: %d tracklets -> %d trajectories", bundle.name, len(result.tracklets),
             len(result.trajectories))
    if result.report is not None:
        _emit_report(result.report, args)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override one config key; VALUE is parsed as JSON when possible")
    common.add_argument("--seed", type=int, help="shorthand for --set seed=N")
    common.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    report = argparse.ArgumentParser(add_help=False)
    report.add_argument("--report", help="also write the EvalReport JSON here")
    report.add_argument("--format", choices=("table", "json"), default="table",
                        help="stdout report format (default table)")

    seq = argparse.ArgumentParser(add_help=False)
    seq.add_argument("sequence", help="sequence directory with seqinfo.ini")
    seq.add_argument("--det", help="detections file (default <sequence>/det/det.txt)")
    seq.add_argument("--emb", help="embedding CSV (default <sequence>/emb/emb.csv)")
    seq.add_argument("--gt", help="ground truth (default <sequence>/gt/gt.txt when present)")

    parser = argparse.ArgumentParser(
        prog="trackmerge",
        description="Two-stage multi-object tracking: thresholded assignment, then GNN tracklet merging.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="configuration keys and defaults:\n" + describe_defaults(),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write synthetic sequences")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, default=1, help="sequences, seeds synth.seed + k")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("track", parents=[common, seq, report], help="stage-1 tracklets")
    p.add_argument("--out", required=True, help="tracklets file (MOT format)")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("train", parents=[common], help="train the edge classifier")
    p.add_argument("sequences", nargs="+", help="sequence directories with ground truth")
    p.add_argument("--out", required=True, help="checkpoint path (manifest at <out>.json)")
    p.add_argument("--loss-log", help="per-epoch loss CSV (default <out>.loss.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("associate", parents=[common], help="merge tracklets into trajectories")
    p.add_argument("sequence", help="sequence directory (seqinfo.ini, embeddings)")
    p.add_argument("--tracks", required=True, help="stage-1 tracklets file")
    p.add_argument("--emb", help="embedding CSV (default <sequence>/emb/emb.csv)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="trajectories file")
    p.set_defaults(func=cmd_associate)

    p = sub.add_parser("eval", parents=[common, report], help="score a result file")
    p.add_argument("--gt", required=True)
    p.add_argument("--result", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", parents=[common, seq, report], help="track, associate, evaluate")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="trajectories file")
    p.add_argument("--tracklets", help="also write the stage-1 tracklets here")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        if args.jobs < 1:
            raise CliError("--jobs must be >= 1")
        cfg = _config(args)
        args.func(args, cfg)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}" if exc.filename else f"error: {exc}",
              file=sys.stderr)
        return EXIT_FAILURE
    except (ConfigError, CliError, MOTFormatError, PipelineError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except OSError as exc:
        print(f"error: {exc.strerror or exc}: {exc.filename}", file=sys.stderr)
        return EXIT_FAILURE
    return 0


if __name__ == "__main__":
    sys.exit(main())
