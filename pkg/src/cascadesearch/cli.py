"""Command-line entry point: synth, label, search, run, eval, report.

Exit codes: 0 success, 2 usage/validation error, 3 infeasible search,
4 runtime/data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cascade import CascadeConfig, extract_intervals, run_cascade
from .cbo import (RANKING_COLUMNS, AccuracyTarget, SearchGrid, TimingProfile, ranking_rows,
                  search)
from .evalkit import EvalConfig, factor_analysis, fp_fn_rates, lesion_study, windowed_accuracy
from .frames import (SynthSpec, VideoFormatError, generate_synthetic, read_labels, read_video,
                     write_labels, write_video)
from .oracle import MissingLabelError, Oracle, OracleSpec, label_video, split_train_eval
from .specialized import TrainHyper, arch_grid

log = logging.getLogger("cascadesearch")

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_DATA = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _load_json(path, what):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"{what} not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{what} {path} is not valid JSON: {exc}") from None


def _need(args, *names):
    for n in names:
        if getattr(args, n, None) is None:
            raise UsageError(f"--{n.replace('_', '-')} is required (flag or manifest)")


def _existing(path, what):
    if not Path(path).exists():
        raise UsageError(f"{what} not found: {path}")
    return path


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _timing(args, default_t_full):
    if args.timing is None:
        return None
    d = args.timing if isinstance(args.timing, dict) else _load_json(args.timing, "timing profile")
    d = dict(d)
    d.setdefault("t_full", default_t_full)
    return TimingProfile.from_dict(d)


def _oracle_spec(args, labels_path=None) -> OracleSpec:
    if getattr(args, "oracle", None) is not None:
        d = args.oracle if isinstance(args.oracle, dict) else _load_json(args.oracle, "oracle spec")
        spec = OracleSpec.from_dict(d)
    else:
        spec = OracleSpec()
    if labels_path is not None and spec.label_path is None:
        spec = OracleSpec(spec.kind, str(labels_path), spec.simulated_latency, spec.t_full_nn)
    if getattr(args, "latency", None) is not None:
        spec = OracleSpec("stub-delay", spec.label_path, args.latency, spec.t_full_nn)
    return spec


# -- commands --------------------------------------------------------------------

def cmd_synth(args) -> int:
    _need(args, "spec", "out", "labels")
    d = args.spec if isinstance(args.spec, dict) else _load_json(args.spec, "spec file")
    if args.seed is not None:
        d = {**d, "seed": args.seed}
    try:
        spec = SynthSpec.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid synth spec: {exc}") from None
    try:
        video, labels = generate_synthetic(spec)
    except ValueError as exc:
        raise UsageError(f"invalid synth spec: {exc}") from None
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.labels).parent.mkdir(parents=True, exist_ok=True)
    write_video(video, args.out)
    write_labels(labels, args.labels)
    print(f"wrote {len(video)} frames to {args.out}; prevalence {labels.mean():.4f} "
          f"({int(labels.sum())} positive frames) -> {args.labels}")
    return EXIT_OK


def cmd_label(args) -> int:
    _need(args, "video")
    video = read_video(_existing(args.video, "video"))
    spec = _oracle_spec(args, args.labels)
    if spec.label_path is None:
        raise UsageError("label needs --labels (reference label source) or --oracle with a label_path")
    oracle = Oracle(spec)
    labels, calls, wall = label_video(oracle, video)
    out = _out_dir(args)
    write_labels(labels, out / "labels.csv")
    _write_json(out / "label_run.json", {"invocations": calls, "wall_time": wall, "frames": len(video)})
    print(f"labelled {len(video)} frames with {calls} oracle calls in {wall:.3f}s -> {out / 'labels.csv'}")
    return EXIT_OK


def _grid(args) -> SearchGrid:
    """Search grid from JSON: SearchGrid fields plus ``input_dims``, ``channels``,
    ``archs`` (arch_grid keyword lists) and ``hyper`` (TrainHyper fields)."""
    g = args.grid if isinstance(args.grid, dict) else (_load_json(args.grid, "grid") if args.grid else {})
    g = dict(g)
    width, height = g.pop("input_dims", (16, 16))
    channels = g.pop("channels", 1)
    arch_kw = {k: tuple(v) if isinstance(v, list) else v for k, v in g.pop("archs", {}).items()}
    hyper = TrainHyper(**g.pop("hyper", {}))
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in g.items()}
    try:
        return SearchGrid(archs=arch_grid(width, height, channels, **arch_kw), hyper=hyper, **kwargs)
    except TypeError as exc:
        raise UsageError(f"invalid grid: {exc}") from None


def cmd_search(args) -> int:
    _need(args, "video", "labels")
    video = read_video(_existing(args.video, "video"))
    spec = _oracle_spec(args, args.labels)
    oracle = Oracle(spec)
    fractions = tuple(args.split) if args.split else (0.5, 0.1, 0.4)
    split = split_train_eval(len(video), fractions, args.seed or 0)
    # reference labels for the frames the optimizer trains and evaluates on
    lab, calls, wall = label_video(oracle, video, split.labeled)
    labels = np.zeros(len(video), dtype=bool)
    labels[split.labeled.start:split.labeled.stop] = lab
    log.info("oracle labelled %d frames in %.2fs", calls, wall)

    targets = AccuracyTarget(args.fp_star if args.fp_star is not None else 0.01,
                             args.fn_star if args.fn_star is not None else 0.01)
    grid = _grid(args)
    result = search(video, labels, split, targets, _timing(args, spec.t_full_nn), grid,
                    oracle_spec=spec, seed=args.seed or 0, workers=args.workers or os.cpu_count() or 1)

    out = _out_dir(args)
    result.config.save(out / "cascade.json")
    with open(out / "ranking.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(RANKING_COLUMNS)
        wr.writerows(ranking_rows(result))
    summary = {**result.summary(), "split": split.to_dict(), "oracle_calls": calls,
               "timing": result.timing.to_dict(), "n_d": grid.n_d, "n_c": grid.n_c,
               "ranking_rows": len(result.ranking)}
    _write_json(out / "search.json", summary)
    s = result.summary()
    print(f"{'feasible' if result.feasible else 'INFEASIBLE'}: detector={s['detector']} arch={s['arch']} "
          f"delta_diff={s['delta_diff']} c_low={s['c_low']:.6g} c_high={s['c_high']:.6g}")
    print(f"expected cost {result.expected_cost:.6g} s/frame; predicted fp {result.predicted_fp_rate:.4%} "
          f"fn {result.predicted_fn_rate:.4%} on {result.n_frames} evaluation frames")
    return EXIT_OK if result.feasible else EXIT_INFEASIBLE


def cmd_run(args) -> int:
    _need(args, "video", "config")
    video = read_video(_existing(args.video, "video"))
    config = CascadeConfig.load(_existing(args.config, "cascade config"))
    spec = config.oracle
    if args.labels is not None:
        spec = OracleSpec(spec.kind, str(args.labels), spec.simulated_latency, spec.t_full_nn)
    if args.latency is not None:
        spec = OracleSpec("stub-delay", spec.label_path, args.latency, spec.t_full_nn)
    if spec.label_path is None:
        raise UsageError("the oracle has no label source; pass --labels")
    config.oracle = spec
    pred, stats = run_cascade(config, video, Oracle(spec))
    out = _out_dir(args)
    write_labels(pred, out / "predicted.csv")
    _write_json(out / "stats.json", stats.to_dict())
    intervals = extract_intervals(pred, video.meta.fps)
    _write_json(out / "intervals.json", [{"start_s": a, "end_s": b} for a, b in intervals])
    with open(out / "intervals.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["start_s", "end_s"])
        wr.writerows(intervals)
    print(f"{stats.frames_total} frames: skipped {stats.frames_skipped}, suppressed {stats.frames_suppressed}, "
          f"model {stats.frames_model_decided}, oracle {stats.frames_oracle}; {len(intervals)} intervals")
    return EXIT_OK


def cmd_eval(args) -> int:
    _need(args, "pred", "ref")
    pred = read_labels(_existing(args.pred, "predicted labels"))
    ref = read_labels(_existing(args.ref, "reference labels"))
    cfg = EvalConfig(args.window or 30, args.agree_min or 28)
    acc = windowed_accuracy(pred, ref, cfg)
    fp, fn, counts = fp_fn_rates(pred, ref)
    res = {"windowed_accuracy": acc, "fp_rate": fp, "fn_rate": fn, "tp": counts.tp, "tn": counts.tn,
           "fp": counts.fp, "fn": counts.fn, "window": cfg.window, "agree_min": cfg.agree_min}
    out = _out_dir(args)
    _write_json(out / "eval.json", res)
    print(f"windowed accuracy {acc:.4f}  fp {fp:.4%}  fn {fn:.4%}")
    return EXIT_OK


def cmd_report(args) -> int:
    from .plotting import stage_figure

    _need(args, "video", "labels", "config")
    video = read_video(_existing(args.video, "video"))
    labels = read_labels(_existing(args.labels, "reference labels"))
    config = CascadeConfig.load(_existing(args.config, "cascade config"))
    timing = _timing(args, config.oracle.t_full_nn)
    if timing is None:
        raise UsageError("report needs --timing so modeled speedups are reproducible")
    if len(labels) < len(video):
        raise MissingLabelError(f"labels cover {len(labels)} frames; missing index {len(labels)}")
    out = _out_dir(args)
    reports = [factor_analysis(video, labels, config, timing, t_skip=args.t_skip),
               lesion_study(video, labels, config, timing)]
    for rep, stem in zip(reports, ("factor", "lesion")):
        (out / f"{stem}.txt").write_text(rep.to_text())
        (out / f"{stem}.csv").write_text(rep.to_csv())
        _write_json(out / f"{stem}.json", rep.to_dict())
        stage_figure(rep, out / f"{stem}.png")
        print(rep.to_text())
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "label": cmd_label, "search": cmd_search, "run": cmd_run,
            "eval": cmd_eval, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--manifest", help="JSON file supplying defaults for any flag")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--out", help="output directory (synth: video path)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="cascadesearch", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic clip and its labels")
    s.add_argument("--spec")
    s.add_argument("--labels")

    s = sub.add_parser("label", parents=[common], help="label every frame with the oracle")
    s.add_argument("--video")
    s.add_argument("--labels", help="reference label CSV backing the oracle")
    s.add_argument("--oracle", help="oracle spec JSON")
    s.add_argument("--latency", type=float, help="simulated per-call oracle latency (s)")

    s = sub.add_parser("search", parents=[common], help="find the cheapest cascade meeting the targets")
    s.add_argument("--video")
    s.add_argument("--labels")
    s.add_argument("--oracle")
    s.add_argument("--latency", type=float)
    s.add_argument("--fp-star", type=float)
    s.add_argument("--fn-star", type=float)
    s.add_argument("--timing")
    s.add_argument("--grid", help="search grid JSON")
    s.add_argument("--split", type=float, nargs=3, metavar=("TRAIN", "CROSSVAL", "EVAL"))

    s = sub.add_parser("run", parents=[common], help="apply a cascade config to a video")
    s.add_argument("--video")
    s.add_argument("--config")
    s.add_argument("--labels")
    s.add_argument("--latency", type=float)

    s = sub.add_parser("eval", parents=[common], help="compare predicted and reference labels")
    s.add_argument("--pred")
    s.add_argument("--ref")
    s.add_argument("--window", type=int)
    s.add_argument("--agree-min", type=int)

    s = sub.add_parser("report", parents=[common], help="factor analysis and lesion study")
    s.add_argument("--video")
    s.add_argument("--labels")
    s.add_argument("--config")
    s.add_argument("--timing")
    s.add_argument("--t-skip", type=int)
    return p


def _apply_manifest(args) -> None:
    if not args.manifest:
        return
    manifest = _load_json(args.manifest, "manifest")
    base = Path(args.manifest).parent
    for key, value in manifest.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest) or getattr(args, dest) is not None:
            continue  # flags win
        if isinstance(value, str) and dest in _PATH_KEYS and not os.path.isabs(value):
            value = str(base / value)
        setattr(args, dest, value)


_PATH_KEYS = {"video", "labels", "config", "timing", "spec", "out", "pred", "ref", "oracle", "grid"}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _apply_manifest(args)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (VideoFormatError, MissingLabelError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
