"""Accuracy metrics, speedup accounting, and stage factor/lesion reports."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cascade import CascadeConfig, RunStats, run_cascade
from .cbo import StageCosts, TimingProfile
from .diff_detect import DiffDetectorConfig
from .frames import Video
from .oracle import Oracle


@dataclass(frozen=True)
class EvalConfig:
    window: int = 30
    agree_min: int = 28

    def __post_init__(self):
        if not 1 <= self.agree_min <= self.window:
            raise ValueError("need 1 <= agree_min <= window")


def _pair(pred, ref):
    pred = np.asarray(pred, dtype=bool)
    ref = np.asarray(ref, dtype=bool)
    if pred.shape != ref.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {ref.shape}")
    return pred, ref


def windowed_accuracy(pred, ref, cfg: EvalConfig = EvalConfig()) -> float:
    """Fraction of aligned, non-overlapping windows with at least ``agree_min`` agreements.

    A trailing partial window is ignored.
    """
    pred, ref = _pair(pred, ref)
    n_win = len(pred) // cfg.window
    if n_win == 0:
        raise ValueError(f"need at least {cfg.window} frames, got {len(pred)}")
    agree = (pred == ref)[: n_win * cfg.window].reshape(n_win, cfg.window).sum(axis=1)
    return float(np.mean(agree >= cfg.agree_min))


@dataclass(frozen=True)
class ErrorCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def fp_fn_rates(pred, ref) -> tuple[float, float, ErrorCounts]:
    pred, ref = _pair(pred, ref)
    counts = ErrorCounts(
        tp=int(np.sum(pred & ref)),
        tn=int(np.sum(~pred & ~ref)),
        fp=int(np.sum(pred & ~ref)),
        fn=int(np.sum(~pred & ref)),
    )
    n = max(len(pred), 1)
    return counts.fp / n, counts.fn / n, counts


def modeled_time(stats: RunStats, costs: StageCosts) -> float:
    """Seconds charged for a run: per content check, per model call, per oracle call."""
    return (stats.frames_scored * costs.t_check + stats.frames_model_scored * costs.t_model
            + stats.frames_oracle * costs.t_full)


@dataclass
class Speedup:
    modeled: float
    measured: Optional[float] = None


def speedup(stats: RunStats, costs: StageCosts) -> Speedup:
    """Speedup over sending every frame to the reference labeler.

    The measured figure uses the observed per-call oracle time as the
    baseline and is only available when the oracle actually took time.
    """
    denom = modeled_time(stats, costs)
    if denom <= 0:
        raise ValueError("modeled cascade time is zero; speedup undefined")
    if costs.t_full <= 0 or stats.frames_total == 0:
        raise ValueError("baseline time is zero; speedup undefined")
    modeled = stats.frames_total * costs.t_full / denom
    measured = None
    wall = stats.wall_time
    if stats.frames_oracle and wall.get("oracle", 0) > 0 and wall.get("total", 0) > 0:
        per_call = wall["oracle"] / stats.frames_oracle
        measured = stats.frames_total * per_call / wall["total"]
    return Speedup(modeled, measured)


def stage_costs_for(config: CascadeConfig, timing: TimingProfile) -> StageCosts:
    det = config.detector
    metric = det.metric if det is not None and det.delta_diff is not None else None
    arch = config.model.arch.key if config.model is not None else None
    return timing.stage_costs(metric, arch)


# -- factor analysis / lesion study ---------------------------------------------------

REPORT_COLUMNS = ("stage", "accuracy", "fp_rate", "fn_rate", "checks", "fired", "oracle_calls",
                  "modeled_speedup")


@dataclass
class StageReport:
    title: str
    rows: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"title": self.title, "rows": self.rows}

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(REPORT_COLUMNS)
        for r in self.rows:
            wr.writerow([_fmt(r[c]) for c in REPORT_COLUMNS])
        return buf.getvalue()

    def to_text(self) -> str:
        cells = [list(REPORT_COLUMNS)] + [[_fmt(r[c]) for c in REPORT_COLUMNS] for r in self.rows]
        widths = [max(len(row[k]) for row in cells) for k in range(len(REPORT_COLUMNS))]
        lines = [self.title]
        for n, row in enumerate(cells):
            lines.append("  ".join(v.ljust(w) if k == 0 else v.rjust(w)
                                   for k, (v, w) in enumerate(zip(row, widths))).rstrip())
            if n == 0:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _evaluate(name: str, config: CascadeConfig, video: Video, labels, timing: TimingProfile,
              cfg: EvalConfig) -> dict:
    oracle = Oracle(config.oracle, labels)
    pred, stats = run_cascade(config, video, oracle)
    fp, fn, _ = fp_fn_rates(pred, labels)
    return {
        "stage": name,
        "accuracy": windowed_accuracy(pred, labels, cfg),
        "fp_rate": fp,
        "fn_rate": fn,
        "checks": stats.frames_checked,
        "fired": stats.frames_fired,
        "oracle_calls": stats.frames_oracle,
        "modeled_speedup": speedup(stats, stage_costs_for(config, timing)).modeled,
        "stats": stats.counts(),
    }


def _with_skip(det: DiffDetectorConfig, t_skip: Optional[int]) -> DiffDetectorConfig:
    if t_skip is None:
        return det
    return DiffDetectorConfig(**{**det.__dict__, "t_skip": t_skip})


def factor_analysis(video: Video, labels, config: CascadeConfig, timing: TimingProfile,
                    t_skip: Optional[int] = None, cfg: EvalConfig = EvalConfig()) -> StageReport:
    """Add stages one at a time: oracle only, +skipping, +difference detection, +model."""
    det = config.detector
    skip = t_skip if t_skip is not None else (det.t_skip if det is not None else 1)
    base = CascadeConfig(oracle=config.oracle, stats=config.stats)
    skip_only = DiffDetectorConfig(mode="earlier-frame", delta_diff=None, t_skip=skip)
    full_det = _with_skip(det, skip) if det is not None else skip_only
    stages = [
        ("oracle only", base),
        ("+skipping", CascadeConfig(oracle=config.oracle, detector=skip_only, stats=config.stats)),
        ("+difference detection", CascadeConfig(oracle=config.oracle, detector=full_det, stats=config.stats)),
        ("+specialized model", CascadeConfig(oracle=config.oracle, detector=full_det, model=config.model,
                                             thresholds=config.thresholds, stats=config.stats)),
    ]
    report = StageReport("factor analysis")
    for name, c in stages:
        report.rows.append(_evaluate(name, c, video, labels, timing, cfg))
    return report


def lesion_study(video: Video, labels, config: CascadeConfig, timing: TimingProfile,
                 cfg: EvalConfig = EvalConfig()) -> StageReport:
    """Remove one stage at a time from the full cascade."""
    stages = [("full cascade", config)]
    if config.detector is not None:
        stages.append(("-skipping", config.without(skipping=True)))
        stages.append(("-difference detection", config.without(detector=True)))
    if config.model is not None:
        stages.append(("-specialized model", config.without(model=True)))
    report = StageReport("lesion study")
    for name, c in stages:
        report.rows.append(_evaluate(name, c, video, labels, timing, cfg))
    return report
