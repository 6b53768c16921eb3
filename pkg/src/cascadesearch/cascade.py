"""Runtime executor for a chosen cascade."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .diff_detect import Decision, DetectorState, DiffDetectorConfig, dd_step
from .frames import ChannelStats, Preprocessor, Video
from .oracle import Oracle, OracleSpec
from .specialized import SpecializedModel, ThresholdPair, Verdict, classify, forward


@dataclass
class CascadeConfig:
    oracle: OracleSpec = field(default_factory=OracleSpec)
    detector: Optional[DiffDetectorConfig] = None
    model: Optional[SpecializedModel] = None
    thresholds: ThresholdPair = field(default_factory=ThresholdPair)
    stats: Optional[ChannelStats] = None

    def __post_init__(self):
        if self.model is not None and self.stats is None:
            raise ValueError("a specialized model needs channel statistics for preprocessing")

    def preprocessor(self) -> Optional[Preprocessor]:
        if self.model is None:
            return None
        a = self.model.arch
        return Preprocessor(self.stats, a.input_width, a.input_height)

    def without(self, *, detector=False, model=False, skipping=False) -> "CascadeConfig":
        """Copy with stages removed (used by the lesion study)."""
        det = self.detector
        if det is not None and skipping:
            det = DiffDetectorConfig(**{**det.__dict__, "t_skip": 1})
        return CascadeConfig(
            oracle=self.oracle,
            detector=None if detector else det,
            model=None if model else self.model,
            thresholds=ThresholdPair() if model else self.thresholds,
            stats=self.stats,
        )

    def to_dict(self) -> dict:
        return {
            "oracle": self.oracle.to_dict(),
            "detector": None if self.detector is None else self.detector.to_dict(),
            "model": None if self.model is None else self.model.to_dict(),
            "thresholds": {"c_low": self.thresholds.c_low, "c_high": self.thresholds.c_high},
            "preprocessing": None if self.stats is None else {
                "channel_means": list(self.stats.mean),
                "input_width": self.model.arch.input_width if self.model else None,
                "input_height": self.model.arch.input_height if self.model else None,
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CascadeConfig":
        pre = d.get("preprocessing")
        return cls(
            oracle=OracleSpec.from_dict(d.get("oracle") or {}),
            detector=DiffDetectorConfig.from_dict(d["detector"]) if d.get("detector") else None,
            model=SpecializedModel.from_dict(d["model"]) if d.get("model") else None,
            thresholds=ThresholdPair(**d.get("thresholds", {})),
            stats=ChannelStats(tuple(pre["channel_means"])) if pre else None,
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "CascadeConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class RunStats:
    frames_total: int = 0
    frames_skipped: int = 0
    frames_suppressed: int = 0
    frames_model_decided: int = 0
    frames_oracle: int = 0
    frames_checked: int = 0
    frames_scored: int = 0
    frames_fired: int = 0
    frames_model_scored: int = 0
    wall_time: dict = field(default_factory=lambda: {"detector": 0.0, "model": 0.0, "oracle": 0.0, "total": 0.0})

    def check_partition(self) -> None:
        parts = self.frames_skipped + self.frames_suppressed + self.frames_model_decided + self.frames_oracle
        if parts != self.frames_total:
            raise AssertionError(f"disposition counts sum to {parts}, expected {self.frames_total}")

    def counts(self) -> dict:
        d = asdict(self)
        d.pop("wall_time")
        return d

    def to_dict(self) -> dict:
        return asdict(self)


def run_cascade(config: CascadeConfig, video: Video, oracle: Optional[Oracle] = None,
                record_confidences: bool = False):
    """Label every frame of ``video`` in order.

    Returns ``(predicted, stats)``; with ``record_confidences`` a third item
    maps frame index to model confidence for each model-scored frame.
    """
    if oracle is None:
        oracle = Oracle(config.oracle)
    oracle.check_covers(len(video))
    det = config.detector
    state = DetectorState.initial(det) if det is not None else None
    model = config.model
    pre = config.preprocessor()
    thresholds = config.thresholds

    n = len(video)
    predicted = np.zeros(n, dtype=bool)
    stats = RunStats(frames_total=n)
    clock = stats.wall_time
    confidences = {}
    carried = False
    perf = time.perf_counter
    t_start = perf()
    for i in range(n):
        px = video.data[i]
        if det is not None:
            t0 = perf()
            decision = dd_step(det, state, px, i)
            clock["detector"] += perf() - t0
            if decision is Decision.SKIPPED:
                stats.frames_skipped += 1
                predicted[i] = carried
                continue
            stats.frames_checked += 1
            if det.delta_diff is not None:
                stats.frames_scored += 1
            if decision is Decision.SUPPRESSED:
                stats.frames_suppressed += 1
                carried = state.anchor_label
                predicted[i] = carried
                state.record(i, carried)
                continue
        else:
            stats.frames_checked += 1
        stats.frames_fired += 1

        verdict = Verdict.UNCERTAIN
        if model is not None:
            stats.frames_model_scored += 1
            t0 = perf()
            c = forward(model, pre(px))
            verdict = classify(c, thresholds)
            clock["model"] += perf() - t0
            if record_confidences:
                confidences[i] = c
        if verdict is Verdict.UNCERTAIN:
            t0 = perf()
            label = oracle(i)
            clock["oracle"] += perf() - t0
            stats.frames_oracle += 1
        else:
            label = verdict is Verdict.POSITIVE
            stats.frames_model_decided += 1
        carried = label
        predicted[i] = label
        if state is not None:
            state.record(i, label)
    clock["total"] = perf() - t_start
    stats.check_partition()
    if record_confidences:
        return predicted, stats, confidences
    return predicted, stats


def extract_intervals(predicted, fps: float) -> list[tuple[float, float]]:
    """Maximal runs of present frames as ``(start_s, end_s)``; end is exclusive."""
    x = np.asarray(predicted, dtype=np.int8)
    if x.size == 0:
        return []
    edges = np.diff(np.concatenate(([0], x, [0])))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return [(s / fps, e / fps) for s, e in zip(starts.tolist(), ends.tolist())]
