"""Reference labeler stand-in, reference-image construction and data splits."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .frames import Frame, Video, read_labels


@dataclass(frozen=True)
class OracleSpec:
    """How reference labels are obtained.

    ``kind="ground-truth-file"`` reads ``label_path``; ``kind="stub-delay"``
    serves the same labels but sleeps ``simulated_latency`` seconds per
    queried frame. ``t_full_nn`` is the per-frame cost charged by the cost
    model and is independent of the actual delay.
    """

    kind: str = "ground-truth-file"
    label_path: Optional[str] = None
    simulated_latency: float = 0.0
    t_full_nn: float = 0.01

    def __post_init__(self):
        if self.kind not in ("ground-truth-file", "stub-delay"):
            raise ValueError(f"unknown oracle kind {self.kind!r}")
        if self.simulated_latency < 0:
            raise ValueError("simulated_latency must be >= 0")
        if not self.t_full_nn > 0:
            raise ValueError("t_full_nn must be > 0")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "label_path": self.label_path,
            "simulated_latency": self.simulated_latency,
            "t_full_nn": self.t_full_nn,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OracleSpec":
        return cls(**d)


class MissingLabelError(LookupError):
    pass


class Oracle:
    """Resolved oracle: answers per-frame queries and counts invocations."""

    def __init__(self, spec: OracleSpec, labels: Optional[np.ndarray] = None):
        self.spec = spec
        if labels is None:
            if spec.label_path is None:
                raise ValueError("oracle needs either in-memory labels or a label_path")
            labels = read_labels(spec.label_path)
        self.labels = np.asarray(labels, dtype=bool)
        self.invocations = 0

    def __call__(self, index: int) -> bool:
        if not 0 <= index < len(self.labels):
            raise MissingLabelError(f"oracle has no label for frame {index} (covers {len(self.labels)} frames)")
        self.invocations += 1
        if self.spec.kind == "stub-delay" and self.spec.simulated_latency > 0:
            time.sleep(self.spec.simulated_latency)
        return bool(self.labels[index])

    def check_covers(self, frame_count: int) -> None:
        if len(self.labels) < frame_count:
            raise MissingLabelError(
                f"label file covers {len(self.labels)} frames; missing index {len(self.labels)}"
            )


def label_video(oracle: Oracle, video: Video, indices: Optional[Sequence[int]] = None):
    """Query the oracle for ``indices`` (default: every frame).

    Returns ``(labels, invocation_count, wall_time)`` where ``labels`` is
    aligned with ``indices``.
    """
    if indices is None:
        indices = range(len(video))
        oracle.check_covers(len(video))
    start_calls = oracle.invocations
    t0 = time.perf_counter()
    out = np.fromiter((oracle(int(i)) for i in indices), dtype=bool)
    return out, oracle.invocations - start_calls, time.perf_counter() - t0


def build_reference_image(frames: np.ndarray, labels: np.ndarray) -> Frame:
    """Per-pixel mean over the frames labelled absent, rounded half up."""
    frames = np.asarray(frames)
    labels = np.asarray(labels, dtype=bool)
    if len(frames) != len(labels):
        raise ValueError(f"{len(frames)} frames but {len(labels)} labels")
    neg = ~labels
    count = int(neg.sum())
    if count == 0:
        raise ValueError("no negative frames to average; use earlier-frame mode instead")
    total = frames[neg].sum(axis=0, dtype=np.int64)
    # exact integer rounding of total/count, halves up
    pixels = (2 * total + count) // (2 * count)
    return Frame(pixels.astype(np.uint8))


@dataclass(frozen=True)
class DataSplit:
    train: range
    crossval: range
    eval: range

    def __post_init__(self):
        parts = (self.train, self.crossval, self.eval)
        if any(len(p) == 0 for p in parts):
            raise ValueError("every split part must be nonempty")
        if not (self.train.stop <= self.crossval.start and self.crossval.stop <= self.eval.start):
            raise ValueError("split parts must be ordered and disjoint")

    @property
    def labeled(self) -> range:
        """Every frame the optimizer needs reference labels for."""
        return range(self.train.start, self.eval.stop)

    def to_dict(self) -> dict:
        return {k: [r.start, r.stop] for k, r in
                (("train", self.train), ("crossval", self.crossval), ("eval", self.eval))}


def split_train_eval(frame_count: int, fractions=(0.5, 0.1, 0.4), seed: int = 0) -> DataSplit:
    """Contiguous split: training prefix, then cross-validation, then evaluation.

    ``seed`` is accepted for interface stability; contiguous splits are
    fully determined by the fractions.
    """
    if len(fractions) != 3:
        raise ValueError("fractions must be (train, crossval, eval)")
    if any(not f > 0 for f in fractions):
        raise ValueError(f"fractions must be positive, got {fractions}")
    if sum(fractions) > 1 + 1e-12:
        raise ValueError(f"fractions sum to {sum(fractions):.6g} > 1")
    a = int(round(frame_count * fractions[0]))
    b = a + int(round(frame_count * fractions[1]))
    c = min(b + int(round(frame_count * fractions[2])), frame_count)
    return DataSplit(range(0, a), range(a, b), range(b, c))
