"""Difference detectors: global and blocked MSE, learned block weights, skipping.

Scores are computed on raw 8-bit intensities. A checked frame *fires* when
its score is strictly above ``delta_diff``; otherwise it is *suppressed* and
inherits the anchor's label. Frames between checks are *skipped* and carry
the most recently emitted label.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class Decision(str, enum.Enum):
    SKIPPED = "skipped"
    SUPPRESSED = "suppressed"
    FIRED = "fired"


MODES = ("reference-image", "earlier-frame")
METRICS = ("global-mse", "blocked-mse")


def _as_pixels(x) -> np.ndarray:
    return getattr(x, "pixels", x)


def mse(a, b) -> float:
    a, b = _as_pixels(a), _as_pixels(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    d = a.astype(np.float64) - b.astype(np.float64)
    return float(np.mean(d * d))


def block_edges(size: int, grid: int) -> np.ndarray:
    """Start offsets of ``grid`` blocks along an axis; the last block absorbs the remainder."""
    if grid < 1:
        raise ValueError("grid must be >= 1")
    step = size // grid
    if step < 1:
        raise ValueError(f"grid {grid} too fine for axis of {size} pixels")
    return np.arange(grid) * step


def _block_sizes(size: int, grid: int) -> np.ndarray:
    edges = np.append(block_edges(size, grid), size)
    return np.diff(edges)


def blocked_mse_batch(frames: np.ndarray, anchors: np.ndarray, grid: int) -> np.ndarray:
    """Block MSEs for a batch: (n, h, w, c) against (n|1, h, w, c) -> (n, grid*grid)."""
    frames = np.asarray(frames)
    anchors = np.asarray(anchors)
    if frames.shape[1:] != anchors.shape[1:]:
        raise ValueError(f"dimension mismatch: {frames.shape[1:]} vs {anchors.shape[1:]}")
    n, h, w, c = frames.shape
    d = frames.astype(np.float64) - anchors.astype(np.float64)
    sq = (d * d).sum(axis=3)
    rows = np.add.reduceat(sq, block_edges(h, grid), axis=1)
    sums = np.add.reduceat(rows, block_edges(w, grid), axis=2)
    counts = np.outer(_block_sizes(h, grid), _block_sizes(w, grid)) * c
    return (sums / counts).reshape(n, grid * grid)


def blocked_mse(a, b, grid: int) -> np.ndarray:
    a, b = _as_pixels(a), _as_pixels(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return blocked_mse_batch(a[None], b[None], grid)[0]


def mse_batch(frames: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    frames = np.asarray(frames)
    anchors = np.asarray(anchors)
    if frames.shape[1:] != anchors.shape[1:]:
        raise ValueError(f"dimension mismatch: {frames.shape[1:]} vs {anchors.shape[1:]}")
    d = frames.astype(np.float64) - anchors.astype(np.float64)
    return (d * d).reshape(len(frames), -1).mean(axis=1)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


def train_block_weights(features, targets, *, learning_rate: float = 0.5, iterations: int = 3000,
                        l2: float = 1e-4) -> tuple[np.ndarray, float]:
    """Fit a logistic scorer over block-MSE features by full-batch gradient descent.

    Features are standardized during fitting and the scaling is folded back
    into the returned weights, so ``sigmoid(features @ w + b)`` applies to raw
    block MSEs.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if x.ndim != 2 or len(x) != len(y):
        raise ValueError("features must be (n, k) with one target per row")
    if len(y) < 2:
        raise ValueError("need at least 2 examples to fit block weights")
    if y.min() == y.max():
        raise ValueError("targets contain a single class; use the global-mse metric instead")

    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd[sd == 0] = 1.0
    z = (x - mu) / sd
    n, k = z.shape
    w = np.zeros(k)
    b = 0.0
    for _ in range(iterations):
        p = _sigmoid(z @ w + b)
        g = p - y
        w -= learning_rate * (z.T @ g / n + l2 * w)
        b -= learning_rate * g.mean()
    weights = w / sd
    return weights, float(b - weights @ mu)


@dataclass
class DiffDetectorConfig:
    """Detector parameters.

    ``delta_diff=None`` disables the content check: every checked frame fires
    and only frame skipping remains.
    """

    mode: str = "reference-image"
    metric: str = "global-mse"
    grid: int = 1
    weights: Optional[np.ndarray] = None
    bias: float = 0.0
    delta_diff: Optional[float] = 0.0
    t_diff: int = 1
    t_skip: int = 1
    reference: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.grid < 1:
            raise ValueError("grid must be >= 1")
        if self.t_diff < 1 or self.t_skip < 1:
            raise ValueError("t_diff and t_skip must be >= 1")
        if self.delta_diff is not None and not self.delta_diff >= 0:
            raise ValueError("delta_diff must be >= 0")
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=np.float64)
            if self.metric == "blocked-mse" and self.weights.shape != (self.grid * self.grid,):
                raise ValueError(f"blocked metric needs {self.grid ** 2} weights, got {self.weights.shape}")

    @property
    def name(self) -> str:
        parts = [self.mode, self.metric]
        if self.metric == "blocked-mse":
            parts.append(f"g{self.grid}")
        if self.mode == "earlier-frame":
            parts.append(f"tdiff{self.t_diff}")
        parts.append(f"tskip{self.t_skip}")
        return "/".join(parts)

    def score_batch(self, frames: np.ndarray, anchors: np.ndarray) -> np.ndarray:
        if self.metric == "global-mse":
            return mse_batch(frames, anchors)
        if self.weights is None:
            raise ValueError("blocked metric requires trained block weights")
        feats = blocked_mse_batch(frames, anchors, self.grid)
        return _sigmoid(feats @ self.weights + self.bias)

    def to_dict(self) -> dict:
        d = {
            "mode": self.mode,
            "metric": self.metric,
            "grid": self.grid,
            "weights": None if self.weights is None else [float(v) for v in self.weights],
            "bias": float(self.bias),
            "delta_diff": None if self.delta_diff is None else _json_float(self.delta_diff),
            "t_diff_frames": self.t_diff,
            "t_skip_frames": self.t_skip,
        }
        if self.reference is not None:
            h, w, c = self.reference.shape
            d["reference_image"] = {"width": w, "height": h, "channels": c,
                                    "pixels": self.reference.reshape(-1).tolist()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DiffDetectorConfig":
        ref = None
        if d.get("reference_image"):
            r = d["reference_image"]
            ref = np.asarray(r["pixels"], dtype=np.uint8).reshape(r["height"], r["width"], r["channels"])
        delta = d.get("delta_diff", 0.0)
        return cls(
            mode=d["mode"], metric=d["metric"], grid=d.get("grid", 1),
            weights=d.get("weights"), bias=d.get("bias", 0.0),
            delta_diff=None if delta is None else float(delta),
            t_diff=d.get("t_diff_frames", 1), t_skip=d.get("t_skip_frames", 1),
            reference=ref,
        )


def _json_float(v: float):
    return "inf" if math.isinf(v) else float(v)


@dataclass
class _Check:
    index: int
    pixels: np.ndarray
    label: Optional[bool] = None


@dataclass
class DetectorState:
    anchor_frame: Optional[np.ndarray] = None
    anchor_label: bool = False
    last_check_index: Optional[int] = None
    last_index: Optional[int] = None
    last_score: Optional[float] = None
    history: deque = field(default_factory=deque)

    @classmethod
    def initial(cls, config: DiffDetectorConfig) -> "DetectorState":
        st = cls()
        if config.mode == "reference-image" and config.delta_diff is not None:
            if config.reference is None:
                raise ValueError("reference-image mode requires a reference image")
            st.anchor_frame = config.reference
        return st

    def record(self, index: int, label: bool) -> None:
        """Register the label emitted for a checked frame."""
        # only earlier-frame mode keeps a history; other modes ignore this
        if self.history and self.history[-1].index == index:
            self.history[-1].label = label


def anchor_position(index: int, t_skip: int, t_diff: int) -> Optional[int]:
    """Frame used as earlier-frame anchor for a check at ``index``.

    Checks happen at multiples of ``t_skip``. The anchor is the latest check
    at least ``t_diff`` frames back, else the first check; index 0 has none.
    """
    if index == 0:
        return None
    if index < t_diff:
        return 0
    return ((index - t_diff) // t_skip) * t_skip


def dd_score(config: DiffDetectorConfig, state: DetectorState, frame) -> float:
    if state.anchor_frame is None:
        raise ValueError("detector state has no anchor frame")
    px = _as_pixels(frame)
    return float(config.score_batch(px[None], state.anchor_frame[None])[0])


def dd_step(config: DiffDetectorConfig, state: DetectorState, frame, index: int) -> Decision:
    if state.last_index is not None and index <= state.last_index:
        raise ValueError(f"frame {index} presented out of order (after {state.last_index})")
    state.last_index = index
    state.last_score = None
    if state.last_check_index is not None and index - state.last_check_index < config.t_skip:
        return Decision.SKIPPED
    state.last_check_index = index
    px = _as_pixels(frame)
    if config.mode == "earlier-frame":
        hist = state.history
        while len(hist) >= 2 and hist[1].index <= index - config.t_diff:
            hist.popleft()
        hist.append(_Check(index, px))
        if len(hist) == 1:
            state.anchor_frame = None
            return Decision.FIRED
        state.anchor_frame = hist[0].pixels
        state.anchor_label = bool(hist[0].label)
    else:
        state.anchor_label = False
    if config.delta_diff is None:
        return Decision.FIRED
    score = dd_score(config, state, px)
    state.last_score = score
    return Decision.FIRED if score > config.delta_diff else Decision.SUPPRESSED
