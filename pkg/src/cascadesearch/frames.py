"""Frames, videos, synthetic scene generation, container I/O and preprocessing.

A :class:`Video` keeps all pixels in one ``(frame_count, height, width, channels)``
uint8 array; a :class:`Frame` is a lightweight view of one of its rows.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MAGIC = b"NSCV"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4s6I")


class VideoFormatError(ValueError):
    """Base class for container parse errors."""


class BadMagicError(VideoFormatError):
    pass


class TruncatedVideoError(VideoFormatError):
    pass


class DimensionMismatchError(VideoFormatError):
    pass


@dataclass(frozen=True)
class VideoMeta:
    width: int
    height: int
    channels: int = 1
    fps: int = 30
    frame_count: int = 0

    def __post_init__(self):
        if self.width < 1:
            raise ValueError(f"width must be >= 1, got {self.width}")
        if self.height < 1:
            raise ValueError(f"height must be >= 1, got {self.height}")
        if self.channels not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {self.channels}")
        if self.fps < 1:
            raise ValueError(f"fps must be >= 1, got {self.fps}")
        if self.frame_count < 0:
            raise ValueError(f"frame_count must be >= 0, got {self.frame_count}")

    @property
    def frame_shape(self) -> tuple[int, int, int]:
        return (self.height, self.width, self.channels)

    @property
    def frame_size(self) -> int:
        return self.width * self.height * self.channels


@dataclass(frozen=True)
class Frame:
    """One frame: ``pixels`` has shape (height, width, channels), dtype uint8."""

    pixels: np.ndarray
    index: int = 0

    def __post_init__(self):
        if self.pixels.dtype != np.uint8 or self.pixels.ndim != 3:
            raise ValueError("frame pixels must be a uint8 array of shape (h, w, c)")
        if self.index < 0:
            raise ValueError("frame index must be >= 0")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.pixels.shape


@dataclass
class Video:
    meta: VideoMeta
    data: np.ndarray

    def __post_init__(self):
        expected = (self.meta.frame_count,) + self.meta.frame_shape
        if self.data.dtype != np.uint8 or self.data.shape != expected:
            raise DimensionMismatchError(
                f"video data has shape {self.data.shape} {self.data.dtype}, "
                f"meta requires {expected} uint8"
            )

    def __len__(self) -> int:
        return self.meta.frame_count

    def __getitem__(self, i: int) -> Frame:
        if i < 0:
            i += len(self)
        return Frame(self.data[i], i)

    def __iter__(self):
        for i in range(len(self)):
            yield Frame(self.data[i], i)

    def subset(self, indices) -> np.ndarray:
        return self.data[np.asarray(indices, dtype=np.int64)]

    @classmethod
    def from_frames(cls, frames: Sequence[Frame], fps: int = 30) -> "Video":
        if not frames:
            raise ValueError("cannot build a video from zero frames")
        h, w, c = frames[0].shape
        for f in frames:
            if f.shape != (h, w, c):
                raise DimensionMismatchError(
                    f"frame {f.index} has shape {f.shape}, expected {(h, w, c)}"
                )
        data = np.stack([f.pixels for f in frames])
        return cls(VideoMeta(w, h, c, fps, len(frames)), data)


@dataclass(frozen=True)
class ChannelStats:
    mean: tuple[float, ...]

    def __post_init__(self):
        for m in self.mean:
            if not 0.0 <= m <= 255.0:
                raise ValueError(f"channel mean {m} outside [0, 255]")


@dataclass(frozen=True)
class SynthSpec:
    meta: VideoMeta
    background_kind: str = "static"
    object_size: int = 8
    object_intensity: int = 220
    appearance_rate: float = 2.0
    dwell_frames: float = 150.0
    noise_sigma: float = 2.0
    seed: int = 0
    background_level: int = 60
    label_flip_rate: float = 0.0

    def validate(self) -> None:
        m = self.meta
        if self.background_kind not in ("static", "drifting-noise"):
            raise ValueError(f"background_kind must be 'static' or 'drifting-noise', got {self.background_kind!r}")
        if not 1 <= self.object_size < min(m.width, m.height):
            raise ValueError(
                f"object_size must satisfy 1 <= object_size < min(width, height)={min(m.width, m.height)}, "
                f"got {self.object_size}"
            )
        if not 0 <= self.object_intensity <= 255:
            raise ValueError(f"object_intensity must be in [0, 255], got {self.object_intensity}")
        if not 0 <= self.background_level <= 255:
            raise ValueError(f"background_level must be in [0, 255], got {self.background_level}")
        if self.appearance_rate < 0:
            raise ValueError(f"appearance_rate must be >= 0, got {self.appearance_rate}")
        if self.dwell_frames < 1:
            raise ValueError(f"dwell_frames must be >= 1, got {self.dwell_frames}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not 0.0 <= self.label_flip_rate <= 1.0:
            raise ValueError(f"label_flip_rate must be in [0, 1], got {self.label_flip_rate}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        d = dict(d)
        meta = VideoMeta(**d.pop("meta"))
        return cls(meta=meta, **d)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "meta"}
        out["meta"] = {k: getattr(self.meta, k) for k in self.meta.__dataclass_fields__}
        return out


# -- synthetic generation ---------------------------------------------------

_CHUNK = 2048


@dataclass
class _Track:
    start: int
    x: np.ndarray  # float positions per alive frame
    y: np.ndarray


def _object_tracks(spec: SynthSpec, rng: np.random.Generator) -> list[_Track]:
    m = spec.meta
    p_frame = spec.appearance_rate / (60.0 * m.fps)
    arrivals = rng.poisson(p_frame, size=m.frame_count) if p_frame > 0 else np.zeros(m.frame_count, int)
    tracks = []
    s = spec.object_size
    for start in np.flatnonzero(arrivals):
        for _ in range(int(arrivals[start])):
            life = int(rng.geometric(1.0 / spec.dwell_frames))
            x0 = rng.uniform(0, m.width - s)
            y0 = rng.uniform(0, m.height - s)
            vx, vy = rng.uniform(-0.25, 0.25, size=2)
            t = np.arange(life, dtype=np.float64)
            tracks.append(_Track(int(start), x0 + vx * t, y0 + vy * t))
    return tracks


def _background(spec: SynthSpec, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Static base image (h, w) plus per-frame global offsets."""
    m = spec.meta
    yy, xx = np.mgrid[0:m.height, 0:m.width]
    # fixed low-amplitude texture so the scene is not flat
    phase = rng.uniform(0, 2 * np.pi, size=2)
    base = spec.background_level + 6.0 * np.sin(xx / 3.0 + phase[0]) * np.cos(yy / 4.0 + phase[1])
    if spec.background_kind == "static":
        offsets = np.zeros(m.frame_count)
    else:
        steps = rng.normal(0.0, 0.05, size=m.frame_count)
        offsets = np.clip(np.cumsum(steps), -8.0, 8.0)
    return base, offsets


def generate_synthetic(spec: SynthSpec) -> tuple[Video, np.ndarray]:
    """Render a fixed-camera scene with bright rectangles drifting through it.

    Returns the video and a boolean label per frame (True while any object
    rectangle overlaps the frame).
    """
    spec.validate()
    m = spec.meta
    ss = np.random.SeedSequence(spec.seed)
    rng_events, rng_bg, rng_noise, rng_flip = (np.random.default_rng(s) for s in ss.spawn(4))

    tracks = _object_tracks(spec, rng_events)
    base, offsets = _background(spec, rng_bg)
    n, h, w, c = m.frame_count, m.height, m.width, m.channels
    s = spec.object_size

    # per-frame list of integer rectangles, clipped to the frame
    rects: list[list[tuple[int, int, int, int]]] = [[] for _ in range(n)]
    truth = np.zeros(n, dtype=bool)
    for tr in tracks:
        for k in range(len(tr.x)):
            i = tr.start + k
            if i >= n:
                break
            x0, y0 = int(round(tr.x[k])), int(round(tr.y[k]))
            x1, y1 = max(x0, 0), max(y0, 0)
            x2, y2 = min(x0 + s, w), min(y0 + s, h)
            if x1 < x2 and y1 < y2:
                rects[i].append((y1, y2, x1, x2))
                truth[i] = True

    data = np.empty((n, h, w, c), dtype=np.uint8)
    for lo in range(0, n, _CHUNK):
        hi = min(lo + _CHUNK, n)
        chunk = np.broadcast_to(base, (hi - lo, h, w)).astype(np.float64) + offsets[lo:hi, None, None]
        for i in range(lo, hi):
            for y1, y2, x1, x2 in rects[i]:
                chunk[i - lo, y1:y2, x1:x2] = spec.object_intensity
        chunk = np.repeat(chunk[..., None], c, axis=3)
        if spec.noise_sigma > 0:
            chunk += rng_noise.normal(0.0, spec.noise_sigma, size=chunk.shape)
        data[lo:hi] = np.clip(np.floor(chunk + 0.5), 0, 255).astype(np.uint8)

    labels = truth.copy()
    if spec.label_flip_rate > 0:
        labels ^= rng_flip.random(n) < spec.label_flip_rate
    return Video(m, data), labels


# -- container I/O ----------------------------------------------------------

def write_video(video: Video, path) -> None:
    m = video.meta
    if video.data.shape != (m.frame_count,) + m.frame_shape:
        raise DimensionMismatchError("frames inconsistent with meta")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, m.width, m.height, m.channels, m.fps, m.frame_count))
        fh.write(np.ascontiguousarray(video.data).tobytes())


def read_video(path) -> Video:
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic")
    if len(raw) < _HEADER.size:
        raise TruncatedVideoError(f"{path}: truncated header")
    _, version, w, h, c, fps, n = _HEADER.unpack_from(raw)
    if version != FORMAT_VERSION:
        raise VideoFormatError(f"{path}: unsupported version {version}")
    try:
        meta = VideoMeta(w, h, c, fps, n)
    except ValueError as exc:
        raise DimensionMismatchError(f"{path}: {exc}") from None
    payload = len(raw) - _HEADER.size
    need = n * meta.frame_size
    if payload < need:
        raise TruncatedVideoError(
            f"{path}: truncated, header declares {n} frames but payload holds {payload // meta.frame_size}"
        )
    if payload > need:
        raise DimensionMismatchError(f"{path}: {payload - need} trailing bytes beyond declared frames")
    data = np.frombuffer(raw, dtype=np.uint8, offset=_HEADER.size, count=need)
    return Video(meta, data.reshape((n,) + meta.frame_shape).copy())


def write_labels(labels: Iterable[bool], path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["frame_index", "label"])
        for i, lab in enumerate(labels):
            wr.writerow([i, int(bool(lab))])


def read_labels(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["frame_index", "label"]:
        raise ValueError(f"{path}: expected header 'frame_index,label'")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise ValueError(f"{path}:{lineno}: expected 2 columns")
        idx, lab = int(row[0]), row[1].strip()
        if idx != len(out):
            raise ValueError(f"{path}:{lineno}: frame indices must be consecutive from 0, got {idx}")
        if lab not in ("0", "1"):
            raise ValueError(f"{path}:{lineno}: label must be 0 or 1, got {lab!r}")
        out.append(lab == "1")
    return np.array(out, dtype=bool)


# -- preprocessing ----------------------------------------------------------

def compute_channel_means(frames: np.ndarray) -> ChannelStats:
    """Per-channel mean over every pixel of ``frames`` (n, h, w, c)."""
    frames = np.asarray(frames)
    if frames.ndim == 3:
        frames = frames[None]
    if frames.shape[0] == 0:
        raise ValueError("cannot compute channel means of an empty frame set")
    c = frames.shape[-1]
    sums = frames.reshape(-1, c).sum(axis=0, dtype=np.float64)
    count = frames.size // c
    return ChannelStats(tuple(float(v) for v in sums / count))


def _area_matrix(src: int, dst: int) -> np.ndarray:
    """(dst, src) integer overlap weights; each row sums to ``src``.

    Coordinates are scaled by ``dst`` so that overlaps are whole numbers and
    the weighted sums stay exact; divide by ``src`` to get the average.
    """
    out = np.zeros((dst, src))
    for j in range(dst):
        a, b = j * src, (j + 1) * src
        for k in range(a // dst, min(-(-b // dst), src)):
            out[j, k] = min(b, (k + 1) * dst) - max(a, k * dst)
    return out


@dataclass(frozen=True)
class Preprocessor:
    """Area-average downsampling then mean-centering into [-1, 1]."""

    stats: ChannelStats
    target_width: int
    target_height: int
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def _matrices(self, h: int, w: int):
        key = (h, w)
        if key not in self._cache:
            if self.target_height > h or self.target_width > w:
                raise ValueError(
                    f"target {self.target_width}x{self.target_height} larger than source {w}x{h}; "
                    "upsampling unsupported"
                )
            self._cache[key] = (_area_matrix(h, self.target_height), _area_matrix(w, self.target_width))
        return self._cache[key]

    @property
    def output_size(self) -> int:
        return self.target_width * self.target_height * len(self.stats.mean)

    def __call__(self, frames: np.ndarray) -> np.ndarray:
        """Normalize one frame (h, w, c) or a batch (n, h, w, c); returns flat rows."""
        frames = np.asarray(frames)
        single = frames.ndim == 3
        if single:
            frames = frames[None]
        n, h, w, c = frames.shape
        if c != len(self.stats.mean):
            raise ValueError(f"frame has {c} channels, stats have {len(self.stats.mean)}")
        rh, rw = self._matrices(h, w)
        x = frames.astype(np.float64)
        if (h, w) != (self.target_height, self.target_width):
            x = np.einsum("ih,nhwc,jw->nijc", rh, x, rw, optimize=True) / (h * w)
        x = (x - np.asarray(self.stats.mean)) / 127.5
        np.clip(x, -1.0, 1.0, out=x)
        x = x.reshape(n, -1)
        return x[0] if single else x


def preprocess(frame, stats: ChannelStats, target: tuple[int, int]) -> np.ndarray:
    pixels = frame.pixels if isinstance(frame, Frame) else frame
    return Preprocessor(stats, target[0], target[1])(pixels)
