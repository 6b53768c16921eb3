"""Small fully connected binary classifiers trained per video.

Hidden layers use ReLU, the output is a single sigmoid unit, and training
minimises mean binary cross-entropy with RMSprop.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class ArchSpec:
    input_width: int = 32
    input_height: int = 32
    channels: int = 1
    hidden_layers: int = 1
    hidden_width: int = 16
    penultimate_width: int = 16

    def __post_init__(self):
        if self.hidden_layers not in (0, 1, 2):
            raise ValueError("hidden_layers must be 0, 1 or 2")
        for name in ("input_width", "input_height", "channels", "hidden_width", "penultimate_width"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def input_size(self) -> int:
        return self.input_width * self.input_height * self.channels

    @property
    def layer_sizes(self) -> list[int]:
        sizes = [self.input_size]
        if self.hidden_layers >= 1:
            sizes.append(self.hidden_width)
        if self.hidden_layers == 2:
            sizes.append(self.penultimate_width)
        return sizes + [1]

    @property
    def key(self) -> str:
        if self.hidden_layers == 2:
            return f"L2-C{self.hidden_width}-D{self.penultimate_width}"
        return f"L{self.hidden_layers}-C{self.hidden_width}"

    @property
    def size_rank(self) -> tuple[int, int, int]:
        d = self.penultimate_width if self.hidden_layers == 2 else 0
        return (self.hidden_layers, self.hidden_width, d)


def arch_grid(input_width=32, input_height=32, channels=1, layers=(1, 2),
              widths=(8, 16, 32, 64), penultimate=(16, 32, 64), limit: int = 24) -> list[ArchSpec]:
    """Enumerate the architecture grid; D only varies for two hidden layers."""
    out = []
    for L in layers:
        for C in widths:
            for D in (penultimate if L == 2 else (penultimate[0],)):
                out.append(ArchSpec(input_width, input_height, channels, L, C, D))
    return out[:limit]


@dataclass
class SpecializedModel:
    arch: ArchSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    train_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        sizes = self.arch.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ValueError("layer count does not match architecture")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[k], sizes[k + 1]) or b.shape != (sizes[k + 1],):
                raise ValueError(f"layer {k} shape {w.shape}/{b.shape} inconsistent with {sizes}")

    @property
    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def copy(self) -> "SpecializedModel":
        return SpecializedModel(self.arch, [w.copy() for w in self.weights],
                                [b.copy() for b in self.biases], dict(self.train_meta))

    def to_dict(self) -> dict:
        return {
            "arch": {k: getattr(self.arch, k) for k in self.arch.__dataclass_fields__},
            "weights": [w.reshape(-1).tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "train_meta": self.train_meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpecializedModel":
        arch = ArchSpec(**d["arch"])
        sizes = arch.layer_sizes
        weights = [np.asarray(w, dtype=np.float64).reshape(sizes[k], sizes[k + 1])
                   for k, w in enumerate(d["weights"])]
        biases = [np.asarray(b, dtype=np.float64) for b in d["biases"]]
        return cls(arch, weights, biases, dict(d.get("train_meta", {})))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "SpecializedModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def init_model(arch: ArchSpec, seed: int = 0) -> SpecializedModel:
    """He-normal weights (fan-in scaled), zero biases."""
    rng = np.random.default_rng(seed)
    sizes = arch.layer_sizes
    weights, biases = [], []
    for k in range(len(sizes) - 1):
        gain = 2.0 if k < len(sizes) - 2 else 1.0
        weights.append(rng.normal(0.0, np.sqrt(gain / sizes[k]), size=(sizes[k], sizes[k + 1])))
        biases.append(np.zeros(sizes[k + 1]))
    return SpecializedModel(arch, weights, biases, {"seed": seed})


_EPS_OUT = 1e-15


def _logits(model: SpecializedModel, x: np.ndarray):
    acts = [x]
    h = x
    last = len(model.weights) - 1
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        h = np.maximum(z, 0.0) if k < last else z
        acts.append(h)
    return acts[-1][:, 0], acts


def forward(model: SpecializedModel, x) -> np.ndarray | float:
    """Confidence in (0, 1) for one normalized frame or a batch of them."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None]
    if x.shape[1] != model.arch.input_size:
        raise ValueError(f"input has {x.shape[1]} values, model expects {model.arch.input_size}")
    z, _ = _logits(model, x)
    c = np.clip(0.5 * (1.0 + np.tanh(0.5 * z)), _EPS_OUT, 1.0 - _EPS_OUT)
    return float(c[0]) if single else c


def loss(model: SpecializedModel, x, y) -> float:
    """Mean binary cross-entropy computed from logits."""
    z, _ = _logits(model, np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def backward(model: SpecializedModel, x, y) -> list[np.ndarray]:
    """Exact gradients of the mean BCE loss, ordered like ``model.params``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) == 0:
        raise ValueError("cannot differentiate an empty batch")
    z, acts = _logits(model, x)
    n = len(x)
    p = 0.5 * (1.0 + np.tanh(0.5 * z))
    delta = ((p - y) / n)[:, None]
    grads = []
    for k in range(len(model.weights) - 1, -1, -1):
        gw = acts[k].T @ delta
        gb = delta.sum(axis=0)
        grads.append(gb)
        grads.append(gw)
        if k > 0:
            delta = (delta @ model.weights[k].T) * (acts[k] > 0)
    grads.reverse()
    return grads


@dataclass(frozen=True)
class TrainHyper:
    learning_rate: float = 1e-3
    rmsprop_decay: float = 0.9
    epsilon: float = 1e-7
    max_epochs: int = 5
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.max_epochs <= 5:
            raise ValueError("max_epochs must be in [1, 5]")
        if self.learning_rate <= 0 or self.epsilon <= 0 or not 0 < self.rmsprop_decay < 1:
            raise ValueError("learning_rate and epsilon must be positive, rmsprop_decay in (0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def train(model: SpecializedModel, train_x, train_y, val_x, val_y,
          hyper: TrainHyper = TrainHyper()) -> tuple[SpecializedModel, list[dict]]:
    """RMSprop over shuffled minibatches.

    Stops once the epoch-end training loss rises above the previous epoch's
    and returns the parameters from the epoch with the lowest cross-val loss.
    """
    train_x = np.asarray(train_x, dtype=np.float64)
    val_x = np.asarray(val_x, dtype=np.float64)
    train_y = np.asarray(train_y, dtype=np.float64)
    val_y = np.asarray(val_y, dtype=np.float64)
    if len(train_x) == 0 or len(val_x) == 0:
        raise ValueError("training and cross-validation sets must be nonempty")

    model = model.copy()
    rng = np.random.default_rng(hyper.seed)
    params = model.params
    cache = [np.zeros_like(p) for p in params]
    history: list[dict] = []
    best: Optional[SpecializedModel] = None
    best_val = np.inf
    prev_train = np.inf
    n = len(train_x)
    for epoch in range(1, hyper.max_epochs + 1):
        order = rng.permutation(n)
        for lo in range(0, n, hyper.batch_size):
            idx = order[lo:lo + hyper.batch_size]
            grads = backward(model, train_x[idx], train_y[idx])
            for p, g, s in zip(params, grads, cache):
                s *= hyper.rmsprop_decay
                s += (1.0 - hyper.rmsprop_decay) * g * g
                p -= hyper.learning_rate * g / (np.sqrt(s) + hyper.epsilon)
        tr = loss(model, train_x, train_y)
        va = loss(model, val_x, val_y)
        history.append({"epoch": epoch, "train_loss": tr, "val_loss": va})
        if va < best_val or best is None:
            best_val = va
            best = model.copy()
            best.train_meta.update(best_epoch=epoch)
        if tr > prev_train:
            break
        prev_train = tr

    best.train_meta.update(seed=hyper.seed, epochs_run=len(history), final_val_loss=best_val)
    return best, history


class Verdict(str, enum.Enum):
    NEGATIVE = "negative"
    POSITIVE = "positive"
    UNCERTAIN = "uncertain"


@dataclass(frozen=True)
class ThresholdPair:
    c_low: float = 0.0
    c_high: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.c_low <= 1.0 and 0.0 <= self.c_high <= 1.0):
            raise ValueError("thresholds must lie in [0, 1]")
        if self.c_low > self.c_high:
            raise ValueError(f"c_low {self.c_low} exceeds c_high {self.c_high}")


def classify(c: float, t: ThresholdPair) -> Verdict:
    # boundaries defer to the oracle
    if c < t.c_low:
        return Verdict.NEGATIVE
    if c > t.c_high:
        return Verdict.POSITIVE
    return Verdict.UNCERTAIN
