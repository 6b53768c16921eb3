"""Cost-based search for the cheapest cascade that meets FP/FN targets.

The search trains every candidate detector and specialized model on the
training split, scores each one once on the held-out evaluation split, and
then sweeps detector firing thresholds and model confidence thresholds for
every (detector, model) pair.

Error accounting works on *groups*: a checked frame plus the skipped frames
that follow it and carry its label. Suppressed checks emit the anchor's
reference label, uncertain checks emit the checked frame's reference label,
and confident checks emit the model's verdict.
"""

from __future__ import annotations

import logging
import math
import time
from fractions import Fraction
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .cascade import CascadeConfig
from .diff_detect import (DiffDetectorConfig, anchor_position, blocked_mse_batch,
                          train_block_weights)
from .frames import ChannelStats, Preprocessor, Video, compute_channel_means
from .oracle import DataSplit, OracleSpec, build_reference_image
from .specialized import (ArchSpec, ThresholdPair, TrainHyper, arch_grid,
                          forward, init_model, train)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AccuracyTarget:
    fp_star: float = 0.01
    fn_star: float = 0.01

    def __post_init__(self):
        if not (0.0 <= self.fp_star <= 1.0 and 0.0 <= self.fn_star <= 1.0):
            raise ValueError("fp_star and fn_star must lie in [0, 1]")

    def budgets(self, n: int) -> tuple[int, int]:
        """Largest allowed (FP, FN) counts over ``n`` frames."""
        return (int(math.floor(self.fp_star * n + 1e-9)), int(math.floor(self.fn_star * n + 1e-9)))


@dataclass(frozen=True)
class SelectivityEstimate:
    f_s: float
    f_m: float
    f_c: float

    def __post_init__(self):
        for name in ("f_s", "f_m", "f_c"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")


class StageCosts(NamedTuple):
    t_check: float
    t_model: float
    t_full: float


@dataclass
class TimingProfile:
    """Per-frame seconds for each stage; specialized costs are keyed by arch."""

    t_mse: float
    t_full: float
    t_specialized: dict = field(default_factory=dict)
    t_mse_blocked: Optional[float] = None

    def __post_init__(self):
        vals = [self.t_mse, self.t_full, *self.t_specialized.values()]
        if self.t_mse_blocked is not None:
            vals.append(self.t_mse_blocked)
        if any(not v > 0 for v in vals):
            raise ValueError("all timing entries must be > 0")

    def t_model(self, arch_key: Optional[str]) -> float:
        if arch_key is None:
            return 0.0
        if arch_key in self.t_specialized:
            return self.t_specialized[arch_key]
        if "default" in self.t_specialized:
            return self.t_specialized["default"]
        raise KeyError(f"no specialized-model timing for {arch_key}")

    def t_check(self, metric: Optional[str]) -> float:
        if metric is None:
            return 0.0
        if metric == "blocked-mse" and self.t_mse_blocked is not None:
            return self.t_mse_blocked
        return self.t_mse

    def stage_costs(self, metric: Optional[str], arch_key: Optional[str]) -> StageCosts:
        return StageCosts(self.t_check(metric), self.t_model(arch_key), self.t_full)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TimingProfile":
        return cls(**d)


def estimate_cost(sel: SelectivityEstimate, timing) -> float:
    """Expected seconds per frame for a detector -> model -> oracle cascade.

    ``timing`` is a :class:`StageCosts` or any ``(t_check, t_model, t_full)``.
    """
    t_check, t_model, t_full = timing
    return (sel.f_s * t_check + sel.f_s * sel.f_m * t_model
            + sel.f_s * sel.f_m * sel.f_c * t_full)


def exact_cost(n: int, checks: int, fired: int, uncertain: int, timing) -> Fraction:
    """The expected per-frame cost as an exact rational, used for ordering candidates."""
    t_check, t_model, t_full = (Fraction(t) for t in timing)
    return (checks * t_check + fired * t_model + uncertain * t_full) / n


def _selectivity(n: int, checks: int, fired: int, uncertain: int) -> SelectivityEstimate:
    return SelectivityEstimate(
        checks / n if n else 0.0,
        fired / checks if checks else 0.0,
        uncertain / fired if fired else 0.0,
    )


# -- profiling ----------------------------------------------------------------

@dataclass
class DetectorProfile:
    """One detector's view of the evaluation split, in check order.

    ``order`` lists checks by decreasing score (stable), the list swept by
    prefixes. ``content_check`` is False for the pass-through detector whose
    scores are all +inf.
    """

    name: str
    metric: Optional[str]
    n_frames: int
    checked: np.ndarray
    scores: np.ndarray
    ref: np.ndarray
    inherited: np.ndarray
    group_pos: np.ndarray
    group_neg: np.ndarray
    order: np.ndarray = None
    content_check: bool = True

    def __post_init__(self):
        if self.order is None:
            self.order = np.argsort(-self.scores, kind="stable")
        k = len(self.checked)
        for name in ("scores", "ref", "inherited", "group_pos", "group_neg", "order"):
            if len(getattr(self, name)) != k:
                raise ValueError(f"profile field {name} has length {len(getattr(self, name))}, expected {k}")

    @classmethod
    def from_arrays(cls, scores, ref_labels, inherited, t_skip: int = 1, *, name="detector",
                    metric="global-mse", frame_labels=None, content_check=True) -> "DetectorProfile":
        """Build a profile from per-check arrays.

        ``frame_labels`` holds every frame's reference label; when omitted the
        checks are taken to be all frames (``t_skip`` must then be 1).
        """
        scores = np.asarray(scores, dtype=np.float64)
        ref_labels = np.asarray(ref_labels, dtype=bool)
        if frame_labels is None:
            if t_skip != 1:
                raise ValueError("frame_labels are required when t_skip > 1")
            frame_labels = ref_labels
        frame_labels = np.asarray(frame_labels, dtype=bool)
        n = len(frame_labels)
        checked = np.arange(0, n, t_skip)
        pos, neg = _group_counts(frame_labels, checked)
        return cls(name, metric, n, checked, scores, frame_labels[checked],
                   np.asarray(inherited, dtype=bool), pos, neg, content_check=content_check)


def _group_counts(labels: np.ndarray, checked: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = len(labels)
    csum = np.concatenate(([0], np.cumsum(labels, dtype=np.int64)))
    ends = np.append(checked[1:], n)
    pos = csum[ends] - csum[checked]
    return pos, (ends - checked) - pos


def pass_through_profile(labels) -> DetectorProfile:
    """Profile for a cascade with no difference detector."""
    labels = np.asarray(labels, dtype=bool)
    n = len(labels)
    checked = np.arange(n)
    pos, neg = _group_counts(labels, checked)
    return DetectorProfile("none", None, n, checked, np.full(n, np.inf), labels.copy(),
                           np.zeros(n, dtype=bool), pos, neg, content_check=False)


def _earlier_anchors(n: int, t_skip: int, t_diff: int) -> tuple[np.ndarray, np.ndarray]:
    checked = np.arange(0, n, t_skip)
    anchors = np.array([-1 if (a := anchor_position(int(i), t_skip, t_diff)) is None else a
                        for i in checked], dtype=np.int64)
    return checked, anchors


def _scores_in_chunks(config: DiffDetectorConfig, frames: np.ndarray, anchor_frames, chunk=4096):
    out = np.empty(len(frames))
    for lo in range(0, len(frames), chunk):
        hi = lo + chunk
        a = anchor_frames if anchor_frames.shape[0] == 1 else anchor_frames[lo:hi]
        out[lo:hi] = config.score_batch(frames[lo:hi], a)
    return out


def profile_detector(config: DiffDetectorConfig, frames: np.ndarray, labels) -> DetectorProfile:
    """Score a fitted detector over a contiguous stretch of frames.

    ``frames`` and ``labels`` are the evaluation split; checks start at its
    first frame exactly as they would at the start of a stream.
    """
    labels = np.asarray(labels, dtype=bool)
    n = len(frames)
    if len(labels) != n:
        raise ValueError(f"{n} frames but {len(labels)} labels")
    if config.mode == "reference-image":
        checked = np.arange(0, n, config.t_skip)
        scores = _scores_in_chunks(config, frames[checked], config.reference[None])
        inherited = np.zeros(len(checked), dtype=bool)
    else:
        checked, anchors = _earlier_anchors(n, config.t_skip, config.t_diff)
        has = anchors >= 0
        scores = np.full(len(checked), np.inf)
        scores[has] = _scores_in_chunks(config, frames[checked[has]], frames[anchors[has]])
        inherited = np.zeros(len(checked), dtype=bool)
        inherited[has] = labels[anchors[has]]
    pos, neg = _group_counts(labels, checked)
    return DetectorProfile(config.name, config.metric, n, checked, scores, labels[checked],
                           inherited, pos, neg)


# -- threshold sweep ------------------------------------------------------------

@dataclass
class SweepResult:
    feasible: bool
    delta_diff: Optional[float]
    c_low: float
    c_high: float
    selectivity: SelectivityEstimate
    cost: float
    fp: int
    fn: int
    checks: int
    fired: int
    oracle_calls: int
    n_frames: int
    exact: Fraction = Fraction(0)

    @property
    def thresholds(self) -> ThresholdPair:
        return ThresholdPair(self.c_low, self.c_high)

    def key(self):
        """Ordering among candidates: cost, oracle calls, delta, larger c_low, smaller c_high."""
        d = -1.0 if self.delta_diff is None else self.delta_diff
        return (self.exact, self.oracle_calls, d, -self.c_low, self.c_high)


def delta_candidates(profile: DetectorProfile, max_candidates: Optional[int] = None) -> np.ndarray:
    """Ascending firing thresholds: 0 plus each distinct finite score.

    With ``max_candidates`` the distinct scores are thinned to evenly spaced
    ranks, always keeping 0 and the largest score.
    """
    if not profile.content_check:
        return np.array([0.0])
    finite = profile.scores[np.isfinite(profile.scores)]
    cands = np.unique(np.concatenate(([0.0], finite)))
    if max_candidates is not None and len(cands) > max_candidates:
        pick = np.unique(np.round(np.linspace(0, len(cands) - 1, max_candidates)).astype(int))
        cands = cands[pick]
    return cands


def confidence_candidates(confidences) -> np.ndarray:
    return np.unique(np.concatenate(([0.0, 1.0], np.asarray(confidences, dtype=np.float64))))


def sweep_pair(profile: DetectorProfile, confidences, targets: AccuracyTarget, timing,
               *, max_delta_candidates: Optional[int] = None,
               delta_values: Optional[Sequence[float]] = None) -> SweepResult:
    """Cheapest (delta_diff, c_low, c_high) meeting ``targets`` on this profile.

    ``confidences`` are the model's outputs for the profiled checks (aligned
    with ``profile.checked``). ``timing`` is ``(t_check, t_model, t_full)``.
    Returns the best feasible triple, or a best-effort infeasible result.
    """
    conf = np.asarray(confidences, dtype=np.float64)
    k = len(profile.checked)
    if conf.shape != (k,):
        raise ValueError(f"confidences cover {conf.shape} frames, profile has {k} checks")
    costs = StageCosts(*timing)
    n = profile.n_frames
    fp_budget, fn_budget = targets.budgets(n)

    values = confidence_candidates(conf)
    m = len(values)
    rank = np.searchsorted(values, conf)
    ref = profile.ref
    pos = profile.group_pos.astype(np.int64)
    neg = profile.group_neg.astype(np.int64)

    deltas = (np.asarray(delta_values, dtype=np.float64) if delta_values is not None
              else delta_candidates(profile, max_delta_candidates))
    # suppressed checks contribute FN (inherit absent) or FP (inherit present)
    supp_fn_w = np.where(profile.inherited, 0, pos)
    supp_fp_w = np.where(profile.inherited, neg, 0)

    # per-rank accumulators over the fired set, grown as delta decreases
    w_cnt = np.zeros(m, dtype=np.int64)
    w_a = np.zeros(m, dtype=np.int64)   # ref=1 frames: FN if c < c_low
    w_c = np.zeros(m, dtype=np.int64)   # ref=1 frames: FP if c >= c_low
    w_b = np.zeros(m, dtype=np.int64)   # ref=0 frames: FN if c <= c_high
    w_d = np.zeros(m, dtype=np.int64)   # ref=0 frames: FP if c > c_high
    supp_fn = int(supp_fn_w.sum())
    supp_fp = int(supp_fp_w.sum())
    fired = 0

    order = profile.order
    scores_sorted = profile.scores[order]
    cursor = 0
    checks = k
    t_check = costs.t_check if profile.content_check else 0.0
    stage = (t_check, costs.t_model, costs.t_full)
    best: Optional[SweepResult] = None
    fallback: Optional[tuple] = None
    idx = np.arange(m)

    deltas = deltas[::-1]
    # number of checks scoring strictly above each delta
    stops = np.searchsorted(-scores_sorted, -deltas, side="left")
    for delta, stop in zip(deltas, stops.tolist()):
        if best is not None:
            # fired only grows as delta drops, so this bounds every remaining candidate
            if exact_cost(n, checks, stop, 0, stage) > best.exact:
                break
        if stop > cursor:
            new = order[cursor:stop]
            r = rank[new]
            np.add.at(w_cnt, r, 1)
            one = ref[new]
            np.add.at(w_a, r[one], pos[new][one])
            np.add.at(w_c, r[one], neg[new][one])
            np.add.at(w_b, r[~one], pos[new][~one])
            np.add.at(w_d, r[~one], neg[new][~one])
            supp_fn -= int(supp_fn_w[new].sum())
            supp_fp -= int(supp_fp_w[new].sum())
            fired += stop - cursor
            cursor = stop

        cnt_incl = np.cumsum(w_cnt)
        neg_cnt = cnt_incl - w_cnt                   # fired with c < values[i]
        pos_cnt = fired - cnt_incl                   # fired with c > values[j]
        a_excl = np.cumsum(w_a) - w_a
        c_geq = int(w_c.sum()) - (np.cumsum(w_c) - w_c)
        b_incl = np.cumsum(w_b)
        d_gt = int(w_d.sum()) - np.cumsum(w_d)

        fp_room = fp_budget - supp_fp - c_geq         # allowance left for D(j), per i
        fn_room = fn_budget - supp_fn - a_excl        # allowance left for B(j), per i
        j_min = np.searchsorted(-d_gt, -fp_room, side="left")
        j_max = np.searchsorted(b_incl, fn_room, side="right") - 1
        j_star = np.maximum(idx, j_min)
        ok = (fp_room >= 0) & (fn_room >= 0) & (j_star < m) & (j_star <= j_max)

        # best-effort fallback: (0, 1) thresholds send every fired frame to the oracle
        fp0 = supp_fp + int(w_c.sum())
        fn0 = supp_fn + int(w_b.sum())
        excess = max(0, fp0 - fp_budget) + max(0, fn0 - fn_budget)
        sel0 = _selectivity(n, checks, fired, fired)
        cost0 = estimate_cost(sel0, (t_check, costs.t_model, costs.t_full))
        cand = (excess, cost0, float(delta))
        if fallback is None or cand < fallback[0]:
            fallback = (cand, SweepResult(False, _delta_out(profile, delta), 0.0, 1.0, sel0, cost0,
                                          fp0, fn0, checks, fired, fired, n,
                                          exact_cost(n, checks, fired, fired, stage)))
        if not ok.any():
            continue
        ii = np.flatnonzero(ok)
        jj = j_star[ii]
        unc = fired - neg_cnt[ii] - pos_cnt[jj]
        pick = np.lexsort((values[jj], -values[ii], unc))[0]
        i, j, u = int(ii[pick]), int(jj[pick]), int(unc[pick])
        fp = supp_fp + int(c_geq[i]) + int(d_gt[j])
        fn = supp_fn + int(a_excl[i]) + int(b_incl[j])
        sel = _selectivity(n, checks, fired, u)
        cost = estimate_cost(sel, (t_check, costs.t_model, costs.t_full))
        res = SweepResult(True, _delta_out(profile, delta), float(values[i]), float(values[j]),
                          sel, cost, fp, fn, checks, fired, u, n, exact_cost(n, checks, fired, u, stage))
        if best is None or res.key() < best.key():
            best = res
    return best if best is not None else fallback[1]


def _delta_out(profile: DetectorProfile, delta: float) -> Optional[float]:
    return float(delta) if profile.content_check else None


# -- candidate grid ---------------------------------------------------------------

@dataclass
class DetectorCandidate:
    mode: Optional[str]
    metric: Optional[str] = None
    grid: int = 1
    t_skip: int = 1
    t_diff: int = 1

    @property
    def name(self) -> str:
        if self.mode is None:
            return "none"
        return DiffDetectorConfig(self.mode, self.metric, self.grid, t_diff=self.t_diff,
                                  t_skip=self.t_skip, weights=None).name


@dataclass
class SearchGrid:
    modes: tuple = ("reference-image", "earlier-frame")
    metrics: tuple = ("global-mse", "blocked-mse")
    block_grid: int = 4
    t_skips: tuple = (1, 5, 15, 30)
    t_diffs: tuple = (1, 10, 30)
    include_no_detector: bool = True
    archs: list = field(default_factory=lambda: arch_grid(16, 16, 1))
    hyper: TrainHyper = field(default_factory=TrainHyper)
    max_delta_candidates: Optional[int] = 256
    block_lr_iterations: int = 1500

    def detectors(self) -> list[DetectorCandidate]:
        out = [DetectorCandidate(None)] if self.include_no_detector else []
        for mode in self.modes:
            for metric in self.metrics:
                grid = self.block_grid if metric == "blocked-mse" else 1
                for ts in self.t_skips:
                    for td in (self.t_diffs if mode == "earlier-frame" else (1,)):
                        out.append(DetectorCandidate(mode, metric, grid, ts, td))
        return out

    @property
    def n_d(self) -> int:
        return len(self.detectors())

    @property
    def n_c(self) -> int:
        return len(self.archs)


def fit_detector(cand: DetectorCandidate, frames: np.ndarray, labels,
                 iterations: int = 1500) -> Optional[DiffDetectorConfig]:
    """Fit reference image and block weights on training frames.

    ``None`` for the pass-through candidate; raises ``ValueError`` when the
    candidate cannot be trained on this data.
    """
    if cand.mode is None:
        return None
    labels = np.asarray(labels, dtype=bool)
    cfg = DiffDetectorConfig(cand.mode, cand.metric, cand.grid, t_diff=cand.t_diff, t_skip=cand.t_skip)
    if cand.mode == "reference-image":
        cfg.reference = build_reference_image(frames, labels).pixels
    if cand.metric == "blocked-mse":
        if cand.mode == "reference-image":
            checked = np.arange(0, len(frames), cand.t_skip)
            feats = np.concatenate([blocked_mse_batch(frames[c], cfg.reference[None], cand.grid)
                                    for c in np.array_split(checked, max(1, len(checked) // 4096))])
            targets = labels[checked]
        else:
            checked, anchors = _earlier_anchors(len(frames), cand.t_skip, cand.t_diff)
            has = anchors >= 0
            checked, anchors = checked[has], anchors[has]
            feats = blocked_mse_batch(frames[checked], frames[anchors], cand.grid)
            targets = labels[checked] != labels[anchors]
        w, b = train_block_weights(feats, targets, iterations=iterations)
        cfg.weights, cfg.bias = w, b
    return cfg


# -- timing -------------------------------------------------------------------------

def measure_timing(frames: np.ndarray, stats: ChannelStats, archs: Sequence[ArchSpec],
                   t_full: float, block_grid: int = 4, samples: int = 1000, seed: int = 0) -> TimingProfile:
    """Time per-frame detector scoring and per-frame preprocess+forward passes."""
    from .diff_detect import DetectorState, dd_step

    sample = frames[:samples]
    ref = sample[0]

    def per_frame(cfg):
        st = DetectorState.initial(cfg)
        t0 = time.perf_counter()
        for i, px in enumerate(sample):
            dd_step(cfg, st, px, i)
        return (time.perf_counter() - t0) / len(sample)

    t_mse = per_frame(DiffDetectorConfig("reference-image", "global-mse", reference=ref))
    k = block_grid * block_grid
    t_blk = per_frame(DiffDetectorConfig("reference-image", "blocked-mse", block_grid,
                                         weights=np.zeros(k), reference=ref))
    t_spec = {}
    for arch in archs:
        model = init_model(arch, seed)
        pre = Preprocessor(stats, arch.input_width, arch.input_height)
        t0 = time.perf_counter()
        for px in sample:
            forward(model, pre(px))
        t_spec[arch.key] = (time.perf_counter() - t0) / len(sample)
    return TimingProfile(t_mse=t_mse, t_full=t_full, t_specialized=t_spec, t_mse_blocked=t_blk)


# -- search ---------------------------------------------------------------------------

@dataclass
class RankingEntry:
    detector: str
    arch: str
    feasible: bool
    delta_diff: Optional[float]
    c_low: float
    c_high: float
    cost: float
    fp: int
    fn: int
    oracle_calls: int
    note: str = ""


@dataclass
class SearchResult:
    feasible: bool
    config: CascadeConfig
    expected_cost: float
    selectivity: SelectivityEstimate
    predicted_fp_rate: float
    predicted_fn_rate: float
    ranking: list
    n_frames: int
    timing: TimingProfile
    detector_name: str = ""
    arch_key: str = ""
    elapsed: float = 0.0

    def summary(self) -> dict:
        return {
            "feasible": self.feasible,
            "detector": self.detector_name,
            "arch": self.arch_key,
            "delta_diff": None if self.config.detector is None else self.config.detector.delta_diff,
            "c_low": self.config.thresholds.c_low,
            "c_high": self.config.thresholds.c_high,
            "expected_cost": self.expected_cost,
            "selectivity": asdict(self.selectivity),
            "predicted_fp_rate": self.predicted_fp_rate,
            "predicted_fn_rate": self.predicted_fn_rate,
            "eval_frames": self.n_frames,
        }

    def to_dict(self) -> dict:
        return {
            **self.summary(),
            "config": self.config.to_dict(),
            "timing": self.timing.to_dict(),
            "ranking": [asdict(r) for r in self.ranking],
        }


RANKING_COLUMNS = ("detector", "arch", "delta_diff", "c_low", "c_high", "cost", "fp", "fn", "feasible")


def ranking_rows(result: SearchResult) -> list[list]:
    rows = []
    for r in result.ranking:
        rows.append([r.detector, r.arch, "" if r.delta_diff is None else repr(r.delta_diff),
                     repr(r.c_low), repr(r.c_high), repr(r.cost), r.fp, r.fn, int(r.feasible)])
    return rows


def _train_arch(arch, seed, hyper, xtr, ytr, xcv, ycv):
    model = init_model(arch, seed)
    trained, history = train(model, xtr, ytr, xcv, ycv, hyper)
    trained.train_meta["history"] = history
    return trained


def search(video: Video, labels, split: DataSplit, targets: AccuracyTarget,
           timing: Optional[TimingProfile] = None, grid: Optional[SearchGrid] = None,
           oracle_spec: Optional[OracleSpec] = None, seed: int = 0,
           workers: int = 1) -> SearchResult:
    """Run the full train / profile / sweep search.

    ``labels`` must hold reference labels for at least every frame in
    ``split.labeled``; other entries are ignored.
    """
    t_begin = time.perf_counter()
    grid = grid or SearchGrid()
    oracle_spec = oracle_spec or OracleSpec()
    labels = np.asarray(labels, dtype=bool)
    if len(labels) < split.eval.stop:
        raise ValueError(f"labels cover {len(labels)} frames; split needs {split.eval.stop}")
    data = video.data
    tr, cv, ev = split.train, split.crossval, split.eval
    train_frames = data[tr.start:tr.stop]
    eval_frames = data[ev.start:ev.stop]
    y_train, y_cv, y_eval = labels[tr.start:tr.stop], labels[cv.start:cv.stop], labels[ev.start:ev.stop]

    stats = compute_channel_means(train_frames)
    if timing is None:
        timing = measure_timing(eval_frames, stats, grid.archs, oracle_spec.t_full_nn, grid.block_grid, seed=seed)

    # 1. train filters
    log.info("training %d specialized models", len(grid.archs))
    inputs = {}
    for arch in grid.archs:
        dims = (arch.input_width, arch.input_height)
        if dims not in inputs:
            pre = Preprocessor(stats, *dims)
            inputs[dims] = (pre(train_frames), pre(data[cv.start:cv.stop]), pre(eval_frames))
    hyper = grid.hyper

    def fit_model(a):
        i, arch = a
        xtr, xcv, _ = inputs[(arch.input_width, arch.input_height)]
        h = TrainHyper(**{**asdict(hyper), "seed": hyper.seed + seed + i})
        return _train_arch(arch, h.seed, h, xtr, y_train, xcv, y_cv)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        models = list(pool.map(fit_model, enumerate(grid.archs)))

    det_cands = grid.detectors()
    log.info("fitting %d detector candidates", len(det_cands))

    def fit_det(cand):
        try:
            return fit_detector(cand, train_frames, y_train, grid.block_lr_iterations), ""
        except ValueError as exc:
            return None, str(exc)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        fitted = list(pool.map(fit_det, det_cands))

    # 2. profile filters on the evaluation split
    profiles = []
    for cand, (cfg, err) in zip(det_cands, fitted):
        if cand.mode is None:
            profiles.append(pass_through_profile(y_eval))
        elif cfg is None:
            profiles.append(None)
        else:
            profiles.append(profile_detector(cfg, eval_frames, y_eval))
    confidences = [forward(mdl, inputs[(mdl.arch.input_width, mdl.arch.input_height)][2])
                   for mdl in models]

    # 3. sweep every pair
    ranking = []
    results = []
    for d_idx, (cand, prof) in enumerate(zip(det_cands, profiles)):
        for m_idx, mdl in enumerate(models):
            if prof is None:
                ranking.append(RankingEntry(cand.name, mdl.arch.key, False, None, 0.0, 1.0,
                                            math.inf, -1, -1, -1, note=fitted[d_idx][1]))
                continue
            costs = timing.stage_costs(cand.metric, mdl.arch.key)
            res = sweep_pair(prof, confidences[m_idx][prof.checked], targets, costs,
                             max_delta_candidates=grid.max_delta_candidates)
            results.append((res, d_idx, m_idx))
            ranking.append(RankingEntry(cand.name, mdl.arch.key, res.feasible, res.delta_diff,
                                        res.c_low, res.c_high, res.cost, res.fp, res.fn,
                                        res.oracle_calls))

    def order_key(item):
        res, d_idx, m_idx = item
        return (not res.feasible, res.exact, res.oracle_calls, models[m_idx].arch.size_rank,
                -1.0 if res.delta_diff is None else res.delta_diff, d_idx, m_idx)

    feasible = [r for r in results if r[0].feasible]
    if feasible:
        best, d_idx, m_idx = min(feasible, key=order_key)
    else:
        best, d_idx, m_idx = min(results, key=lambda it: (
            max(0, it[0].fp - targets.budgets(it[0].n_frames)[0])
            + max(0, it[0].fn - targets.budgets(it[0].n_frames)[1]), it[0].exact, it[1], it[2]))
    ranking.sort(key=lambda r: (not r.feasible, r.cost, r.oracle_calls))

    det_cfg = fitted[d_idx][0]
    if det_cfg is not None:
        det_cfg.delta_diff = best.delta_diff
    config = CascadeConfig(oracle=oracle_spec, detector=det_cfg, model=models[m_idx],
                           thresholds=best.thresholds, stats=stats)
    n = best.n_frames
    return SearchResult(
        feasible=best.feasible, config=config, expected_cost=best.cost,
        selectivity=best.selectivity, predicted_fp_rate=best.fp / n, predicted_fn_rate=best.fn / n,
        ranking=ranking, n_frames=n, timing=timing, detector_name=det_cands[d_idx].name,
        arch_key=models[m_idx].arch.key, elapsed=time.perf_counter() - t_begin,
    )
