"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the summary lines are
repeated at the end of the pytest report.
"""

import math
import time

import numpy as np
import pytest

import scenes
from bruteforce import exhaustive_grid
from conftest import record_criterion, segment
from cascadesearch.cascade import CascadeConfig, run_cascade
from cascadesearch.cbo import (AccuracyTarget, DetectorProfile, SearchGrid, search, sweep_pair)
from cascadesearch.evalkit import EvalConfig, factor_analysis, fp_fn_rates, windowed_accuracy
from cascadesearch.frames import generate_synthetic
from cascadesearch.oracle import Oracle, OracleSpec, split_train_eval
from cascadesearch.specialized import ArchSpec, arch_grid, backward, init_model, loss

pytestmark = pytest.mark.acceptance


def held_out(video, labels, split):
    return segment(video, labels, range(split.eval.stop, len(video)))


def test_criterion_1_oracle_equivalence(golden_clip):
    video, labels = golden_clip
    t0 = time.perf_counter()
    pred, stats = run_cascade(CascadeConfig(), video, Oracle(OracleSpec(), labels))
    elapsed = time.perf_counter() - t0
    fp, fn, _ = fp_fn_rates(pred, labels)
    acc = windowed_accuracy(pred, labels)
    ok = (len(video) == 50_000 and np.array_equal(pred, labels) and acc == 1.0 and fp == fn == 0
          and stats.frames_oracle == len(video) and elapsed < 30)
    record_criterion(1, ok, f"bit-exact={np.array_equal(pred, labels)} accuracy={acc} fp={fp} fn={fn} "
                            f"frames={len(video)} time={elapsed:.2f}s")
    assert ok


def _instance(rng, n, quantized):
    t_skip = int(rng.choice([1, 1, 2, 5, 15]))
    labels = rng.random(n) < rng.uniform(0.02, 0.5)
    checked = np.arange(0, n, t_skip)
    k = len(checked)
    if quantized:
        scores = rng.integers(0, 21, k).astype(float)
        conf = rng.integers(0, 17, k) / 16.0
    else:
        scores = rng.exponential(5.0, k)
        conf = rng.random(k)
    if rng.random() < 0.3:
        scores[rng.random(k) < 0.1] = np.inf  # checks with no anchor always fire
    inherited = np.zeros(k, bool) if rng.random() < 0.5 else rng.random(k) < 0.3
    prof = DetectorProfile.from_arrays(scores, labels[checked], inherited, t_skip, frame_labels=labels)
    targets = AccuracyTarget(float(rng.choice([0.0, 0.005, 0.01, 0.05, 0.2])),
                             float(rng.choice([0.0, 0.005, 0.01, 0.05, 0.2])))
    timing = tuple(float(x) for x in rng.choice([1e-5, 1e-4, 1e-3, 1e-2, 1.0], 3))
    return prof, labels, conf, targets, timing


def test_criterion_2_sweep_optimality():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    total = mismatched = feasible = 0
    for trial in range(260):
        quantized = trial >= 30
        n = int(rng.integers(1, 41)) if not quantized else int(np.exp(rng.uniform(0, math.log(1000))))
        prof, labels, conf, targets, timing = _instance(rng, n, quantized)
        got = sweep_pair(prof, conf, targets, timing)
        want = exhaustive_grid(labels, prof.checked, prof.scores, prof.inherited, conf, targets, timing)
        total += 1
        if want is None:
            mismatched += got.feasible
            continue
        feasible += 1
        key, fp, fn, fired, unc = want
        same = (got.feasible and got.exact == key[0] and got.delta_diff == key[2]
                and got.c_low == -key[3] and got.c_high == key[4] and (got.fp, got.fn) == (fp, fn))
        mismatched += not same
    elapsed = time.perf_counter() - t0
    ok = feasible >= 100 and mismatched == 0 and elapsed < 120
    record_criterion(2, ok, f"instances={total} feasible={feasible} mismatches={mismatched} "
                            f"time={elapsed:.1f}s")
    assert ok


def test_criterion_3_target_compliance(golden_clip, golden_split, golden_search):
    video, labels = golden_clip
    res = golden_search
    t0 = time.perf_counter()
    hv, hl = held_out(video, labels, golden_split)
    pred, stats = run_cascade(res.config, hv, Oracle(res.config.oracle, hl))
    fp, fn, _ = fp_fn_rates(pred, hl)
    elapsed = res.elapsed + time.perf_counter() - t0
    ok = res.feasible and fp <= 0.015 and fn <= 0.015 and elapsed < 300
    record_criterion(3, ok, f"held-out frames={len(hl)} fp={fp:.4%} fn={fn:.4%} (limit 1.5%) "
                            f"chosen={res.detector_name}/{res.arch_key} time={elapsed:.1f}s")
    assert ok


def test_criterion_4_cost_model_fidelity():
    # detector-free grid: on these scenes a detector lets the cascade skip the
    # oracle entirely, leaving nothing but loop overhead to time
    t0 = time.perf_counter()
    video, labels = generate_synthetic(scenes.DIM)
    split = split_train_eval(len(video), (0.4, 0.05, 0.3))
    spec = OracleSpec(kind="stub-delay", simulated_latency=0.010, t_full_nn=0.010)
    res = search(video, labels, split, scenes.TARGETS, None, SearchGrid(modes=()), oracle_spec=spec)
    hv, hl = held_out(video, labels, split)
    _, stats = run_cascade(res.config, hv, Oracle(spec, hl))
    measured = stats.wall_time["total"] / stats.frames_total
    modeled = res.expected_cost
    rel = abs(modeled - measured) / measured
    elapsed = time.perf_counter() - t0
    ok = rel <= 0.20 and stats.frames_oracle > 0 and elapsed < 120
    record_criterion(4, ok, f"modeled={modeled * 1e3:.3f}ms measured={measured * 1e3:.3f}ms/frame "
                            f"rel.err={rel:.1%} oracle frames={stats.frames_oracle}/{stats.frames_total} "
                            f"time={elapsed:.1f}s")
    assert ok


def test_criterion_5_oracle_reduction(golden_clip, golden_split, golden_search):
    video, labels = golden_clip
    res = golden_search
    timing = scenes.TIMING
    ratio = min(timing.t_full / t for t in timing.t_specialized.values())
    prevalence = float(labels.mean())
    hv, hl = held_out(video, labels, golden_split)
    pred, stats = run_cascade(res.config, hv, Oracle(res.config.oracle, hl))
    fp, fn, _ = fp_fn_rates(pred, hl)
    frac = stats.frames_oracle / stats.frames_total
    ok = ratio >= 100 and prevalence <= 0.20 and frac <= 0.10 and fp <= 0.015 and fn <= 0.015
    record_criterion(5, ok, f"T_full/T_spec={ratio:.0f} prevalence={prevalence:.3f} "
                            f"oracle fraction={frac:.4f} fp={fp:.4%} fn={fn:.4%} time={res.elapsed:.1f}s")
    assert ok


def _fd_rel_error(model, x, y, h=1e-5):
    worst = 0.0
    for p, g in zip(model.params, backward(model, x, y)):
        for k in np.ndindex(p.shape):
            old = p[k]
            p[k] = old + h
            up = loss(model, x, y)
            p[k] = old - h
            dn = loss(model, x, y)
            p[k] = old
            num = (up - dn) / (2 * h)
            worst = max(worst, abs(num - g[k]) / max(1e-6, abs(num) + abs(g[k])))
    return worst


def test_criterion_6_gradient_correctness():
    rng = np.random.default_rng(6)
    t0 = time.perf_counter()
    archs = arch_grid(3, 3, 1, widths=(4, 8, 16), penultimate=(4, 8))
    worst = 0.0
    for trial in range(20):
        base = archs[trial % len(archs)]
        arch = ArchSpec(int(rng.integers(2, 5)), int(rng.integers(2, 5)), int(rng.choice([1, 3])),
                        base.hidden_layers, base.hidden_width, base.penultimate_width)
        m = init_model(arch, trial)
        for b in m.biases:
            b += rng.normal(0, 0.1, b.shape)
        x = rng.uniform(-1, 1, (int(rng.integers(1, 12)), arch.input_size))
        y = rng.random(len(x)) < 0.5
        worst = max(worst, _fd_rel_error(m, x, y))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-4 and elapsed < 60
    record_criterion(6, ok, f"20 random models, max relative error={worst:.2e} time={elapsed:.1f}s")
    assert ok


def test_criterion_7_metric_conformance():
    t0 = time.perf_counter()
    ref = np.zeros(30, bool)
    cases = []
    for wrong, expect in ((0, 1.0), (2, 1.0), (3, 0.0), (30, 0.0)):
        pred = ref.copy()
        pred[:wrong] = True
        cases.append(windowed_accuracy(pred, ref) == expect)
    ref90 = np.zeros(90, bool)
    pred90 = ref90.copy()
    pred90[30:32] = True
    pred90[60:70] = True
    cases.append(windowed_accuracy(pred90, ref90) == pytest.approx(2 / 3))
    cases.append(windowed_accuracy(pred90, ref90, EvalConfig(30, 20)) == 1.0)
    elapsed = time.perf_counter() - t0
    ok = all(cases) and elapsed < 1
    record_criterion(7, ok, f"{sum(cases)}/{len(cases)} crafted streams match time={elapsed * 1e3:.1f}ms")
    assert ok


def test_criterion_8_factor_structure(golden_clip, golden_split, golden_search):
    video, labels = golden_clip
    t0 = time.perf_counter()
    hv, hl = held_out(video, labels, golden_split)
    report = factor_analysis(hv, hl, golden_search.config, scenes.TIMING, t_skip=15)
    n = len(hl)
    rows = report.rows
    checks_ok = rows[0]["checks"] == n and rows[1]["checks"] == math.ceil(n / 15)
    calls = [r["oracle_calls"] for r in rows]
    nested = all(a >= b for a, b in zip(calls, calls[1:]))
    elapsed = time.perf_counter() - t0
    ok = checks_ok and nested and elapsed < 120
    record_criterion(8, ok, f"checks {rows[0]['checks']} -> {rows[1]['checks']} (ceil(N/15)={math.ceil(n / 15)}) "
                            f"oracle calls per stage={calls} time={elapsed:.1f}s")
    assert ok


def test_criterion_9_non_transferability():
    t0 = time.perf_counter()
    found = {}
    for name, spec in (("A", scenes.SCENE_A), ("B", scenes.SCENE_B)):
        video, labels = generate_synthetic(spec)
        split = split_train_eval(len(video), scenes.SPLIT)
        res = search(video, labels, split, scenes.TARGETS, scenes.TIMING)
        found[name] = (held_out(video, labels, split), res)

    def rates(cfg, scene):
        (hv, hl), _ = found[scene]
        pred, _ = run_cascade(cfg, hv, Oracle(cfg.oracle, hl))
        return fp_fn_rates(pred, hl)[:2]

    cfg_a, cfg_b = found["A"][1].config, found["B"][1].config
    d_a = cfg_a.detector.delta_diff if cfg_a.detector else None
    d_b = cfg_b.detector.delta_diff if cfg_b.detector else None
    a_on_b = rates(cfg_a, "B")
    b_on_b = rates(cfg_b, "B")
    elapsed = time.perf_counter() - t0
    ok = (d_a != d_b and max(a_on_b) > 0.01 and max(b_on_b) <= 0.01 and elapsed < 300)
    record_criterion(9, ok, f"delta A={d_a:.4g} B={d_b:.4g}; A's config on B fp={a_on_b[0]:.2%} "
                            f"fn={a_on_b[1]:.2%}; B's own fp={b_on_b[0]:.2%} fn={b_on_b[1]:.2%} "
                            f"time={elapsed:.1f}s")
    assert ok
