"""Exhaustive reference implementations used as test oracles."""

import numpy as np

from cascadesearch.cbo import confidence_candidates, delta_candidates, exact_cost


def simulate(labels, checked, scores, inherited, conf, delta, c_low, c_high):
    """Emit a label for every frame the way the cascade would, given per-check data.

    Returns (fp, fn, fired, uncertain).
    """
    n = len(labels)
    out = np.zeros(n, dtype=bool)
    fired = unc = 0
    bounds = list(checked) + [n]
    for k, start in enumerate(checked):
        if delta is not None and not scores[k] > delta:
            emit = bool(inherited[k])
        else:
            fired += 1
            if conf[k] < c_low:
                emit = False
            elif conf[k] > c_high:
                emit = True
            else:
                unc += 1
                emit = bool(labels[start])
        out[start:bounds[k + 1]] = emit
    labels = np.asarray(labels, dtype=bool)
    return int(np.sum(out & ~labels)), int(np.sum(~out & labels)), fired, unc


def exhaustive(profile, labels, conf, targets, timing, deltas=None):
    """Minimum over every (delta, c_low, c_high) triple; None when nothing is feasible.

    Returns (key, fp, fn, fired, uncertain) where key orders candidates.
    """
    n = len(labels)
    fp_b, fn_b = targets.budgets(n)
    k = len(profile.checked)
    t_check = timing[0] if profile.content_check else 0.0
    stage = (t_check, timing[1], timing[2])
    if deltas is None:
        deltas = delta_candidates(profile) if profile.content_check else [None]
    values = confidence_candidates(conf)
    best = None
    for d in deltas:
        for lo in values:
            for hi in values:
                if lo > hi:
                    continue
                fp, fn, fired, unc = simulate(labels, profile.checked, profile.scores, profile.inherited,
                                              conf, d, lo, hi)
                if fp > fp_b or fn > fn_b:
                    continue
                key = (exact_cost(n, k, fired, unc, stage), unc, -1.0 if d is None else float(d),
                       -float(lo), float(hi))
                if best is None or key < best[0]:
                    best = (key, fp, fn, fired, unc)
    return best


def exhaustive_grid(labels, checked, scores, inherited, conf, targets, timing, content_check=True):
    """Broadcast enumeration of every (delta, c_low, c_high) for one detector/model pair.

    Shares no code with the sweep beyond the candidate sets. Returns the same
    tuple as :func:`exhaustive`.
    """
    labels = np.asarray(labels, dtype=bool)
    n = len(labels)
    fp_b, fn_b = targets.budgets(n)
    checked = np.asarray(checked)
    ends = np.append(checked[1:], n)
    gpos = np.array([labels[s:e].sum() for s, e in zip(checked, ends)])
    gneg = (ends - checked) - gpos
    ref = labels[checked]
    k = len(checked)
    vals = np.unique(np.concatenate(([0.0, 1.0], conf)))
    low = conf[:, None] < vals[None, :]            # (k, i): negative verdict
    high = conf[:, None] > vals[None, :]           # (k, j): positive verdict
    emit1 = np.where(low[:, :, None], False, np.where(high[:, None, :], True, ref[:, None, None]))
    unc_k = ~low[:, :, None] & ~high[:, None, :]
    valid = vals[:, None] <= vals[None, :]
    stage = (timing[0] if content_check else 0.0, timing[1], timing[2])
    if content_check:
        finite = scores[np.isfinite(scores)]
        deltas = np.unique(np.concatenate(([0.0], finite)))
    else:
        deltas = [None]
    best = None
    for d in deltas:
        fired = np.ones(k, bool) if d is None else scores > d
        s_fp = int(np.sum(gneg[~fired & inherited]))
        s_fn = int(np.sum(gpos[~fired & ~inherited]))
        e = emit1[fired]
        fp = s_fp + np.tensordot(gneg[fired], e, axes=1)
        fn = s_fn + np.tensordot(gpos[fired], ~e, axes=1)
        unc = unc_k[fired].sum(axis=0)
        ok = valid & (fp <= fp_b) & (fn <= fn_b)
        for i, j in zip(*np.nonzero(ok)):
            key = (exact_cost(n, k, int(fired.sum()), int(unc[i, j]), stage), int(unc[i, j]),
                   -1.0 if d is None else float(d), -float(vals[i]), float(vals[j]))
            if best is None or key < best[0]:
                best = (key, int(fp[i, j]), int(fn[i, j]), int(fired.sum()), int(unc[i, j]))
    return best
