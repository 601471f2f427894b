"""Evaluation suite for stochastic motion prediction.

Diversity (APD), accuracy of the best sample (ADE/FDE), multimodal variants
against grouped ground truth (MMADE/MMFDE), diversity calibration (APDE),
and a global plausibility score (CMD) comparing per-frame displacement
statistics of the predictions against dataset reference statistics.
All functions are pure and operate on plain numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

__all__ = [
    "EvalRecord",
    "MultimodalGroundTruth",
    "apd",
    "ade",
    "fde",
    "build_multimodal_gt",
    "mmade",
    "mmfde",
    "apde",
    "displacement_profile",
    "cmd",
    "zero_velocity_baseline",
    "evaluate",
]


def _flat(samples):
    s = np.asarray(samples, dtype=np.float64)
    return s.reshape(s.shape[0], -1)


def apd(samples):
    """Mean pairwise L2 distance between whole flattened samples; 0 for S<2."""
    s = _flat(samples)
    n = s.shape[0]
    if n < 2:
        return 0.0
    total = 0.0
    for i in range(n):
        total += np.linalg.norm(s[i + 1 :] - s[i], axis=1).sum()
    return float(2.0 * total / (n * (n - 1)))


def _frame_dists(samples, gt):
    """Per-sample per-frame pose distances [S x F]."""
    s = np.asarray(samples, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    if s.shape[1:] != g.shape:
        raise ValueError(f"sample shape {s.shape[1:]} != groundtruth shape {g.shape}")
    diff = s - g[None]
    return np.linalg.norm(diff.reshape(s.shape[0], s.shape[1], -1), axis=2)


def ade(samples, gt):
    """Frame-averaged distance of the closest sample to the groundtruth."""
    return float(_frame_dists(samples, gt).mean(axis=1).min())


def fde(samples, gt):
    """Last-frame distance of the closest sample to the groundtruth."""
    return float(_frame_dists(samples, gt)[:, -1].min())


@dataclass(frozen=True)
class MultimodalGroundTruth:
    """For each test history, indices of futures whose last observed pose
    lies within delta of that history's last observed pose."""

    groups: tuple  # tuple of index tuples, aligned with the test histories
    delta: float

    def futures_for(self, i, futures):
        return [futures[j] for j in self.groups[i]]


def build_multimodal_gt(histories, delta):
    """Group test items by L2 proximity of their last observed poses."""
    if delta <= 0:
        raise ValueError("grouping threshold delta must be positive")
    last = np.stack([np.asarray(h, dtype=np.float64)[-1].reshape(-1) for h in histories])
    groups = []
    for i in range(last.shape[0]):
        d = np.linalg.norm(last - last[i], axis=1)
        groups.append(tuple(int(j) for j in np.flatnonzero(d <= delta)))
    return MultimodalGroundTruth(groups=tuple(groups), delta=delta)


def mmade(samples, group_futures):
    """Mean ADE of the sample set against every future in the group."""
    if not len(group_futures):
        raise ValueError("multimodal group is empty")
    return float(np.mean([ade(samples, g) for g in group_futures]))


def mmfde(samples, group_futures):
    if not len(group_futures):
        raise ValueError("multimodal group is empty")
    return float(np.mean([fde(samples, g) for g in group_futures]))


def apde(sample_sets, mmgt, futures):
    """Mean |APD(group futures) - APD(samples)| over histories."""
    errs = []
    for i, samples in enumerate(sample_sets):
        group = mmgt.futures_for(i, futures)
        errs.append(abs(apd(group) - apd(samples)))
    return float(np.mean(errs))


def displacement_profile(futures):
    """Mean frame-to-frame pose displacement over a set of futures: [F-1]."""
    arr = np.asarray(futures, dtype=np.float64)
    step = arr[:, 1:] - arr[:, :-1]
    return np.linalg.norm(step.reshape(step.shape[0], step.shape[1], -1), axis=2).mean(axis=0)


def cmd(sample_sets, reference_profile):
    """Area between cumulative displacement curves of predictions and reference.

    reference_profile holds the dataset-average displacement for frame gaps
    1..F-1; the predicted profile averages over all histories and samples.
    Weighted sum_{f} (F - f) * |pred(f) - ref(f)| is the discrete area.
    """
    ref = np.asarray(reference_profile, dtype=np.float64)
    stacked = np.concatenate([np.asarray(s, dtype=np.float64) for s in sample_sets])
    pred = displacement_profile(stacked)
    if pred.shape != ref.shape:
        raise ValueError(
            f"reference profile has {ref.shape[0]} gaps, predictions have {pred.shape[0]}"
        )
    F = ref.shape[0] + 1
    weights = F - np.arange(1, F)
    return float(np.sum(weights * np.abs(pred - ref)))


def zero_velocity_baseline(x, future_len, count=1):
    """Predictions frozen at the last observed pose; zero diversity by design."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] < 1:
        raise ValueError("history must contain at least one frame")
    one = np.broadcast_to(x[-1], (future_len,) + x.shape[1:])
    return np.broadcast_to(one, (count,) + one.shape).copy()


@dataclass(frozen=True)
class EvalRecord:
    """Dataset-level aggregates: unweighted means over test histories."""

    apd: float
    apde: float
    ade: float
    fde: float
    mmade: float
    mmfde: float
    cmd: float

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def evaluate(histories, futures, sample_sets, reference_profile, delta):
    """Full metric table plus per-history rows.

    Returns (EvalRecord, per_history) where per_history is a list of dicts
    with the per-item metric values (CMD stays dataset-level).
    """
    if not (len(histories) == len(futures) == len(sample_sets)):
        raise ValueError("histories, futures, and sample sets must align")
    mmgt = build_multimodal_gt(histories, delta)
    rows = []
    for i, samples in enumerate(sample_sets):
        group = mmgt.futures_for(i, futures)
        rows.append(
            {
                "index": i,
                "apd": apd(samples),
                "ade": ade(samples, futures[i]),
                "fde": fde(samples, futures[i]),
                "mmade": mmade(samples, group),
                "mmfde": mmfde(samples, group),
                "apde": abs(apd(group) - apd(samples)),
            }
        )
    record = EvalRecord(
        apd=float(np.mean([r["apd"] for r in rows])),
        apde=float(np.mean([r["apde"] for r in rows])),
        ade=float(np.mean([r["ade"] for r in rows])),
        fde=float(np.mean([r["fde"] for r in rows])),
        mmade=float(np.mean([r["mmade"] for r in rows])),
        mmfde=float(np.mean([r["mmfde"] for r in rows])),
        cmd=cmd(sample_sets, reference_profile),
    )
    return record, rows
