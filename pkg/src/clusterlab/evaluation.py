"""Pairwise Rand accuracy and cross-dataset aggregation.

Accuracy is scored over unordered distinct point pairs: the fraction on
which ground truth and prediction agree about co-membership. This is
label-permutation invariant on both sides. Noise pixels never enter:
only genuine points carry labels, so the exclusion is structural.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .baselines.common import ClusteringResult
from .stimuli import Stimulus


@dataclass
class EvalRecord:
    stimulus_id: int
    method: str
    accuracy: float
    n: int
    noise_excluded: int = 0
    runtime: float = 0.0


def _pair_count(counts: np.ndarray) -> float:
    c = counts.astype(np.float64)
    return float((c * (c - 1.0)).sum() / 2.0)


def pairwise_rand_accuracy(gt, pred) -> float:
    """Fraction of point pairs whose co-membership the two labelings agree on."""
    gt = np.asarray(gt)
    pred = np.asarray(pred)
    if gt.shape != pred.shape or gt.ndim != 1:
        raise ValueError(f"label shape mismatch: {gt.shape} vs {pred.shape}")
    n = len(gt)
    if n < 2:
        raise ValueError("need at least 2 points to form a pair")

    _, gi = np.unique(gt, return_inverse=True)
    _, pi = np.unique(pred, return_inverse=True)
    kg, kp = gi.max() + 1, pi.max() + 1
    contingency = np.zeros((kg, kp), dtype=np.int64)
    np.add.at(contingency, (gi, pi), 1)

    pairs = n * (n - 1) / 2.0
    both_same = _pair_count(contingency.ravel())
    gt_same = _pair_count(contingency.sum(axis=1))
    pred_same = _pair_count(contingency.sum(axis=0))
    both_diff = pairs - gt_same - pred_same + both_same
    return (both_same + both_diff) / pairs


def comembership_hamming_accuracy(gt, pred) -> float:
    """Independent route: off-diagonal agreement of co-membership matrices."""
    gt = np.asarray(gt)
    pred = np.asarray(pred)
    n = len(gt)
    same_gt = gt[:, None] == gt[None, :]
    same_pred = pred[:, None] == pred[None, :]
    agree = same_gt == same_pred
    off_diag = int(agree.sum()) - n
    return off_diag / float(n * (n - 1))


def evaluate_stimulus(stimulus: Stimulus, result: ClusteringResult,
                      stimulus_id: int = 0) -> EvalRecord:
    gt = stimulus.point_set.labels
    if len(result.labels) != len(gt):
        raise ValueError(
            f"result covers {len(result.labels)} points, stimulus has {len(gt)}"
        )
    return EvalRecord(
        stimulus_id=stimulus_id,
        method=result.method,
        accuracy=pairwise_rand_accuracy(gt, result.labels),
        n=len(gt),
        noise_excluded=len(stimulus.noise_pixels),
        runtime=result.runtime,
    )


def aggregate(records) -> dict:
    """Per-method (mean, population standard deviation) of accuracy."""
    records = list(records)
    if not records:
        raise ValueError("no records to aggregate")
    by_method = {}
    for rec in records:
        by_method.setdefault(rec.method, []).append(rec.accuracy)
    return {
        method: (float(np.mean(vals)), float(np.std(vals)))
        for method, vals in by_method.items()
    }


def records_to_csv(records) -> str:
    lines = ["stimulus_id,method,n,accuracy,runtime"]
    for r in records:
        lines.append(
            "%d,%s,%d,%.17g,%.17g" % (r.stimulus_id, r.method, r.n, r.accuracy, r.runtime)
        )
    return "\n".join(lines) + "\n"


def summary_to_csv(summary: dict, method_order=None) -> str:
    lines = ["method,mean,std"]
    names = method_order if method_order is not None else sorted(summary)
    for name in names:
        if name in summary:
            mean, std = summary[name]
            lines.append("%s,%.17g,%.17g" % (name, mean, std))
    return "\n".join(lines) + "\n"
