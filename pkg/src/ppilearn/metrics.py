"""Evaluation metrics for multi-label pair classification.

All scores pool true/false positive/negative counts over the pair-by-type
cells (the micro convention). The degenerate case of no positive labels and
no positive predictions scores 1 by convention and is flagged where it can
occur per type or subset.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import INTERACTION_TYPES

SUBSET_ORDER = ("BS", "ES", "NS")


def _binary_counts(pred: np.ndarray, truth: np.ndarray) -> tuple:
    tp = int(np.sum((pred == 1) & (truth == 1)))
    fp = int(np.sum((pred == 1) & (truth == 0)))
    fn = int(np.sum((pred == 0) & (truth == 1)))
    return tp, fp, fn


def micro_f1(pred: np.ndarray, truth: np.ndarray) -> float:
    """2 TP / (2 TP + FP + FN), counted over every pair-type cell."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    tp, fp, fn = _binary_counts(pred, truth)
    if tp + fp + fn == 0:
        return 1.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


def per_type_metrics(pred: np.ndarray, truth: np.ndarray) -> list:
    """Accuracy and binary F1 per interaction type column.

    A column with neither positive labels nor positive predictions gets
    f1 = 1 and is flagged as degenerate.
    """
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    rows = []
    for c, name in enumerate(INTERACTION_TYPES):
        accuracy = float(np.mean(pred[:, c] == truth[:, c])) if len(pred) else 1.0
        tp, fp, fn = _binary_counts(pred[:, c], truth[:, c])
        degenerate = tp + fp + fn == 0
        f1 = 1.0 if degenerate else 2.0 * tp / (2.0 * tp + fp + fn)
        rows.append({
            "type": name,
            "accuracy": accuracy,
            "f1": f1,
            "degenerate": degenerate,
        })
    return rows


def pr_curve(probabilities: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Micro-averaged precision/recall points over all pair-type cells.

    Thresholds sweep the distinct probability values in descending order;
    at each threshold a cell is predicted positive when its probability is
    >= the threshold. Returns rows of (threshold, precision, recall); recall
    is non-decreasing along the sweep. With no positive labels at all,
    recall is 1 by convention.
    """
    prob = np.asarray(probabilities, dtype=np.float64).ravel()
    y = np.asarray(truth).ravel()
    if prob.shape != y.shape:
        raise ValueError(f"shape mismatch: {prob.shape} vs {y.shape}")
    if np.any(prob < 0) or np.any(prob > 1):
        raise ValueError("probabilities must lie in [0, 1]")
    order = np.argsort(-prob, kind="stable")
    prob_sorted = prob[order]
    y_sorted = y[order]
    cum_tp = np.cumsum(y_sorted)
    n_pos = int(y.sum())
    # last occurrence of each distinct value in the descending order
    boundary = np.flatnonzero(np.diff(prob_sorted) != 0)
    last = np.concatenate([boundary, [len(prob_sorted) - 1]])
    points = []
    for idx in last:
        n_pred = idx + 1
        tp = int(cum_tp[idx])
        precision = tp / n_pred
        recall = tp / n_pos if n_pos else 1.0
        points.append((prob_sorted[idx], precision, recall))
    return np.array(points, dtype=np.float64)


def subset_report(pred: np.ndarray, truth: np.ndarray, tags) -> dict:
    """Micro-F1 restricted to each BS/ES/NS tag class, with class fractions.

    Classes absent from ``tags`` are reported with ``present = False`` and no
    score.
    """
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    tags = np.asarray(list(tags))
    if len(tags) != len(pred):
        raise ValueError(f"{len(tags)} tags for {len(pred)} pairs")
    report = {}
    total = len(tags)
    for tag in SUBSET_ORDER:
        mask = tags == tag
        count = int(mask.sum())
        entry = {
            "present": count > 0,
            "count": count,
            "fraction": count / total if total else 0.0,
        }
        if count:
            entry["micro_f1"] = micro_f1(pred[mask], truth[mask])
        report[tag] = entry
    return report


@dataclass
class MetricsReport:
    """Bundle of the evaluation outputs for one pair set."""

    micro_f1: float
    per_type: list
    pr_points: np.ndarray
    subsets: dict | None = None
    weighted_subset_f1: float | None = field(default=None)

    def to_dict(self) -> dict:
        return {
            "micro_f1": self.micro_f1,
            "per_type": self.per_type,
            "pr_curve": [
                {"threshold": t, "precision": p, "recall": r}
                for t, p, r in self.pr_points
            ],
            "subsets": self.subsets,
            "weighted_subset_f1": self.weighted_subset_f1,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)


def compute_report(probabilities: np.ndarray, pred: np.ndarray,
                   truth: np.ndarray, tags=None) -> MetricsReport:
    """Assemble the full report; subset scores included when tags are given."""
    subsets = None
    weighted = None
    if tags is not None:
        subsets = subset_report(pred, truth, tags)
        scored = [(e["fraction"], e["micro_f1"]) for e in subsets.values()
                  if e["present"]]
        total_frac = sum(f for f, _ in scored)
        if total_frac > 0:
            weighted = sum(f * s for f, s in scored) / total_frac
    return MetricsReport(
        micro_f1=micro_f1(pred, truth),
        per_type=per_type_metrics(pred, truth),
        pr_points=pr_curve(probabilities, truth),
        subsets=subsets,
        weighted_subset_f1=weighted,
    )
