"""Evaluation metrics over minority-class scores.

Threshold metrics (precision, recall, F-beta, g-mean) work from a confusion
table at a fixed probability cutoff; curve metrics (ROC-AUC, PR-AUC) sweep
all distinct score thresholds. Positive class = minority = label 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class EvalScores:
    f1: float
    g_mean: float
    pr_auc: float
    roc_auc: float
    precision: float
    recall: float

    def __post_init__(self):
        for name, value in self.to_dict().items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} = {value} outside [0, 1]")

    def to_dict(self) -> dict[str, float]:
        return {
            "f1": self.f1,
            "g_mean": self.g_mean,
            "pr_auc": self.pr_auc,
            "roc_auc": self.roc_auc,
            "precision": self.precision,
            "recall": self.recall,
        }

METRIC_NAMES = ("f1", "g_mean", "pr_auc", "roc_auc", "precision", "recall")


def confusion_at_threshold(scores, labels, threshold: float = 0.5) -> ConfusionCounts:
    """Confusion table with score >= threshold predicted positive."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have the same length")
    pred = scores >= threshold
    pos = labels == 1
    return ConfusionCounts(
        tp=int(np.sum(pred & pos)),
        fp=int(np.sum(pred & ~pos)),
        tn=int(np.sum(~pred & ~pos)),
        fn=int(np.sum(~pred & pos)),
    )


def precision(c: ConfusionCounts) -> float:
    return c.tp / (c.tp + c.fp) if c.tp + c.fp > 0 else 0.0


def recall(c: ConfusionCounts) -> float:
    return c.tp / (c.tp + c.fn) if c.tp + c.fn > 0 else 0.0


def f_beta(c: ConfusionCounts, beta: float = 1.0) -> float:
    """(1+b^2)PR / (b^2 P + R); 0 whenever TP = 0 (degenerate P or R)."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    if c.tp == 0:
        return 0.0
    p = precision(c)
    r = recall(c)
    b2 = beta * beta
    return (1 + b2) * p * r / (b2 * p + r)


def g_mean(c: ConfusionCounts) -> float:
    """Geometric mean of recall and true-negative rate; 0 on empty classes."""
    if c.tp + c.fn == 0 or c.tn + c.fp == 0:
        return 0.0
    tpr = c.tp / (c.tp + c.fn)
    tnr = c.tn / (c.tn + c.fp)
    return math.sqrt(tpr * tnr)


def _grouped_counts(scores: np.ndarray, labels: np.ndarray):
    """Per distinct score, descending: (positives, negatives) at that score."""
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    boundaries = np.flatnonzero(np.diff(s)) + 1
    groups = []
    start = 0
    for end in list(boundaries) + [len(s)]:
        chunk = y[start:end]
        groups.append((int(np.sum(chunk == 1)), int(np.sum(chunk == 0))))
        start = end
    return groups


def roc_auc(scores, labels) -> float:
    """Trapezoidal area under the ROC curve over distinct-score thresholds.

    Computed in integer arithmetic as the pairwise-ranking probability with
    ties worth 1/2, which the trapezoid over tied groups reduces to exactly:
    2*area*P*N = sum over groups of fp_g * (2*cum_tp_before + tp_g).
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have the same length")
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs both classes present")
    area2 = 0
    cum_tp = 0
    for tp_g, fp_g in _grouped_counts(scores, labels):
        area2 += fp_g * (2 * cum_tp + tp_g)
        cum_tp += tp_g
    return area2 / (2 * n_pos * n_neg)


def pr_auc(scores, labels) -> float:
    """Trapezoidal area under the precision-recall curve.

    One point per distinct score in descending order, anchored at recall 0
    with the first point's precision; area = sum of dR * (P_i + P_{i-1}) / 2.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have the same length")
    n_pos = int(np.sum(labels == 1))
    if n_pos == 0:
        raise ValueError("pr_auc needs at least one positive sample")
    cum_tp = 0
    cum_fp = 0
    area = 0.0
    prev_recall = 0.0
    prev_precision = None
    for tp_g, fp_g in _grouped_counts(scores, labels):
        cum_tp += tp_g
        cum_fp += fp_g
        rec = cum_tp / n_pos
        prec = cum_tp / (cum_tp + cum_fp)
        if prev_precision is None:
            prev_precision = prec  # anchor (0, first point's precision)
        area += (rec - prev_recall) * (prec + prev_precision) / 2.0
        prev_recall, prev_precision = rec, prec
    return area


def evaluate_scores(scores, labels, threshold: float = 0.5) -> EvalScores:
    """All six metrics for one scored test partition."""
    c = confusion_at_threshold(scores, labels, threshold)
    return EvalScores(
        f1=f_beta(c, 1.0),
        g_mean=g_mean(c),
        pr_auc=pr_auc(scores, labels),
        roc_auc=roc_auc(scores, labels),
        precision=precision(c),
        recall=recall(c),
    )
