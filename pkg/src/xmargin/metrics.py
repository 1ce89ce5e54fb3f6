"""Evaluation metrics: confusion counts, (conditional) accuracy,
precision/recall with explicit undefined markers, rank-based AUC, an
ensemble bias estimator, and the conditional risk of a prediction under
label uncertainty."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .loss_core import LossParams, loss_and_grad


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(preds, truth) -> ConfusionCounts:
    """Counts with the default class (label 1) as the positive class."""
    preds = np.asarray(preds)
    truth = np.asarray(truth)
    if preds.shape != truth.shape or preds.size == 0:
        raise ValueError("preds and truth must be equal-length and non-empty")
    return ConfusionCounts(
        tp=int(np.sum((preds == 1) & (truth == 1))),
        fp=int(np.sum((preds == 1) & (truth == 0))),
        tn=int(np.sum((preds == 0) & (truth == 0))),
        fn=int(np.sum((preds == 0) & (truth == 1))),
    )


def accuracy(preds, truth) -> float:
    c = confusion(preds, truth)
    return (c.tp + c.tn) / c.total


def conditional_accuracy(preds, truth, on_class: int) -> float:
    """Accuracy restricted to instances whose true label is ``on_class``."""
    if on_class not in (0, 1):
        raise ValueError("on_class must be 0 or 1")
    preds = np.asarray(preds)
    truth = np.asarray(truth)
    mask = truth == on_class
    if not mask.any():
        raise ValueError(f"undefined conditional accuracy: no instances of class {on_class}")
    return float(np.mean(preds[mask] == on_class))


def precision_recall(counts: ConfusionCounts) -> tuple[float | None, float | None]:
    """(precision, recall); ``None`` marks an undefined ratio rather than a
    silent zero."""
    precision = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp > 0 else None
    recall = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn > 0 else None
    return precision, recall


def auc_brute(scores_pos, scores_neg) -> float:
    """All-pairs AUC definition; ties count one half. Quadratic, used as the
    oracle for the rank-based implementation."""
    scores_pos = np.asarray(scores_pos, dtype=float)
    scores_neg = np.asarray(scores_neg, dtype=float)
    if scores_pos.size == 0 or scores_neg.size == 0:
        raise ValueError("both classes must be non-empty")
    wins = 0.0
    for p in scores_pos:
        wins += np.sum(p > scores_neg) + 0.5 * np.sum(p == scores_neg)
    return float(wins / (scores_pos.size * scores_neg.size))


def auc(scores_pos, scores_neg) -> float:
    """Rank-statistic AUC (Mann-Whitney U with midranks for ties),
    equal to the all-pairs definition exactly."""
    scores_pos = np.asarray(scores_pos, dtype=float)
    scores_neg = np.asarray(scores_neg, dtype=float)
    if scores_pos.size == 0 or scores_neg.size == 0:
        raise ValueError("both classes must be non-empty")
    m, n = scores_pos.size, scores_neg.size
    combined = np.concatenate([scores_pos, scores_neg])
    order = np.argsort(combined, kind="mergesort")
    ranks = np.empty(m + n)
    sorted_vals = combined[order]
    i = 0
    while i < m + n:
        j = i
        while j + 1 < m + n and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # midrank, 1-based
        i = j + 1
    rank_sum_pos = ranks[:m].sum()
    u = rank_sum_pos - m * (m + 1) / 2.0
    return float(u / (m * n))


@dataclass(frozen=True)
class LabelConfidence:
    """Distribution over the true label of one instance."""

    p0: float
    p1: float

    def __post_init__(self):
        if self.p0 < 0 or self.p1 < 0 or abs(self.p0 + self.p1 - 1.0) > 1e-12:
            raise ValueError(f"confidence must be a distribution, got ({self.p0}, {self.p1})")


@dataclass(frozen=True)
class BiasReport:
    mean_predictions: np.ndarray  # per-instance ensemble-mean probability
    bias: float                   # mean squared deviation of the mean from the target
    ensemble_size: int


def bias_estimate(ensemble_preds, truth) -> BiasReport:
    """Squared deviation of the ensemble-expected prediction from the target,
    averaged over the evaluation set.

    ``ensemble_preds`` is (models x instances); order of models is irrelevant.
    """
    preds = np.asarray(ensemble_preds, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if preds.ndim != 2 or preds.shape[0] < 2:
        raise ValueError("ensemble must contain at least 2 models")
    if preds.shape[1] != truth.size:
        raise ValueError("evaluation sets differ between ensemble and truth")
    mean_preds = preds.mean(axis=0)
    bias = float(np.mean((mean_preds - truth) ** 2))
    return BiasReport(mean_predictions=mean_preds, bias=bias,
                      ensemble_size=preds.shape[0])


def conditional_risk(y: float, confidence: LabelConfidence,
                     params: LossParams) -> float:
    """Expected loss of predicting probability ``y`` under uncertainty about
    the true label: p0 * L(y, 0) + p1 * L(y, 1)."""
    l0, _ = loss_and_grad(y, 0, params)
    l1, _ = loss_and_grad(y, 1, params)
    return confidence.p0 * l0 + confidence.p1 * l1
