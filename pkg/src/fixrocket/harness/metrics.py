"""Confusion-matrix metrics with PD as the positive class.

uF1 averages the two per-class F1 scores with equal weight, which is the
comparison metric throughout because the evaluation splits are imbalanced.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision_pd: float
    recall_pd: float
    f1_pd: float
    precision_hc: float
    recall_hc: float
    f1_hc: float
    uf1: float
    tp: int  # true PD predicted PD
    fp: int  # true HC predicted PD
    fn: int  # true PD predicted HC
    tn: int  # true HC predicted HC
    flags: tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def _f1(precision: float, recall: float) -> float:
    return _safe_div(2.0 * precision * recall, precision + recall)


def compute_metrics(predictions: np.ndarray, labels: np.ndarray) -> Metrics:
    """Standard confusion-based metrics for +/-1 predictions and labels.

    A class absent from both predictions and labels contributes F1 = 0 and is
    flagged rather than treated as an error.
    """
    pred = np.asarray(predictions, dtype=np.float64)
    lab = np.asarray(labels, dtype=np.float64)
    if pred.shape != lab.shape or pred.ndim != 1 or pred.size == 0:
        raise ShapeError("predictions and labels must be equal-length 1-D, n >= 1")

    tp = int(np.sum((pred > 0) & (lab > 0)))
    fp = int(np.sum((pred > 0) & (lab <= 0)))
    fn = int(np.sum((pred <= 0) & (lab > 0)))
    tn = int(np.sum((pred <= 0) & (lab <= 0)))

    accuracy = (tp + tn) / pred.size
    precision_pd = _safe_div(tp, tp + fp)
    recall_pd = _safe_div(tp, tp + fn)
    precision_hc = _safe_div(tn, tn + fn)
    recall_hc = _safe_div(tn, tn + fp)
    f1_pd = _f1(precision_pd, recall_pd)
    f1_hc = _f1(precision_hc, recall_hc)

    flags = []
    if tp + fn == 0 and tp + fp == 0:
        flags.append("class PD absent from labels and predictions")
    if tn + fp == 0 and tn + fn == 0:
        flags.append("class HC absent from labels and predictions")

    return Metrics(
        accuracy=accuracy,
        precision_pd=precision_pd,
        recall_pd=recall_pd,
        f1_pd=f1_pd,
        precision_hc=precision_hc,
        recall_hc=recall_hc,
        f1_hc=f1_hc,
        uf1=0.5 * (f1_pd + f1_hc),
        tp=tp, fp=fp, fn=fn, tn=tn,
        flags=tuple(flags),
    )


def majority_baseline_uf1(majority_fraction: float) -> float:
    """uF1 of a predictor that always emits the majority class.

    The majority class gets precision p and recall 1, so F1 = 2p / (1 + p);
    the minority class gets F1 = 0.
    """
    p = majority_fraction
    return (2.0 * p / (1.0 + p)) / 2.0
