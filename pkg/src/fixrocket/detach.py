"""Sequential feature detachment for the linear classifier.

Repeatedly refit the ridge model and deactivate the active features with the
smallest absolute weights, recording validation accuracy along the way; then
pick the step that best trades retained size against relative accuracy and
refit it. Weights are comparable across columns because the features are
normalized before fitting.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO

import numpy as np

from .errors import ConfigError, DegenerateDataError, ShapeError, SplitError
from .ridge import RidgeModel, decision_scores, fit_ridge

TRACE_MAGIC = "#detach-trace v1"
DEFAULT_DROP_PER_STEP = 0.05
DEFAULT_TRADEOFF = 0.1


@dataclass(frozen=True)
class DetachStep:
    """State after one fit: which columns were active and how they scored."""

    retained_fraction: float
    mask: np.ndarray
    val_accuracy: float
    train_accuracy: float

    @property
    def retained_count(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True)
class DetachmentTrace:
    steps: tuple[DetachStep, ...]
    drop_per_step: float
    tradeoff_c: float
    scores: tuple[float, ...]
    selected_index: int

    @property
    def selected(self) -> DetachStep:
        return self.steps[self.selected_index]


def detach_step(model: RidgeModel, drop_fraction: float) -> np.ndarray:
    """Deactivate the ceil(drop_fraction * active) active columns with the
    smallest |weight|; ties drop the lower column index first. Never empties
    the mask: at least one feature survives."""
    if not (0.0 <= drop_fraction <= 1.0):
        raise ConfigError("drop_fraction must lie in [0, 1]")
    active = np.flatnonzero(model.mask)
    if active.size < 2:
        raise DegenerateDataError("need at least 2 active features to detach")
    n_drop = math.ceil(drop_fraction * active.size)
    if n_drop == 0:
        return model.mask.copy()
    if n_drop >= active.size:
        n_drop = active.size - 1  # floor at one surviving feature
    magnitudes = np.abs(model.weights)
    # stable sort on (|w|, column index) makes the tie rule deterministic
    order = np.lexsort((active, magnitudes))
    new_mask = model.mask.copy()
    new_mask[active[order[:n_drop]]] = False
    return new_mask


def _accuracy(model: RidgeModel, X: np.ndarray, y: np.ndarray) -> float:
    d = decision_scores(model, X)
    pred = np.where(d > 0.0, 1.0, -1.0)
    return float(np.mean(pred == y))


def selection_scores(
    steps: tuple[DetachStep, ...], tradeoff_c: float
) -> tuple[float, ...]:
    """score(p) = (1 - c) * acc_val(p) / acc_val(full) + c * (1 - retained(p))."""
    full_acc = steps[0].val_accuracy
    if full_acc <= 0.0:
        raise DegenerateDataError("full-model validation accuracy is zero")
    return tuple(
        (1.0 - tradeoff_c) * (s.val_accuracy / full_acc)
        + tradeoff_c * (1.0 - s.retained_fraction)
        for s in steps
    )


def run_sfd(
    X_train: np.ndarray,
    y_train: np.ndarray,
    X_val: np.ndarray,
    y_val: np.ndarray,
    alpha: float = 1e4,
    drop_per_step: float = DEFAULT_DROP_PER_STEP,
    tradeoff_c: float = DEFAULT_TRADEOFF,
    min_active: int = 1,
    sample_weights: np.ndarray | None = None,
    refit_with_val: bool = False,
) -> tuple[DetachmentTrace, RidgeModel]:
    """Prune features on normalized matrices and return the selected refit.

    The refit uses the training rows only unless refit_with_val is set; the
    validation split then stays untouched and the trace remains an honest
    held-out record.
    """
    X_train = np.asarray(X_train, dtype=np.float64)
    X_val = np.asarray(X_val, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.float64)
    y_val = np.asarray(y_val, dtype=np.float64)
    if X_train.shape[1] != X_val.shape[1]:
        raise ShapeError("train and validation feature widths differ")
    if y_train.size == 0 or y_val.size == 0:
        raise SplitError("both splits must be non-empty")
    if np.unique(y_train).size < 2 or np.unique(y_val).size < 2:
        raise SplitError("both splits must contain both classes")
    if drop_per_step <= 0.0:
        raise ConfigError("drop_per_step must be positive")
    if min_active < 1:
        raise ConfigError("min_active must be >= 1")

    mask = np.ones(X_train.shape[1], dtype=bool)
    steps: list[DetachStep] = []
    while True:
        model = fit_ridge(
            X_train, y_train, alpha=alpha, sample_weights=sample_weights, mask=mask
        )
        steps.append(
            DetachStep(
                retained_fraction=float(mask.mean()),
                mask=mask.copy(),
                val_accuracy=_accuracy(model, X_val, y_val),
                train_accuracy=_accuracy(model, X_train, y_train),
            )
        )
        if int(mask.sum()) <= max(min_active, 1):
            break
        new_mask = detach_step(model, drop_per_step)
        if int(new_mask.sum()) == int(mask.sum()):
            break
        mask = new_mask

    scores = selection_scores(tuple(steps), tradeoff_c)
    best = 0
    for i in range(1, len(scores)):
        # >= prefers the later step on ties, i.e. fewer features
        if scores[i] >= scores[best]:
            best = i
    trace = DetachmentTrace(
        steps=tuple(steps),
        drop_per_step=drop_per_step,
        tradeoff_c=tradeoff_c,
        scores=scores,
        selected_index=best,
    )

    selected_mask = steps[best].mask
    if refit_with_val:
        X_fit = np.vstack([X_train, X_val])
        y_fit = np.concatenate([y_train, y_val])
        sw_fit = None
        if sample_weights is not None:
            sw_fit = np.concatenate(
                [np.asarray(sample_weights, dtype=np.float64), np.ones(y_val.size)]
            )
    else:
        X_fit, y_fit, sw_fit = X_train, y_train, sample_weights
    final = fit_ridge(
        X_fit, y_fit, alpha=alpha, sample_weights=sw_fit, mask=selected_mask
    )
    return trace, final


def export_active_features(
    model: RidgeModel, rows: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Submatrix of the active columns plus their ascending column ids, for
    downstream embedding or visualization tools."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != model.n_features:
        raise ShapeError(
            f"rows must have {model.n_features} columns, got {rows.shape}"
        )
    ids = np.flatnonzero(model.mask)
    return rows[:, ids], ids


def kernel_survival(mask: np.ndarray) -> int:
    """Number of kernels with at least one of their two features active."""
    mask = np.asarray(mask, dtype=bool)
    if mask.size % 2 != 0:
        raise ShapeError("feature mask length must be even (ppv, max pairs)")
    pairs = mask.reshape(-1, 2)
    return int(np.any(pairs, axis=1).sum())


def save_trace(trace: DetachmentTrace, sink: IO[str] | str | Path) -> None:
    if isinstance(sink, (str, Path)):
        with open(sink, "w", encoding="utf-8", newline="\n") as fh:
            save_trace(trace, fh)
        return
    sink.write(TRACE_MAGIC + "\n")
    sink.write(f"drop_per_step={trace.drop_per_step:.17g}\n")
    sink.write(f"tradeoff_c={trace.tradeoff_c:.17g}\n")
    sink.write("step\tretained_count\tretained_fraction\ttrain_acc\tval_acc\tscore\tselected\n")
    for i, (step, score) in enumerate(zip(trace.steps, trace.scores)):
        marker = "*" if i == trace.selected_index else ""
        sink.write(
            f"{i}\t{step.retained_count}\t{step.retained_fraction:.17g}\t"
            f"{step.train_accuracy:.17g}\t{step.val_accuracy:.17g}\t"
            f"{score:.17g}\t{marker}\n"
        )
