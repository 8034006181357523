"""Closed-form ridge classifier over normalized kernel features.

Labels are encoded HC -> -1, PD -> +1. The solver centers the data by the
(weighted) means, solves the regularized normal equations through a Cholesky
factorization, and switches to the Gram (dual) form when there are more
features than rows. Decision scores map to probabilities through a logistic
squashing so trial scores can be soft-voted per subject.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import IO

import numpy as np

from .errors import (
    ConfigError,
    DataError,
    DegenerateDataError,
    FormatError,
    IncompatibilityError,
    ShapeError,
)
from .rocket import Normalizer, apply_normalizer

LABEL_HC = -1.0
LABEL_PD = 1.0
MODEL_MAGIC = "#ridge-model v1"
MODEL_SCHEMA_VERSION = 1
DEFAULT_ALPHA = 1e4


def _solve_spd(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve A x = b for symmetric positive-definite A via Cholesky."""
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as e:
        raise DataError(f"normal-equation matrix is not positive definite: {e}") from e
    z = np.linalg.solve(L, b)
    return np.linalg.solve(L.T, z)


@dataclass(frozen=True)
class RidgeModel:
    """Fitted linear classifier: weights over the active feature columns."""

    weights: np.ndarray       # (n_active,)
    intercept: float
    alpha: float
    mask: np.ndarray          # (n_features,) bool; True = active column
    normalizer: Normalizer | None = None
    bank_seed: int = -1

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        m = np.asarray(self.mask, dtype=bool)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "mask", m)
        if w.ndim != 1 or m.ndim != 1:
            raise ShapeError("weights and mask must be 1-D")
        if int(m.sum()) != w.size:
            raise ShapeError("weight count must equal the number of active columns")
        if self.alpha <= 0:
            raise ConfigError("alpha must be positive")

    @property
    def n_features(self) -> int:
        return self.mask.size

    @property
    def n_active(self) -> int:
        return int(self.mask.sum())


def fit_ridge(
    X: np.ndarray,
    y: np.ndarray,
    alpha: float = DEFAULT_ALPHA,
    sample_weights: np.ndarray | None = None,
    solver: str = "auto",
    mask: np.ndarray | None = None,
    normalizer: Normalizer | None = None,
    bank_seed: int = -1,
) -> RidgeModel:
    """Fit (X^T W X + alpha I) w = X^T W y on the masked columns of X.

    X is expected to be normalized already. sample_weights enter the fit
    literally (a row with weight 2 equals that row duplicated), so duplication
    and weighting give identical solutions at the same alpha.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.size:
        raise ShapeError("X must be (n, f) and y (n,)")
    if X.shape[0] < 2:
        raise DegenerateDataError("need at least 2 rows to fit")
    if not np.isfinite(X).all() or not np.isfinite(y).all():
        raise DataError("fit input contains non-finite values")
    if np.unique(y).size < 2:
        raise DegenerateDataError("labels contain a single class")
    if alpha <= 0:
        raise ConfigError("alpha must be positive")
    if solver not in ("auto", "primal", "dual"):
        raise ConfigError("solver must be auto, primal, or dual")

    if mask is None:
        mask = np.ones(X.shape[1], dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.size != X.shape[1]:
            raise ShapeError("mask length must match the feature count")
    Xa = X[:, mask]

    if sample_weights is None:
        sw = np.ones(X.shape[0])
    else:
        sw = np.asarray(sample_weights, dtype=np.float64)
        if sw.shape != (X.shape[0],):
            raise ShapeError("sample_weights must be one value per row")
        if np.any(sw < 0) or sw.sum() <= 0:
            raise DataError("sample_weights must be non-negative with positive sum")

    wsum = sw.sum()
    x_mean = (sw @ Xa) / wsum
    y_mean = float(sw @ y) / wsum
    Xc = Xa - x_mean
    yc = y - y_mean

    n, f = Xc.shape
    use_dual = solver == "dual" or (solver == "auto" and f > n)
    if use_dual:
        root = np.sqrt(sw)[:, None]
        Xs = root * Xc
        ys = np.sqrt(sw) * yc
        G = Xs @ Xs.T
        G[np.diag_indices_from(G)] += alpha
        weights = Xs.T @ _solve_spd(G, ys)
    else:
        A = Xc.T @ (sw[:, None] * Xc)
        A[np.diag_indices_from(A)] += alpha
        b = Xc.T @ (sw * yc)
        weights = _solve_spd(A, b)
    intercept = y_mean - float(x_mean @ weights)
    return RidgeModel(
        weights=weights,
        intercept=intercept,
        alpha=alpha,
        mask=mask.copy(),
        normalizer=normalizer,
        bank_seed=bank_seed,
    )


def decision_scores(model: RidgeModel, X: np.ndarray) -> np.ndarray:
    """Linear decision values; positive sign predicts PD."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ShapeError(
            f"X must have {model.n_features} columns, got {X.shape}"
        )
    return X[:, model.mask] @ model.weights + model.intercept


def predict(model: RidgeModel, X: np.ndarray) -> np.ndarray:
    """Class predictions in {-1, +1}; the boundary d = 0 falls to HC."""
    d = decision_scores(model, X)
    return np.where(d > 0.0, LABEL_PD, LABEL_HC)


def probability(d):
    """Logistic map of a decision score to P(PD); 0.5 exactly at d = 0."""
    scalar = np.ndim(d) == 0
    arr = np.atleast_1d(np.asarray(d, dtype=np.float64))
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    expd = np.exp(arr[~pos])
    out[~pos] = expd / (1.0 + expd)
    return float(out[0]) if scalar else out


def probabilities(model: RidgeModel, X: np.ndarray) -> np.ndarray:
    return probability(decision_scores(model, X))


def score_raw(model: RidgeModel, raw_features: np.ndarray) -> np.ndarray:
    """Decision scores for raw (unnormalized) feature rows."""
    if model.normalizer is None:
        raise ConfigError("model carries no normalizer; pass normalized rows")
    return decision_scores(model, apply_normalizer(model.normalizer, raw_features))


def balance_weights(y: np.ndarray) -> np.ndarray:
    """Per-row class-balancing weights scaled as duplication counts.

    Each class receives weight proportional to 1/N_c, scaled so the largest
    class keeps weight 1; balancing a 2:1 dataset therefore equals duplicating
    each minority row twice.
    """
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    if classes.size < 2:
        raise DegenerateDataError("cannot balance a single-class label vector")
    n_max = counts.max()
    table = {c: n_max / n for c, n in zip(classes, counts)}
    return np.array([table[v] for v in y])


def resample_balanced(y: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    """Row indices drawn with probability proportional to 1/N_class, the
    stochastic counterpart of balance_weights kept for parity experiments."""
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    if classes.size < 2:
        raise DegenerateDataError("cannot resample a single-class label vector")
    inv = {c: 1.0 / n for c, n in zip(classes, counts)}
    p = np.array([inv[v] for v in y])
    p /= p.sum()
    return rng.choice(y.size, size=size, replace=True, p=p)


# ---------------------------------------------------------------------------
# Model persistence

def _mask_rle(mask: np.ndarray) -> str:
    runs = []
    current = bool(mask[0])
    count = 0
    for v in mask:
        if bool(v) == current:
            count += 1
        else:
            runs.append(f"{int(current)}x{count}")
            current = bool(v)
            count = 1
    runs.append(f"{int(current)}x{count}")
    return ",".join(runs)


def _mask_from_rle(text: str, n: int) -> np.ndarray:
    mask = np.empty(n, dtype=bool)
    pos = 0
    for run in text.split(","):
        bit, count_s = run.split("x")
        count = int(count_s)
        mask[pos : pos + count] = bool(int(bit))
        pos += count
    if pos != n:
        raise FormatError(f"mask RLE covers {pos} columns, expected {n}")
    return mask


def _fmt(values) -> str:
    return " ".join(f"{v:.17g}" for v in np.asarray(values).ravel())


def save_model(model: RidgeModel, sink: IO[str] | str | Path) -> None:
    if isinstance(sink, (str, Path)):
        with open(sink, "w", encoding="utf-8", newline="\n") as fh:
            save_model(model, fh)
        return
    if model.normalizer is None:
        raise ConfigError("cannot serialize a model without its normalizer")
    sink.write(MODEL_MAGIC + "\n")
    sink.write(f"schema_version={MODEL_SCHEMA_VERSION}\n")
    sink.write(f"alpha={model.alpha:.17g}\n")
    sink.write(f"bank_seed={model.bank_seed}\n")
    sink.write(f"n_features={model.n_features}\n")
    sink.write(f"mask_rle={_mask_rle(model.mask)}\n")
    sink.write(f"intercept={model.intercept:.17g}\n")
    sink.write(f"epsilon={model.normalizer.epsilon:.17g}\n")
    sink.write(f"means={_fmt(model.normalizer.means)}\n")
    sink.write(f"stds={_fmt(model.normalizer.stds)}\n")
    sink.write(f"weights={_fmt(model.weights)}\n")


def load_model(source: IO[str] | str | Path) -> RidgeModel:
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return load_model(fh)
    magic = source.readline().rstrip("\n")
    if magic != MODEL_MAGIC:
        raise FormatError(f"expected {MODEL_MAGIC!r}, got {magic!r}")
    fields = {}
    for line in source:
        key, _, value = line.rstrip("\n").partition("=")
        fields[key] = value
    if fields.get("schema_version") != str(MODEL_SCHEMA_VERSION):
        raise IncompatibilityError(
            f"model schema_version {fields.get('schema_version')} not supported"
        )
    n = int(fields["n_features"])
    mask = _mask_from_rle(fields["mask_rle"], n)
    means = np.array(fields["means"].split(" "), dtype=np.float64)
    stds = np.array(fields["stds"].split(" "), dtype=np.float64)
    weights = np.array(fields["weights"].split(" "), dtype=np.float64)
    return RidgeModel(
        weights=weights,
        intercept=float(fields["intercept"]),
        alpha=float(fields["alpha"]),
        mask=mask,
        normalizer=Normalizer(
            means=means, stds=stds, epsilon=float(fields["epsilon"])
        ),
        bank_seed=int(fields["bank_seed"]),
    )
