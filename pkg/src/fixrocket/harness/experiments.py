"""Experiment orchestration: training runs, grid search, cutoff sweep.

Each run seed derives named sub-streams for the subject split and the kernel
bank, so experiments are reproducible end to end and independent of worker
counts. Models only ever see training (and declared validation) rows; test
rows enter at evaluation time alone.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..data import RawSession, TrialDataset, condition_label
from ..detach import DetachmentTrace, run_sfd
from ..errors import AggregationError, ConfigError
from ..preprocess import FilterSpec, preprocess_pipeline
from ..ridge import (
    RidgeModel,
    balance_weights,
    decision_scores,
    fit_ridge,
    probability,
)
from ..rocket import (
    apply_normalizer,
    fit_normalizer,
    generate_kernels,
    transform,
)
from ..seeding import derived_seed
from .metrics import Metrics, compute_metrics, majority_baseline_uf1
from .splits import DEFAULT_RATIOS, SplitPlan, make_folds, make_split

DEFAULT_SEEDS = (0, 1, 2, 3, 4)


def aggregate_subjects(
    probs_by_subject: dict[str, Sequence[float]], threshold: float = 0.5
) -> dict[str, tuple[float, float]]:
    """Soft vote: mean trial probability per subject, PD iff score > threshold.

    Returns subject -> (score, prediction in {-1, +1}).
    """
    out: dict[str, tuple[float, float]] = {}
    for subject, probs in probs_by_subject.items():
        probs = np.asarray(list(probs), dtype=np.float64)
        if probs.size == 0:
            raise AggregationError(f"subject {subject} has no scored trials")
        score = float(probs.mean())
        out[subject] = (score, 1.0 if score > threshold else -1.0)
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    num_kernels: int = 10_000
    alpha: float = 1e4
    ratios: tuple[float, float, float] = DEFAULT_RATIOS
    balance: bool = True
    subject_threshold: float = 0.5
    detach: bool = False
    drop_per_step: float = 0.05
    tradeoff_c: float = 0.1
    refit_with_val: bool = False
    seeds: tuple[int, ...] = DEFAULT_SEEDS

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if self.num_kernels < 1:
            raise ConfigError("num_kernels must be >= 1")


@dataclass(frozen=True)
class TrialRecord:
    """One scored test trial, kept for attribute analysis."""

    seed: int
    subject_id: str
    condition: str
    task: str
    session_id: str
    trial_index: int
    prob: float
    prediction: float
    label: float


@dataclass(frozen=True)
class SeedResult:
    seed: int
    bank_seed: int
    plan: SplitPlan
    trial_metrics: Metrics
    subject_metrics: Metrics
    model: RidgeModel
    trace: DetachmentTrace | None
    records: tuple[TrialRecord, ...]


@dataclass(frozen=True)
class ExperimentReport:
    config: ExperimentConfig
    results: tuple[SeedResult, ...]

    def mean_std(self, metric: str, level: str = "subject") -> tuple[float, float]:
        values = np.array(
            [
                getattr(
                    r.subject_metrics if level == "subject" else r.trial_metrics,
                    metric,
                )
                for r in self.results
            ]
        )
        std = float(values.std(ddof=1)) if values.size > 1 else 0.0
        return float(values.mean()), std


def _fit_on_plan(
    dataset: TrialDataset,
    plan: SplitPlan,
    config: ExperimentConfig,
    bank_seed: int,
):
    """Transform and fit under a plan; returns the model pieces plus the
    normalized feature matrix and per-split row indices."""
    bank = generate_kernels(
        config.num_kernels,
        input_length=dataset.trials[0].channels.shape[1],
        num_channels=dataset.trials[0].channels.shape[0],
        seed=bank_seed,
    )
    features = transform(dataset, bank)
    idx = {name: plan.trial_indices(dataset, name) for name in ("train", "val", "test")}
    norm = fit_normalizer(features.values[idx["train"]])
    values_n = apply_normalizer(norm, features.values)
    y = features.labels()

    weights = balance_weights(y[idx["train"]]) if config.balance else None
    model = fit_ridge(
        values_n[idx["train"]],
        y[idx["train"]],
        alpha=config.alpha,
        sample_weights=weights,
        normalizer=norm,
        bank_seed=bank_seed,
    )
    trace = None
    if config.detach:
        trace, pruned = run_sfd(
            values_n[idx["train"]],
            y[idx["train"]],
            values_n[idx["val"]],
            y[idx["val"]],
            alpha=config.alpha,
            drop_per_step=config.drop_per_step,
            tradeoff_c=config.tradeoff_c,
            sample_weights=weights,
            refit_with_val=config.refit_with_val,
        )
        model = replace(pruned, normalizer=norm, bank_seed=bank_seed)
    return features, values_n, y, idx, model, trace


def _evaluate_split(
    features, values_n, y, rows, model, threshold, seed
) -> tuple[Metrics, Metrics, tuple[TrialRecord, ...]]:
    d = decision_scores(model, values_n[rows])
    probs = probability(d)
    preds = np.where(d > 0.0, 1.0, -1.0)
    trial_metrics = compute_metrics(preds, y[rows])

    by_subject: dict[str, list[float]] = {}
    subject_labels: dict[str, float] = {}
    records = []
    for j, row in enumerate(rows):
        sid = features.subject_ids[row]
        by_subject.setdefault(sid, []).append(float(probs[j]))
        subject_labels[sid] = y[row]
        records.append(
            TrialRecord(
                seed=seed,
                subject_id=sid,
                condition=features.conditions[row],
                task=features.tasks[row],
                session_id=features.session_ids[row],
                trial_index=features.trial_indices[row],
                prob=float(probs[j]),
                prediction=float(preds[j]),
                label=float(y[row]),
            )
        )
    votes = aggregate_subjects(by_subject, threshold=threshold)
    subjects = sorted(votes)
    subject_metrics = compute_metrics(
        np.array([votes[s][1] for s in subjects]),
        np.array([subject_labels[s] for s in subjects]),
    )
    return trial_metrics, subject_metrics, tuple(records)


def run_experiment(
    dataset: TrialDataset,
    config: ExperimentConfig = ExperimentConfig(),
    plan: SplitPlan | None = None,
) -> ExperimentReport:
    """Train and evaluate once per seed; report per-seed and averaged metrics.

    When plan is None each seed derives its own subject split, so the seeds
    vary both the kernel bank and the held-out subjects.
    """
    results = []
    for seed in config.seeds:
        plan_s = plan if plan is not None else make_split(
            dataset, config.ratios, seed=derived_seed(seed, "split")
        )
        bank_seed = derived_seed(seed, "kernels")
        features, values_n, y, idx, model, trace = _fit_on_plan(
            dataset, plan_s, config, bank_seed
        )
        trial_m, subject_m, records = _evaluate_split(
            features, values_n, y, idx["test"], model,
            config.subject_threshold, seed,
        )
        results.append(
            SeedResult(
                seed=seed,
                bank_seed=bank_seed,
                plan=plan_s,
                trial_metrics=trial_m,
                subject_metrics=subject_m,
                model=model,
                trace=trace,
                records=records,
            )
        )
    return ExperimentReport(config=config, results=tuple(results))


# ---------------------------------------------------------------------------
# Grid search (kernel count x ridge parameter)

@dataclass(frozen=True)
class GridResult:
    kernel_counts: tuple[int, ...]
    alphas: tuple[float, ...]
    mean_uf1: np.ndarray  # (len(kernel_counts), len(alphas))

    def best(self) -> tuple[int, float]:
        i, j = np.unravel_index(int(np.argmax(self.mean_uf1)), self.mean_uf1.shape)
        return self.kernel_counts[i], self.alphas[j]


def grid_search(
    dataset: TrialDataset,
    k_folds: int = 5,
    kernel_counts: tuple[int, ...] = (100, 1000, 10_000),
    alphas: tuple[float, ...] = (1e-2, 1e-3, 1e-4),
    seed: int = 0,
    balance: bool = True,
) -> GridResult:
    """Mean validation uF1 over subject-exclusive folds per configuration.

    The kernel bank depends on the kernel count (one derived seed each) and is
    shared across folds; the closed-form fit has no training epochs, so the
    per-configuration score is the uF1 of its single fit.
    """
    folds = make_folds(dataset, k=k_folds, seed=derived_seed(seed, "split"))
    table = np.zeros((len(kernel_counts), len(alphas)))
    y_all = dataset.labels()
    for i, count in enumerate(kernel_counts):
        bank = generate_kernels(
            count,
            input_length=dataset.trials[0].channels.shape[1],
            num_channels=dataset.trials[0].channels.shape[0],
            seed=derived_seed(seed, "kernels", count),
        )
        features = transform(dataset, bank)
        for j, alpha in enumerate(alphas):
            scores = []
            for plan in folds:
                tr = plan.trial_indices(dataset, "train")
                va = plan.trial_indices(dataset, "val")
                norm = fit_normalizer(features.values[tr])
                Xn_tr = apply_normalizer(norm, features.values[tr])
                Xn_va = apply_normalizer(norm, features.values[va])
                weights = balance_weights(y_all[tr]) if balance else None
                model = fit_ridge(
                    Xn_tr, y_all[tr], alpha=alpha, sample_weights=weights
                )
                d = decision_scores(model, Xn_va)
                preds = np.where(d > 0.0, 1.0, -1.0)
                scores.append(compute_metrics(preds, y_all[va]).uf1)
            table[i, j] = float(np.mean(scores))
    return GridResult(
        kernel_counts=tuple(kernel_counts), alphas=tuple(alphas), mean_uf1=table
    )


# ---------------------------------------------------------------------------
# Cutoff-frequency sweep

@dataclass(frozen=True)
class SweepPoint:
    cutoff_hz: float
    trial_uf1: float
    subject_uf1: float
    trial_accuracy: float
    subject_accuracy: float
    baseline_trial_uf1: float
    baseline_subject_uf1: float


def cutoff_sweep(
    sessions: list[RawSession],
    cutoffs: Sequence[float],
    config: ExperimentConfig = ExperimentConfig(),
    filter_order: int = 8,
) -> list[SweepPoint]:
    """Re-preprocess at each cutoff (0 = unfiltered reference), train, and
    report test uF1 against the always-majority baseline."""
    points = []
    for cutoff in cutoffs:
        if cutoff < 0:
            raise ConfigError("cutoff must be >= 0")
        spec = None if cutoff == 0 else FilterSpec(
            order=filter_order, cutoff_hz=float(cutoff)
        )
        dataset, _report = preprocess_pipeline(sessions, spec)
        report = run_experiment(dataset, config)
        trial_uf1, _ = report.mean_std("uf1", level="trial")
        subject_uf1, _ = report.mean_std("uf1", level="subject")
        trial_acc, _ = report.mean_std("accuracy", level="trial")
        subject_acc, _ = report.mean_std("accuracy", level="subject")

        base_trial = []
        base_subject = []
        for r in report.results:
            m = r.trial_metrics
            pd_n, hc_n = m.tp + m.fn, m.tn + m.fp
            base_trial.append(
                majority_baseline_uf1(max(pd_n, hc_n) / max(pd_n + hc_n, 1))
            )
            sm = r.subject_metrics
            pd_s, hc_s = sm.tp + sm.fn, sm.tn + sm.fp
            base_subject.append(
                majority_baseline_uf1(max(pd_s, hc_s) / max(pd_s + hc_s, 1))
            )
        points.append(
            SweepPoint(
                cutoff_hz=float(cutoff),
                trial_uf1=trial_uf1,
                subject_uf1=subject_uf1,
                trial_accuracy=trial_acc,
                subject_accuracy=subject_acc,
                baseline_trial_uf1=float(np.mean(base_trial)),
                baseline_subject_uf1=float(np.mean(base_subject)),
            )
        )
    return points


# ---------------------------------------------------------------------------
# Attribute analysis

@dataclass(frozen=True)
class AttributeGroup:
    name: str
    n_trials: int
    mean_accuracy: float
    std_accuracy: float


def attribute_report(report: ExperimentReport) -> list[AttributeGroup]:
    """Per-seed accuracy grouped by task and, among PD trials, by medication.

    Groups with no trials are omitted rather than reported as errors.
    """
    groups = {
        "task=pro": lambda r: r.task == "pro",
        "task=anti": lambda r: r.task == "anti",
        "medication=ON": lambda r: r.condition == "PD_ON",
        "medication=OFF": lambda r: r.condition == "PD_OFF",
    }
    out = []
    for name, selector in groups.items():
        per_seed = []
        total = 0
        for result in report.results:
            hits = [r for r in result.records if selector(r)]
            total += len(hits)
            if hits:
                per_seed.append(
                    float(np.mean([r.prediction == r.label for r in hits]))
                )
        if not per_seed:
            continue
        values = np.array(per_seed)
        out.append(
            AttributeGroup(
                name=name,
                n_trials=total,
                mean_accuracy=float(values.mean()),
                std_accuracy=float(values.std(ddof=1)) if values.size > 1 else 0.0,
            )
        )
    return out
