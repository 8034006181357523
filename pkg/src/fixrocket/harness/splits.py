"""Subject-exclusive stratified splits and cross-validation folds.

All assignment happens at the subject level so a patient's ON and OFF
sessions can never straddle a split boundary; within each class, a seeded
greedy pass steers per-split trial counts toward the target ratios.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import IO, Mapping

import numpy as np

from ..data import TrialDataset
from ..errors import ConfigError, FormatError, SplitError

SPLIT_NAMES = ("train", "val", "test")
DEFAULT_RATIOS = (0.556, 0.167, 0.278)
PLAN_MAGIC = "#split-plan v1"


@dataclass(frozen=True)
class SubjectTable:
    """Just enough structure to plan splits: trial indices and class per subject."""

    subject_index: Mapping[str, tuple[int, ...]]
    labels: Mapping[str, str]

    @classmethod
    def from_dataset(cls, dataset: TrialDataset) -> "SubjectTable":
        return cls(
            subject_index=dict(dataset.subject_index),
            labels={s: dataset.subject_label(s) for s in dataset.subjects},
        )


def _as_table(data) -> SubjectTable:
    return data if isinstance(data, SubjectTable) else SubjectTable.from_dataset(data)


@dataclass(frozen=True)
class SplitPlan:
    """subject_id -> split-name assignment, exclusive by construction."""

    assignment: Mapping[str, str]
    ratios: tuple[float, ...] | None
    seed: int

    def subjects(self, split: str) -> tuple[str, ...]:
        return tuple(s for s, v in self.assignment.items() if v == split)

    def trial_indices(self, dataset, split: str) -> np.ndarray:
        table = _as_table(dataset)
        idx: list[int] = []
        for subject in self.subjects(split):
            idx.extend(table.subject_index.get(subject, ()))
        return np.array(sorted(idx), dtype=np.int64)


def _class_subjects(table: SubjectTable) -> dict[str, list[str]]:
    by_class: dict[str, list[str]] = {"HC": [], "PD": []}
    for subject in table.subject_index:
        by_class[table.labels[subject]].append(subject)
    return by_class


def make_split(
    dataset,
    ratios: tuple[float, float, float] = DEFAULT_RATIOS,
    seed: int = 0,
) -> SplitPlan:
    """Greedy seeded subject assignment, stratified per class.

    Subjects are visited in a seeded shuffle and each goes to the split with
    the largest remaining per-class trial deficit; when the number of still
    class-empty splits equals the number of subjects left, those subjects are
    forced into the empty splits so every split sees both classes.
    """
    table = _as_table(dataset)
    if len(ratios) != len(SPLIT_NAMES):
        raise ConfigError(f"need {len(SPLIT_NAMES)} ratios")
    if any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 0.01:
        raise ConfigError("ratios must be positive and sum to 1")

    by_class = _class_subjects(table)
    for label, members in by_class.items():
        if len(members) < len(SPLIT_NAMES):
            raise SplitError(
                f"class {label} has {len(members)} subjects, "
                f"need at least {len(SPLIT_NAMES)}"
            )

    rng = np.random.default_rng(seed)
    assignment: dict[str, str] = {}
    for label in ("HC", "PD"):
        members = sorted(by_class[label])
        order = rng.permutation(len(members))
        class_total = sum(len(table.subject_index[s]) for s in members)
        targets = {name: r * class_total for name, r in zip(SPLIT_NAMES, ratios)}
        assigned = {name: 0 for name in SPLIT_NAMES}
        filled = {name: False for name in SPLIT_NAMES}
        for pos, oi in enumerate(order):
            subject = members[oi]
            remaining = len(members) - pos
            empty = [name for name in SPLIT_NAMES if not filled[name]]
            candidates = empty if 0 < len(empty) == remaining else SPLIT_NAMES
            best = max(candidates, key=lambda name: targets[name] - assigned[name])
            assignment[subject] = best
            assigned[best] += len(table.subject_index[subject])
            filled[best] = True

    return SplitPlan(assignment=assignment, ratios=tuple(ratios), seed=int(seed))


def make_folds(dataset, k: int = 5, seed: int = 0) -> list[SplitPlan]:
    """Partition subjects into k class-stratified folds; plan i uses fold i
    as validation and the rest as training."""
    if k < 2:
        raise ConfigError("k must be >= 2")
    by_class = _class_subjects(_as_table(dataset))
    for label, members in by_class.items():
        if k > len(members):
            raise SplitError(
                f"k={k} exceeds the {len(members)} subjects of class {label}"
            )
    rng = np.random.default_rng(seed)
    fold_of: dict[str, int] = {}
    counter = 0
    for label in ("HC", "PD"):
        members = sorted(by_class[label])
        order = rng.permutation(len(members))
        for oi in order:
            fold_of[members[oi]] = counter % k
            counter += 1
    plans = []
    for i in range(k):
        assignment = {
            s: ("val" if fold == i else "train") for s, fold in fold_of.items()
        }
        plans.append(SplitPlan(assignment=assignment, ratios=None, seed=int(seed)))
    return plans


def validate_plan(plan: SplitPlan, dataset) -> None:
    """Raise SplitError if the plan violates the split invariants."""
    table = _as_table(dataset)
    seen = set()
    for subject, split in plan.assignment.items():
        if split not in SPLIT_NAMES:
            raise SplitError(f"unknown split {split!r}")
        if subject in seen:
            raise SplitError(f"subject {subject} assigned twice")
        seen.add(subject)
    missing = set(table.subject_index) - seen
    if missing:
        raise SplitError(f"subjects not assigned: {sorted(missing)[:5]} ...")
    present = {v for v in plan.assignment.values()}
    for split in present:
        labels = {
            table.labels[s]
            for s, v in plan.assignment.items()
            if v == split and table.subject_index.get(s)
        }
        if labels != {"HC", "PD"}:
            raise SplitError(f"split {split!r} does not contain both classes")


def save_plan(plan: SplitPlan, sink: IO[str] | str | Path) -> None:
    if isinstance(sink, (str, Path)):
        with open(sink, "w", encoding="utf-8", newline="\n") as fh:
            save_plan(plan, fh)
        return
    sink.write(PLAN_MAGIC + "\n")
    sink.write(f"seed={plan.seed}\n")
    ratios = "" if plan.ratios is None else ",".join(repr(r) for r in plan.ratios)
    sink.write(f"ratios={ratios}\n")
    for subject in sorted(plan.assignment):
        sink.write(f"{subject},{plan.assignment[subject]}\n")


def load_plan(source: IO[str] | str | Path) -> SplitPlan:
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return load_plan(fh)
    magic = source.readline().rstrip("\n")
    if magic != PLAN_MAGIC:
        raise FormatError(f"expected {PLAN_MAGIC!r}, got {magic!r}")
    seed = int(source.readline().rstrip("\n").split("=", 1)[1])
    ratios_s = source.readline().rstrip("\n").split("=", 1)[1]
    ratios = tuple(float(r) for r in ratios_s.split(",")) if ratios_s else None
    assignment = {}
    for line in source:
        line = line.rstrip("\n")
        if not line:
            continue
        subject, split = line.split(",")
        assignment[subject] = split
    return SplitPlan(assignment=assignment, ratios=ratios, seed=seed)
