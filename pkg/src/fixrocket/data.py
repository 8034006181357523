"""Domain types and file formats for raw recordings and trial datasets.

A raw session is one eye-tracker recording of one subject performing a block
of pro- or antisaccade trials; a trial is the fixed-length 4-channel fixation
window cut out ahead of each target movement. Both have a self-describing
text format so fixtures stay diff-able.
"""
from __future__ import annotations

import io
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Mapping

import numpy as np

from .errors import (
    DataError,
    FormatError,
    IncompatibilityError,
    IntegrityError,
    SchemaError,
    SequencingError,
)

CONDITIONS = ("HC", "PD_ON", "PD_OFF")
TASKS = ("pro", "anti")

TRIAL_CHANNELS = 4
TRIAL_LENGTH = 440
CHANNEL_NAMES = ("x_pos", "y_pos", "x_vel", "y_vel")

RAW_MAGIC = "#fixation-raw v1"
DATASET_MAGIC = "#trial-dataset v1"
DATASET_SCHEMA_VERSION = 1

_ID_RE = re.compile(r"^[A-Za-z0-9_:\-]+$")


def condition_label(condition: str) -> str:
    """Binary class for a recording condition: PD_ON and PD_OFF pool to PD."""
    return "PD" if condition.startswith("PD") else "HC"


def _check_id(value: str, what: str) -> str:
    if not _ID_RE.match(value):
        raise DataError(f"{what} {value!r} must match [A-Za-z0-9_:-]+")
    return value


@dataclass(frozen=True)
class RawSession:
    """One recording: per-eye angular gaze plus target-onset sample indices."""

    subject_id: str
    condition: str
    task: str
    sample_rate: float
    left_gaze: np.ndarray   # (n, 2) angular degrees, columns (x, y)
    right_gaze: np.ndarray  # (n, 2)
    target_onsets: np.ndarray  # strictly increasing sample indices
    screen_distance: float = 60.0
    session_id: str = ""

    def __post_init__(self):
        _check_id(self.subject_id, "subject_id")
        if self.condition not in CONDITIONS:
            raise DataError(f"unknown condition {self.condition!r}")
        if self.task not in TASKS:
            raise DataError(f"unknown task {self.task!r}")
        if self.sample_rate <= 0:
            raise DataError("sample_rate must be positive")
        if self.screen_distance <= 0:
            raise DataError("screen_distance must be positive")
        left = np.asarray(self.left_gaze, dtype=np.float64)
        right = np.asarray(self.right_gaze, dtype=np.float64)
        onsets = np.asarray(self.target_onsets, dtype=np.int64)
        object.__setattr__(self, "left_gaze", left)
        object.__setattr__(self, "right_gaze", right)
        object.__setattr__(self, "target_onsets", onsets)
        if left.ndim != 2 or left.shape[1] != 2 or right.shape != left.shape:
            raise DataError("gaze channels must be (n, 2) arrays of equal length")
        if left.shape[0] < TRIAL_LENGTH:
            raise DataError(
                f"recording has {left.shape[0]} samples, need at least {TRIAL_LENGTH}"
            )
        if not (np.isfinite(left).all() and np.isfinite(right).all()):
            raise DataError("gaze data contains non-finite values")
        if onsets.size and (np.any(np.diff(onsets) <= 0)):
            raise SequencingError("target_onsets must be strictly increasing")
        if onsets.size and (onsets[0] < 0 or onsets[-1] >= left.shape[0]):
            raise DataError("target_onsets must lie within the recording")
        if not self.session_id:
            object.__setattr__(
                self, "session_id", f"{self.subject_id}-{self.task}"
            )
        _check_id(self.session_id, "session_id")

    @property
    def n_samples(self) -> int:
        return self.left_gaze.shape[0]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate

    @property
    def label(self) -> str:
        return condition_label(self.condition)

    def summary(self) -> str:
        return (
            f"session {self.session_id}: subject={self.subject_id} "
            f"condition={self.condition} task={self.task} "
            f"samples={self.n_samples} duration={self.duration_s:.1f} s "
            f"onsets={self.target_onsets.size}"
        )


@dataclass(frozen=True)
class Trial:
    """One 4 x 440 fixation window with its provenance metadata."""

    channels: np.ndarray  # (4, 440) ordered (x_pos, y_pos, x_vel, y_vel)
    subject_id: str
    condition: str
    task: str
    session_id: str
    trial_index: int

    def __post_init__(self):
        ch = np.asarray(self.channels, dtype=np.float64)
        object.__setattr__(self, "channels", ch)
        if ch.shape != (TRIAL_CHANNELS, TRIAL_LENGTH):
            raise DataError(
                f"trial channels must be {TRIAL_CHANNELS}x{TRIAL_LENGTH}, got {ch.shape}"
            )
        if not np.isfinite(ch).all():
            raise DataError("trial contains non-finite values")
        _check_id(self.subject_id, "subject_id")
        _check_id(self.session_id, "session_id")
        if self.condition not in CONDITIONS:
            raise DataError(f"unknown condition {self.condition!r}")
        if self.task not in TASKS:
            raise DataError(f"unknown task {self.task!r}")

    @property
    def label(self) -> str:
        return condition_label(self.condition)


@dataclass(frozen=True)
class TrialDataset:
    """An ordered collection of trials plus the subject index over them.

    The binary label is always derived from the stored condition, and one
    subject may not appear under both HC and PD conditions.
    """

    trials: tuple[Trial, ...]
    cutoff_hz: float = 0.0
    filter_order: int = 0
    subject_index: Mapping[str, tuple[int, ...]] = field(default=None, compare=False)

    def __post_init__(self):
        trials = tuple(self.trials)
        object.__setattr__(self, "trials", trials)
        index: dict[str, list[int]] = {}
        labels: dict[str, str] = {}
        for i, t in enumerate(trials):
            index.setdefault(t.subject_id, []).append(i)
            prev = labels.setdefault(t.subject_id, t.label)
            if prev != t.label:
                raise DataError(
                    f"subject {t.subject_id} appears under both HC and PD conditions"
                )
        object.__setattr__(
            self, "subject_index", {s: tuple(v) for s, v in index.items()}
        )

    def __len__(self) -> int:
        return len(self.trials)

    @property
    def subjects(self) -> tuple[str, ...]:
        return tuple(self.subject_index.keys())

    def subject_label(self, subject_id: str) -> str:
        return self.trials[self.subject_index[subject_id][0]].label

    def labels(self) -> np.ndarray:
        """Binary labels per trial: +1 for PD, -1 for HC."""
        return np.array([1.0 if t.label == "PD" else -1.0 for t in self.trials])


# ---------------------------------------------------------------------------
# Raw session CSV

_RAW_HEADER_COLUMNS = ["t", "lx_deg", "ly_deg", "rx_deg", "ry_deg", "event"]
_TASK_ALIASES = {"pro": "pro", "anti": "anti"}
_METADATA_KEYS = ("subject", "condition", "task", "fs", "distance_cm")


def load_raw_session(source: IO[str] | str | Path, session_id: str = "") -> RawSession:
    """Parse one raw-session CSV into a validated RawSession.

    Raises FormatError for a malformed magic/metadata line, SchemaError when a
    required column is missing, and SequencingError for non-monotonic time.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return load_raw_session(fh, session_id=session_id)

    magic = source.readline().rstrip("\n")
    if magic != RAW_MAGIC:
        raise FormatError(f"expected {RAW_MAGIC!r} on line 1, got {magic!r}")

    meta_line = source.readline().rstrip("\n")
    meta: dict[str, str] = {}
    for item in meta_line.split(","):
        if "=" not in item:
            raise FormatError(f"malformed metadata item {item!r}")
        k, v = item.split("=", 1)
        meta[k.strip()] = v.strip()
    for key in _METADATA_KEYS:
        if key not in meta:
            raise FormatError(f"metadata line missing {key!r}")
    if meta["task"] not in _TASK_ALIASES:
        raise FormatError(f"unknown task token {meta['task']!r}")
    try:
        fs = float(meta["fs"])
        distance = float(meta["distance_cm"])
    except ValueError as e:
        raise FormatError(f"non-numeric metadata value: {e}") from e

    header = source.readline().rstrip("\n").split(",")
    missing = [c for c in _RAW_HEADER_COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"missing required column(s): {', '.join(missing)}")
    col = {name: header.index(name) for name in _RAW_HEADER_COLUMNS}

    times: list[float] = []
    rows: list[tuple[float, float, float, float]] = []
    onsets: list[int] = []
    for lineno, line in enumerate(source):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != len(header):
            raise IntegrityError(
                f"row {lineno}: expected {len(header)} fields, got {len(parts)}"
            )
        try:
            t = float(parts[col["t"]])
            vals = (
                float(parts[col["lx_deg"]]),
                float(parts[col["ly_deg"]]),
                float(parts[col["rx_deg"]]),
                float(parts[col["ry_deg"]]),
            )
            ev = int(parts[col["event"]])
        except ValueError as e:
            raise FormatError(f"row {lineno}: {e}") from e
        if ev not in (0, 1):
            raise FormatError(f"row {lineno}: event must be 0 or 1, got {ev}")
        if times and t <= times[-1]:
            raise SequencingError(
                f"row {lineno}: timestamps must be strictly increasing"
            )
        times.append(t)
        rows.append(vals)
        if ev == 1:
            onsets.append(len(rows) - 1)

    if len(rows) < 2:
        raise IntegrityError("recording has fewer than 2 samples")
    dt = np.diff(np.asarray(times))
    if np.any(np.abs(dt - 1.0 / fs) > 0.25 / fs):
        raise SequencingError("timestamps do not advance by 1/fs")

    data = np.asarray(rows, dtype=np.float64)
    return RawSession(
        subject_id=meta["subject"],
        condition=meta["condition"],
        task=_TASK_ALIASES[meta["task"]],
        sample_rate=fs,
        left_gaze=data[:, 0:2],
        right_gaze=data[:, 2:4],
        target_onsets=np.asarray(onsets, dtype=np.int64),
        screen_distance=distance,
        session_id=session_id,
    )


def save_raw_session(session: RawSession, sink: IO[str] | str | Path) -> None:
    """Write a RawSession in the raw CSV format (lossless float repr)."""
    if isinstance(sink, (str, Path)):
        with open(sink, "w", encoding="utf-8", newline="\n") as fh:
            save_raw_session(session, fh)
        return
    sink.write(RAW_MAGIC + "\n")
    sink.write(
        f"subject={session.subject_id},condition={session.condition},"
        f"task={session.task},fs={session.sample_rate:g},"
        f"distance_cm={session.screen_distance:g}\n"
    )
    sink.write(",".join(_RAW_HEADER_COLUMNS) + "\n")
    onsets = set(int(i) for i in session.target_onsets)
    fs = session.sample_rate
    left, right = session.left_gaze, session.right_gaze
    for i in range(session.n_samples):
        ev = 1 if i in onsets else 0
        sink.write(
            f"{i / fs!r},{left[i, 0]!r},{left[i, 1]!r},"
            f"{right[i, 0]!r},{right[i, 1]!r},{ev}\n"
        )


def load_raw_sessions(directory: str | Path) -> list[RawSession]:
    """Load every *.csv under a cohort directory, sorted by filename."""
    directory = Path(directory)
    sessions = []
    for path in sorted(directory.glob("*.csv")):
        sessions.append(load_raw_session(path, session_id=path.stem))
    return sessions


# ---------------------------------------------------------------------------
# Trial dataset persistence

def save_dataset(dataset: TrialDataset, sink: IO[str] | str | Path) -> None:
    """Write a dataset; values use shortest round-trip repr so the
    save -> load cycle is bit-exact."""
    if isinstance(sink, (str, Path)):
        with open(sink, "w", encoding="utf-8", newline="\n") as fh:
            save_dataset(dataset, fh)
        return
    sink.write(DATASET_MAGIC + "\n")
    sink.write(f"schema_version={DATASET_SCHEMA_VERSION}\n")
    sink.write(f"trial_count={len(dataset)}\n")
    sink.write(f"cutoff_hz={dataset.cutoff_hz!r}\n")
    sink.write(f"filter_order={dataset.filter_order}\n")
    for t in dataset.trials:
        values = " ".join(repr(v) for v in t.channels.ravel())
        sink.write(
            f"{t.subject_id},{t.condition},{t.task},{t.session_id},"
            f"{t.trial_index},{values}\n"
        )


def _header_value(line: str, key: str) -> str:
    if not line.startswith(key + "="):
        raise FormatError(f"expected {key}=... header line, got {line!r}")
    return line[len(key) + 1 :]


def load_dataset(source: IO[str] | str | Path) -> TrialDataset:
    """Read a dataset file; the inverse of save_dataset."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return load_dataset(fh)

    magic = source.readline().rstrip("\n")
    if magic != DATASET_MAGIC:
        raise FormatError(f"expected {DATASET_MAGIC!r} on line 1, got {magic!r}")
    version = _header_value(source.readline().rstrip("\n"), "schema_version")
    if version != str(DATASET_SCHEMA_VERSION):
        raise IncompatibilityError(
            f"schema_version {version} not supported (expected {DATASET_SCHEMA_VERSION})"
        )
    count = int(_header_value(source.readline().rstrip("\n"), "trial_count"))
    cutoff = float(_header_value(source.readline().rstrip("\n"), "cutoff_hz"))
    order = int(_header_value(source.readline().rstrip("\n"), "filter_order"))

    trials: list[Trial] = []
    n_values = TRIAL_CHANNELS * TRIAL_LENGTH
    for line in source:
        line = line.rstrip("\n")
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 6:
            raise IntegrityError(f"trial record has {len(parts)} fields, expected 6")
        subject, condition, task, session_id, index_s, blob = parts
        values = np.array(blob.split(" "), dtype=np.float64)
        if values.size != n_values:
            raise IntegrityError(
                f"trial record has {values.size} values, expected {n_values}"
            )
        trials.append(
            Trial(
                channels=values.reshape(TRIAL_CHANNELS, TRIAL_LENGTH),
                subject_id=subject,
                condition=condition,
                task=task,
                session_id=session_id,
                trial_index=int(index_s),
            )
        )
    if len(trials) != count:
        raise IntegrityError(
            f"file declares {count} trials but contains {len(trials)}"
        )
    return TrialDataset(trials=tuple(trials), cutoff_hz=cutoff, filter_order=order)


def dataset_from_trials(
    trials: Iterable[Trial], cutoff_hz: float = 0.0, filter_order: int = 0
) -> TrialDataset:
    return TrialDataset(
        trials=tuple(trials), cutoff_hz=cutoff_hz, filter_order=filter_order
    )
