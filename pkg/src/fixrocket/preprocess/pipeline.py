"""Session-to-trial preprocessing.

Stages, in order: average the two eyes after converting angles to on-screen
position, calibrate against the first second, patch 3-sigma outliers, derive
velocities, drop corrupted sessions by a cohort MAD rule, high-pass filter
the surviving sessions, and cut centered fixed-length windows ahead of each
target onset. Filtering runs on whole sessions, before segmentation, so the
windows never contain filter edge transients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..data import TRIAL_LENGTH, RawSession, Trial, TrialDataset
from ..errors import (
    DataError,
    DegenerateDataError,
    DomainError,
    InsufficientDataError,
)
from .filters import FilterSpec, highpass_filter

CALIBRATION_SAMPLES = 300
MIN_ONSET_GAP = 300  # samples between previous onset and window start
OUTLIER_SIGMA = 3.0
MAD_THRESHOLD = 3.0
STATISTIC_NAMES = ("max_abs_x_pos", "max_abs_y_pos", "mean_abs_x_vel", "mean_abs_y_vel")


def angular_to_positional(angles_deg: np.ndarray, distance_cm: float) -> np.ndarray:
    """Project angular gaze onto the screen plane: pos = d * tan(angle)."""
    a = np.asarray(angles_deg, dtype=np.float64)
    if np.any(np.abs(a) >= 90.0):
        raise DomainError("gaze angle magnitude must be below 90 degrees")
    return distance_cm * np.tan(a * math.pi / 180.0)


def combine_and_calibrate(session: RawSession) -> np.ndarray:
    """Average both eyes in screen coordinates and zero the first second.

    Returns a (2, n) array of x and y positions in cm.
    """
    if session.n_samples < CALIBRATION_SAMPLES:
        raise InsufficientDataError(
            f"need at least {CALIBRATION_SAMPLES} samples to calibrate"
        )
    left = angular_to_positional(session.left_gaze, session.screen_distance)
    right = angular_to_positional(session.right_gaze, session.screen_distance)
    combined = 0.5 * (left + right)  # (n, 2)
    pos = combined.T.copy()  # (2, n)
    pos -= pos[:, :CALIBRATION_SAMPLES].mean(axis=1, keepdims=True)
    return pos


def replace_outliers(channel: np.ndarray) -> np.ndarray:
    """Patch samples more than 3 sigma from the session mean by linear
    interpolation between the nearest kept neighbors; edges take the nearest
    kept value."""
    x = np.asarray(channel, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise InsufficientDataError("need a 1-D channel of at least 2 samples")
    mean = x.mean()
    std = x.std()
    bad = np.abs(x - mean) > OUTLIER_SIGMA * std
    if not bad.any():
        return x.copy()
    if bad.all():
        raise DegenerateDataError("every sample flagged as an outlier")
    good = np.flatnonzero(~bad)
    out = x.copy()
    out[bad] = np.interp(np.flatnonzero(bad), good, x[good])
    return out


def differentiate(position: np.ndarray, sample_rate: float) -> np.ndarray:
    """Backward first difference scaled to units/s, with v[0] = v[1]."""
    p = np.asarray(position, dtype=np.float64)
    if p.shape[-1] < 2:
        raise InsufficientDataError("need at least 2 samples to differentiate")
    v = np.empty_like(p)
    v[..., 1:] = np.diff(p, axis=-1) * sample_rate
    v[..., 0] = v[..., 1]
    return v


@dataclass(frozen=True)
class PreprocessedSession:
    """Session-level 4-channel series (x, y, vx, vy) awaiting segmentation."""

    session_id: str
    subject_id: str
    condition: str
    task: str
    sample_rate: float
    channels: np.ndarray  # (4, n)
    target_onsets: np.ndarray


def _prepare_session(session: RawSession) -> PreprocessedSession:
    pos = combine_and_calibrate(session)
    pos = np.vstack([replace_outliers(pos[0]), replace_outliers(pos[1])])
    vel = differentiate(pos, session.sample_rate)
    return PreprocessedSession(
        session_id=session.session_id,
        subject_id=session.subject_id,
        condition=session.condition,
        task=session.task,
        sample_rate=session.sample_rate,
        channels=np.vstack([pos, vel]),
        target_onsets=session.target_onsets.copy(),
    )


@dataclass(frozen=True)
class SanitizeReport:
    """Cohort exclusion decisions with the statistics that drove them."""

    statistics: dict[str, tuple[float, float, float, float]]
    medians: tuple[float, float, float, float]
    mads: tuple[float, float, float, float]
    excluded: dict[str, tuple[str, ...]]  # session_id -> offending statistics

    @property
    def kept(self) -> int:
        return len(self.statistics) - len(self.excluded)


def session_statistics(channels: np.ndarray) -> tuple[float, float, float, float]:
    return (
        float(np.max(np.abs(channels[0]))),
        float(np.max(np.abs(channels[1]))),
        float(np.mean(np.abs(channels[2]))),
        float(np.mean(np.abs(channels[3]))),
    )


def sanitize_sessions(sessions: list[PreprocessedSession]) -> SanitizeReport:
    """Flag sessions whose amplitude or velocity statistics sit more than
    3 MADs above the cohort median; each of the four statistics is judged
    independently."""
    if len(sessions) < 3:
        raise InsufficientDataError("cohort statistics need at least 3 sessions")
    stats = {s.session_id: session_statistics(s.channels) for s in sessions}
    table = np.array(list(stats.values()))  # (n, 4)
    medians = np.median(table, axis=0)
    mads = np.median(np.abs(table - medians), axis=0)
    thresholds = medians + MAD_THRESHOLD * mads
    excluded: dict[str, tuple[str, ...]] = {}
    for sid, values in stats.items():
        offending = tuple(
            STATISTIC_NAMES[j] for j in range(4) if values[j] > thresholds[j]
        )
        if offending:
            excluded[sid] = offending
    return SanitizeReport(
        statistics=stats,
        medians=tuple(float(v) for v in medians),
        mads=tuple(float(v) for v in mads),
        excluded=excluded,
    )


def segment_trials(
    session: PreprocessedSession, window: int = TRIAL_LENGTH, min_gap: int = MIN_ONSET_GAP
) -> tuple[list[Trial], int]:
    """Cut one centered window per eligible onset.

    The window is the `window` samples before the onset; it is emitted only
    when it fits in the recording and starts at least `min_gap` samples after
    the previous onset. Returns (trials, skipped_count).
    """
    trials: list[Trial] = []
    skipped = 0
    onsets = session.target_onsets
    n = session.channels.shape[1]
    for k, onset in enumerate(onsets):
        start = int(onset) - window
        if start < 0 or onset > n:
            skipped += 1
            continue
        if k > 0 and start - int(onsets[k - 1]) < min_gap:
            skipped += 1
            continue
        win = session.channels[:, start:onset].copy()
        win -= win.mean(axis=1, keepdims=True)
        trials.append(
            Trial(
                channels=win,
                subject_id=session.subject_id,
                condition=session.condition,
                task=session.task,
                session_id=session.session_id,
                trial_index=k,
            )
        )
    return trials, skipped


@dataclass
class PipelineReport:
    """Counts emitted at each stage plus the sanitization details."""

    sessions_in: int = 0
    sessions_kept: int = 0
    trials_emitted: int = 0
    trials_skipped: int = 0
    sanitize: SanitizeReport | None = None
    stage_notes: list[str] = field(default_factory=list)

    def format(self) -> str:
        lines = [
            "preprocess report",
            f"  sessions in:      {self.sessions_in}",
            f"  sessions kept:    {self.sessions_kept}",
            f"  trials emitted:   {self.trials_emitted}",
            f"  trials skipped:   {self.trials_skipped}",
        ]
        if self.sanitize is not None and self.sanitize.excluded:
            lines.append("  excluded sessions:")
            for sid, reasons in sorted(self.sanitize.excluded.items()):
                lines.append(f"    {sid}: {', '.join(reasons)}")
        for note in self.stage_notes:
            lines.append(f"  note: {note}")
        return "\n".join(lines) + "\n"


def _stage(name: str, exc: Exception) -> Exception:
    wrapped = type(exc)(f"[{name}] {exc}")
    wrapped.__cause__ = exc
    return wrapped


def preprocess_pipeline(
    sessions: list[RawSession], spec: FilterSpec | None = FilterSpec()
) -> tuple[TrialDataset, PipelineReport]:
    """Run the full session-to-trial pipeline; spec=None skips filtering."""
    report = PipelineReport(sessions_in=len(sessions))
    prepared: list[PreprocessedSession] = []
    for session in sessions:
        try:
            prepared.append(_prepare_session(session))
        except (DomainError, InsufficientDataError, DegenerateDataError, DataError) as e:
            raise _stage(f"prepare:{session.session_id}", e) from e

    try:
        sanitize = sanitize_sessions(prepared)
    except InsufficientDataError as e:
        raise _stage("sanitize", e) from e
    report.sanitize = sanitize
    prepared = [s for s in prepared if s.session_id not in sanitize.excluded]
    report.sessions_kept = len(prepared)

    trials: list[Trial] = []
    for s in prepared:
        channels = s.channels
        if spec is not None:
            try:
                channels = highpass_filter(channels, spec)
            except (DataError, InsufficientDataError) as e:
                raise _stage(f"filter:{s.session_id}", e) from e
        filtered = PreprocessedSession(
            session_id=s.session_id,
            subject_id=s.subject_id,
            condition=s.condition,
            task=s.task,
            sample_rate=s.sample_rate,
            channels=channels,
            target_onsets=s.target_onsets,
        )
        emitted, skipped = segment_trials(filtered)
        trials.extend(emitted)
        report.trials_skipped += skipped
    report.trials_emitted = len(trials)

    dataset = TrialDataset(
        trials=tuple(trials),
        cutoff_hz=spec.cutoff_hz if spec is not None else 0.0,
        filter_order=spec.order if spec is not None else 0,
    )
    return dataset, report
