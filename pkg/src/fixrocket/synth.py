"""Deterministic synthetic gaze cohorts with controllable class structure.

Stands in for the private clinical recordings: every subject gets drifting
1/f fixation noise plus microsaccade-like refixation steps; PD subjects add
a low-frequency tremor sinusoid and a band-limited high-frequency noise
component whose power is multiplied relative to controls. The tremor band
sits entirely below the default 20 Hz cutoff and the signature band entirely
above it, so filtering experiments can separate "tremor leakage" from
legitimate signal.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .data import RawSession
from .errors import ConfigError, InsufficientDataError
from .preprocess import FilterSpec, highpass_filter
from .seeding import STREAMS

DEFAULT_TREMOR_BAND = (4.0, 7.0)
DEFAULT_SIGNATURE_BAND = (25.0, 60.0)


@dataclass(frozen=True)
class CohortSpec:
    subjects_per_class: int = 30
    sessions_per_subject: int = 2
    trials_per_session: int = 12
    sample_rate: float = 300.0
    screen_distance: float = 60.0
    noise_deg: float = 0.05
    drift_max_hz: float = 15.0
    microsaccade_rate_hz: float = 1.0
    microsaccade_max_deg: float = 0.3
    tremor_band: tuple[float, float] = DEFAULT_TREMOR_BAND
    tremor_amp_deg: float = 0.03
    signature_band: tuple[float, float] = DEFAULT_SIGNATURE_BAND
    signature_base_deg: float = 0.025
    signature_multiplier: float = 4.0
    idiosyncrasy: float = 0.05
    eye_noise_deg: float = 0.025
    cutoff_reference_hz: float = 20.0
    seed: int = 0

    def __post_init__(self):
        if self.subjects_per_class < 1 or self.sessions_per_subject < 1:
            raise ConfigError("need at least one subject and one session")
        if self.trials_per_session < 1:
            raise ConfigError("need at least one trial per session")
        lo_t, hi_t = self.tremor_band
        lo_s, hi_s = self.signature_band
        nyquist = self.sample_rate / 2.0
        if not (0 < lo_t < hi_t and 0 < lo_s < hi_s and hi_s < nyquist):
            raise ConfigError("bands must be ordered and below Nyquist")
        if hi_t > self.cutoff_reference_hz or lo_s < self.cutoff_reference_hz:
            raise ConfigError(
                "tremor band must sit below and signature band above the "
                f"{self.cutoff_reference_hz} Hz reference cutoff"
            )
        if self.drift_max_hz >= lo_s:
            raise ConfigError("drift_max_hz must stay below the signature band")
        if self.signature_multiplier < 1.0:
            raise ConfigError("signature_multiplier must be >= 1")


def _session_rng(spec: CohortSpec, subject_idx: int, session_idx: int):
    return np.random.default_rng(
        np.random.SeedSequence(
            [int(spec.seed), STREAMS["cohort"], subject_idx, session_idx]
        )
    )


def _subject_rng(spec: CohortSpec, subject_idx: int):
    return np.random.default_rng(
        np.random.SeedSequence([int(spec.seed), STREAMS["cohort"], subject_idx])
    )


def _one_over_f_noise(n, rms, rng, fs, max_hz, knee_hz=0.5):
    """Drift-like noise: power ~ 1/f between the knee and max_hz, zero above.

    Keeping the drift below max_hz leaves the supra-cutoff band to the eye
    noise and the class signature.
    """
    spectrum = rng.standard_normal(n // 2 + 1) + 1j * rng.standard_normal(n // 2 + 1)
    freqs = np.fft.rfftfreq(n, 1.0 / fs)
    shaping = 1.0 / np.sqrt(np.maximum(freqs, knee_hz))
    shaping[0] = 0.0
    shaping[freqs > max_hz] = 0.0
    x = np.fft.irfft(spectrum * shaping, n)
    scale = x.std()
    return x * (rms / scale) if rms > 0 and scale > 0 else np.zeros(n)


def _bandlimited_noise(n, band, rms, rng, fs):
    spectrum = rng.standard_normal(n // 2 + 1) + 1j * rng.standard_normal(n // 2 + 1)
    freqs = np.fft.rfftfreq(n, 1.0 / fs)
    mask = (freqs >= band[0]) & (freqs <= band[1])
    x = np.fft.irfft(spectrum * mask, n)
    scale = x.std()
    return x * (rms / scale) if rms > 0 and scale > 0 else np.zeros(n)


def _microsaccade_offsets(n, rate_hz, max_deg, rng, fs, ramp=5):
    """Piecewise-constant refixation level, bounded by construction and
    lightly smoothed so the steps are not instantaneous."""
    count = int(rng.poisson(rate_hz * n / fs))
    offsets = np.zeros(n)
    if count:
        times = np.sort(rng.integers(0, n, count))
        levels = rng.uniform(-max_deg, max_deg, count)
        start = 0
        level = 0.0
        for t, nxt in zip(times, levels):
            offsets[start:t] = level
            level = nxt
            start = t
        offsets[start:] = level
    if ramp > 1:
        kernel = np.ones(ramp) / ramp
        offsets = np.convolve(offsets, kernel, mode="same")
    return offsets


def _make_channel(spec, n, rng, gain, tremor_freq, is_pd):
    base = _one_over_f_noise(
        n, spec.noise_deg * gain, rng, spec.sample_rate, spec.drift_max_hz
    )
    sig_rms = spec.signature_base_deg * gain
    if is_pd:
        sig_rms *= np.sqrt(spec.signature_multiplier)
    signature = _bandlimited_noise(n, spec.signature_band, sig_rms, rng, spec.sample_rate)
    # wide class-neutral spread in the refixation range keeps the cohort MAD
    # of the max-amplitude statistic honest (no spurious exclusions)
    amp_scale = rng.uniform(0.65, 1.3)
    steps = _microsaccade_offsets(
        n, spec.microsaccade_rate_hz, spec.microsaccade_max_deg * gain * amp_scale,
        rng, spec.sample_rate,
    )
    phase = rng.uniform(0.0, 2.0 * np.pi)
    channel = base + signature + steps
    if is_pd and spec.tremor_amp_deg > 0:
        t = np.arange(n) / spec.sample_rate
        channel = channel + spec.tremor_amp_deg * np.sin(
            2.0 * np.pi * tremor_freq * t + phase
        )
    return channel


def _session_attributes(session_idx: int) -> tuple[str, str]:
    """(task, PD condition) pattern; fully crossed from 4 sessions up."""
    task = "pro" if session_idx % 2 == 0 else "anti"
    condition = "PD_ON" if session_idx % 4 in (0, 3) else "PD_OFF"
    return task, condition


def generate_cohort(spec: CohortSpec) -> list[RawSession]:
    """Synthesize the full cohort; identical specs give identical sessions."""
    sessions: list[RawSession] = []
    n_subjects = 2 * spec.subjects_per_class
    for subject_idx in range(n_subjects):
        is_pd = subject_idx >= spec.subjects_per_class
        number = subject_idx % spec.subjects_per_class
        subject_id = f"{'pd' if is_pd else 'hc'}{number:03d}"
        traits = _subject_rng(spec, subject_idx)
        tremor_freq = float(traits.uniform(*spec.tremor_band))
        gain = float(max(1.0 + spec.idiosyncrasy * traits.standard_normal(), 0.3))

        for session_idx in range(spec.sessions_per_subject):
            rng = _session_rng(spec, subject_idx, session_idx)
            spacings = rng.integers(750, 901, size=spec.trials_per_session)
            onsets = 600 + np.cumsum(spacings)
            n = int(onsets[-1]) + 150

            x = _make_channel(spec, n, rng, gain, tremor_freq, is_pd)
            y = _make_channel(spec, n, rng, gain, tremor_freq, is_pd)
            true_gaze = np.column_stack([x, y])
            left = true_gaze + spec.eye_noise_deg * rng.standard_normal((n, 2))
            right = true_gaze + spec.eye_noise_deg * rng.standard_normal((n, 2))

            task, pd_condition = _session_attributes(session_idx)
            sessions.append(
                RawSession(
                    subject_id=subject_id,
                    condition=pd_condition if is_pd else "HC",
                    task=task,
                    sample_rate=spec.sample_rate,
                    left_gaze=left,
                    right_gaze=right,
                    target_onsets=onsets.astype(np.int64),
                    screen_distance=spec.screen_distance,
                    session_id=f"{subject_id}-s{session_idx}-{task}",
                )
            )
    return sessions


def cohort_manifest(spec: CohortSpec) -> str:
    """Flat key=value listing of every cohort parameter."""
    lines = ["#cohort-manifest v1"]
    for key in sorted(vars(spec)):
        lines.append(f"{key}={getattr(spec, key)!r}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Spectral audit

@dataclass(frozen=True)
class BandPower:
    class_label: str
    band_name: str
    lo_hz: float
    hi_hz: float
    mean_power: float


def _welch_density(channels: np.ndarray, fs: float, nseg: int) -> tuple[np.ndarray, np.ndarray]:
    """Hann-windowed averaged periodogram over half-overlapping segments,
    mean across channels. Segment averaging keeps the near-zero stopband
    estimates from being dominated by single-window leakage noise."""
    n = channels.shape[1]
    nseg = min(nseg, n)
    step = max(nseg // 2, 1)
    win = np.hanning(nseg)
    scale = 1.0 / (fs * float((win ** 2).sum()))
    freqs = np.fft.rfftfreq(nseg, 1.0 / fs)
    acc = np.zeros(freqs.size)
    count = 0
    for start in range(0, n - nseg + 1, step):
        seg = channels[:, start : start + nseg] * win
        acc += (np.abs(np.fft.rfft(seg, axis=1)) ** 2).mean(axis=0) * scale
        count += 1
    return freqs, acc / count


def spectral_audit(
    sessions: list[RawSession],
    bands: Mapping[str, tuple[float, float]],
    filter_spec: FilterSpec | None = None,
    segment_length: int = 256,
) -> list[BandPower]:
    """Mean periodogram power per declared band per class, on the averaged
    position channels; pass a FilterSpec to audit the post-filter spectrum.
    """
    if not sessions:
        raise InsufficientDataError("no sessions to audit")
    sums: dict[tuple[str, str], float] = {}
    counts: dict[tuple[str, str], int] = {}
    for session in sessions:
        combined = 0.5 * (session.left_gaze + session.right_gaze)  # (n, 2) deg
        channels = combined.T
        if filter_spec is not None:
            channels = highpass_filter(channels, filter_spec)
        freqs, power = _welch_density(channels, session.sample_rate, segment_length)
        for name, (lo, hi) in bands.items():
            mask = (freqs >= lo) & (freqs < hi)
            key = (session.label, name)
            sums[key] = sums.get(key, 0.0) + float(power[mask].mean())
            counts[key] = counts.get(key, 0) + 1
    out = []
    for (label, name), total in sorted(sums.items()):
        lo, hi = bands[name]
        out.append(
            BandPower(
                class_label=label,
                band_name=name,
                lo_hz=lo,
                hi_hz=hi,
                mean_power=total / counts[(label, name)],
            )
        )
    return out


def band_power(table: list[BandPower], class_label: str, band_name: str) -> float:
    for row in table:
        if row.class_label == class_label and row.band_name == band_name:
            return row.mean_power
    raise KeyError(f"no band power for ({class_label}, {band_name})")
