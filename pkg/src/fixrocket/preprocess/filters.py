"""Butterworth high-pass design and zero-phase filtering.

The filter is designed from the analog prototype: prewarped cutoff, lowpass
to highpass transform, bilinear transform, and a cascade of second-order
sections. Forward-backward application squares the magnitude response and
cancels the phase, which matters for the short 440-sample windows cut out
downstream.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ..errors import ConfigError, DataError, DesignError, InsufficientDataError

PASS_MODES = ("single", "forward_backward")


@dataclass(frozen=True)
class FilterSpec:
    """High-pass filter parameters; defaults match the pipeline defaults."""

    order: int = 8
    cutoff_hz: float = 20.0
    sample_rate: float = 300.0
    kind: str = "highpass"
    passes: str = "forward_backward"

    def __post_init__(self):
        if self.kind != "highpass":
            raise ConfigError(f"unsupported filter kind {self.kind!r}")
        if self.passes not in PASS_MODES:
            raise ConfigError(f"passes must be one of {PASS_MODES}")
        if self.order < 2 or self.order % 2 != 0:
            raise ConfigError("order must be an even integer >= 2")
        if self.sample_rate <= 0:
            raise DesignError("sample_rate must be positive")
        if not (0.0 < self.cutoff_hz < self.sample_rate / 2.0):
            raise DesignError(
                f"cutoff {self.cutoff_hz} Hz must lie in (0, {self.sample_rate / 2}) Hz"
            )

    @property
    def padlen(self) -> int:
        return 3 * self.order


def design_highpass_sos(spec: FilterSpec) -> np.ndarray:
    """Return second-order sections (n_sections, 6) for the high-pass design.

    Sections are ordered most-damped first; the overall gain is spread evenly
    across sections.
    """
    n = spec.order
    fs = spec.sample_rate
    # analog Butterworth prototype poles (unit cutoff, left half plane)
    m = np.arange(-n + 1, n, 2)
    poles = -np.exp(1j * math.pi * m / (2 * n))
    gain = float(np.real(np.prod(-poles)))  # 1.0 for Butterworth

    # prewarp and lowpass -> highpass: s -> wc / s
    wc = 2.0 * fs * math.tan(math.pi * spec.cutoff_hz / fs)
    hp_poles = wc / poles
    hp_zeros = np.zeros(n, dtype=complex)
    hp_gain = gain / float(np.real(np.prod(-poles)))

    # bilinear transform at 2*fs
    fs2 = 2.0 * fs
    z_d = (fs2 + hp_zeros) / (fs2 - hp_zeros)
    p_d = (fs2 + hp_poles) / (fs2 - hp_poles)
    k_d = hp_gain * float(np.real(np.prod(fs2 - hp_zeros) / np.prod(fs2 - hp_poles)))
    if k_d <= 0:
        raise DesignError("digital gain is not positive; design failed")

    # pair conjugate poles into sections, most damped (smallest |p|) first
    upper = p_d[np.imag(p_d) > 0]
    if 2 * upper.size != n:
        raise DesignError("expected conjugate pole pairs for an even order")
    upper = upper[np.lexsort((np.real(upper), np.abs(upper)))]
    n_sections = n // 2
    section_gain = k_d ** (1.0 / n_sections)
    sos = np.zeros((n_sections, 6))
    for s, p in enumerate(upper):
        z1, z2 = z_d[2 * s], z_d[2 * s + 1]
        b = section_gain * np.array(
            [1.0, -float(np.real(z1 + z2)), float(np.real(z1 * z2))]
        )
        a = np.array([1.0, -2.0 * float(np.real(p)), float(np.abs(p)) ** 2])
        sos[s, :3] = b
        sos[s, 3:] = a
    return sos


def sos_response(sos: np.ndarray, freqs_hz, sample_rate: float) -> np.ndarray:
    """Complex frequency response of the cascade at the given frequencies."""
    freqs = np.atleast_1d(np.asarray(freqs_hz, dtype=np.float64))
    z = np.exp(-2j * math.pi * freqs / sample_rate)
    h = np.ones_like(z, dtype=complex)
    for b0, b1, b2, a0, a1, a2 in sos:
        h *= (b0 + b1 * z + b2 * z * z) / (a0 + a1 * z + a2 * z * z)
    return h


def _sos_steady_state(sos: np.ndarray) -> np.ndarray:
    """Per-section internal state for a sustained unit input (TDF-II)."""
    zi = np.zeros((sos.shape[0], 2))
    scale = 1.0
    for s, (b0, b1, b2, _a0, a1, a2) in enumerate(sos):
        h1 = (b0 + b1 + b2) / (1.0 + a1 + a2)
        zi[s, 0] = scale * (h1 - b0)
        zi[s, 1] = scale * (b2 - a2 * h1)
        scale *= h1
    return zi


@njit(cache=True)
def _sosfilt(sos, x, zi):
    n_sections = sos.shape[0]
    n = x.shape[0]
    y = x.copy()
    state = zi.copy()
    for s in range(n_sections):
        b0 = sos[s, 0]
        b1 = sos[s, 1]
        b2 = sos[s, 2]
        a1 = sos[s, 4]
        a2 = sos[s, 5]
        z1 = state[s, 0]
        z2 = state[s, 1]
        for i in range(n):
            xi = y[i]
            yi = b0 * xi + z1
            z1 = b1 * xi - a1 * yi + z2
            z2 = b2 * xi - a2 * yi
            y[i] = yi
        state[s, 0] = z1
        state[s, 1] = z2
    return y


def sosfilt(sos: np.ndarray, x: np.ndarray, zi: np.ndarray | None = None) -> np.ndarray:
    """Single forward pass through the cascade (1-D input)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if zi is None:
        zi = np.zeros((sos.shape[0], 2))
    return _sosfilt(np.ascontiguousarray(sos), x, np.ascontiguousarray(zi))


def _odd_pad(x: np.ndarray, padlen: int) -> np.ndarray:
    head = 2.0 * x[0] - x[padlen:0:-1]
    tail = 2.0 * x[-1] - x[-2 : -padlen - 2 : -1]
    return np.concatenate([head, x, tail])


def _filtfilt_1d(sos: np.ndarray, x: np.ndarray, padlen: int) -> np.ndarray:
    zi_unit = _sos_steady_state(sos)
    ext = _odd_pad(x, padlen)
    y = _sosfilt(sos, ext, zi_unit * ext[0])
    y = y[::-1].copy()
    y = _sosfilt(sos, y, zi_unit * y[0])
    y = y[::-1]
    return y[padlen : padlen + x.shape[0]]


def highpass_filter(channels: np.ndarray, spec: FilterSpec) -> np.ndarray:
    """Filter one channel (n,) or a channel stack (c, n), preserving length.

    forward_backward mode pads with the reflected signal (3 * order samples at
    each edge) and runs the cascade both ways; single mode is one causal pass
    with step-matched initial conditions, kept for ablation.
    """
    x = np.asarray(channels, dtype=np.float64)
    squeeze = x.ndim == 1
    x2 = x[None, :] if squeeze else x
    if x2.ndim != 2:
        raise DataError("expected a 1-D channel or a 2-D channel stack")
    if not np.isfinite(x2).all():
        raise DataError("filter input contains non-finite values")
    if x2.shape[1] <= spec.padlen:
        raise InsufficientDataError(
            f"need more than {spec.padlen} samples for an order-{spec.order} filter"
        )
    sos = design_highpass_sos(spec)
    out = np.empty_like(x2)
    for c in range(x2.shape[0]):
        if spec.passes == "forward_backward":
            out[c] = _filtfilt_1d(sos, np.ascontiguousarray(x2[c]), spec.padlen)
        else:
            zi = _sos_steady_state(sos) * x2[c, 0]
            out[c] = _sosfilt(sos, np.ascontiguousarray(x2[c]), zi)
    return out[0] if squeeze else out
