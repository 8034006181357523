"""Random convolutional kernel transform over 4-channel trials.

A frozen bank of random dilated kernels turns each trial into two pooled
features per kernel: the proportion of positive values in the feature map and
its maximum. The bank is fully determined by its seed, so regeneration is the
canonical persistence path and the text serialization exists for audit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO

import numpy as np
from numba import njit, prange

from .data import TRIAL_CHANNELS, TRIAL_LENGTH, TrialDataset, condition_label
from .errors import (
    ConfigError,
    DataError,
    DegenerateDataError,
    DomainError,
    FormatError,
    InsufficientDataError,
    ShapeError,
)

KERNEL_LENGTHS = (7, 9, 11)
WEIGHT_SUM_TOL = 1e-9
BANK_MAGIC = "#kernel-bank v1"


@dataclass(frozen=True)
class Kernel:
    """One dilated convolution kernel over a subset of input channels."""

    weights: np.ndarray       # (n_channels_used, length), mean-centered per row
    channel_indices: np.ndarray  # sorted subset of input channels
    bias: float
    dilation: int
    padding: bool

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        ch = np.asarray(self.channel_indices, dtype=np.int64)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "channel_indices", ch)
        if w.ndim != 2 or ch.ndim != 1 or w.shape[0] != ch.size:
            raise ShapeError("weights must be (n_channels_used, length)")
        if self.length < 2:
            raise ConfigError("kernel length must be >= 2")
        if np.any(np.abs(w.sum(axis=1)) > WEIGHT_SUM_TOL):
            raise DataError("per-channel weights must sum to zero")
        if self.dilation < 1:
            raise ConfigError("dilation must be >= 1")

    @property
    def length(self) -> int:
        return self.weights.shape[1]

    @property
    def span(self) -> int:
        return (self.length - 1) * self.dilation


@dataclass(frozen=True)
class KernelBank:
    """Frozen kernel collection plus the seed that generated it."""

    kernels: tuple[Kernel, ...]
    seed: int
    input_length: int = TRIAL_LENGTH
    num_channels: int = TRIAL_CHANNELS

    def __len__(self) -> int:
        return len(self.kernels)

    @property
    def n_features(self) -> int:
        return 2 * len(self.kernels)


def generate_kernels(
    num: int,
    input_length: int = TRIAL_LENGTH,
    num_channels: int = TRIAL_CHANNELS,
    seed: int = 0,
) -> KernelBank:
    """Draw a bank of `num` random kernels; the same seed reproduces the bank.

    Per kernel: length uniform over {7, 9, 11}; the channel count is
    floor(2**u) with u uniform on [0, log2(num_channels)] and the channels
    drawn without replacement; weights are standard normal, mean-centered per
    channel; bias uniform on [-1, 1]; dilation is floor(2**a) with a uniform
    on [0, log2((input_length - 1) / (length - 1))]; padding is a fair coin.
    """
    if num_channels < 1:
        raise DomainError("num_channels must be >= 1")
    if num < 1:
        raise ConfigError("num must be >= 1")
    if input_length <= max(KERNEL_LENGTHS):
        raise ConfigError(
            f"input_length must exceed {max(KERNEL_LENGTHS)}, got {input_length}"
        )
    rng = np.random.default_rng(seed)
    max_ch_exp = math.log2(num_channels)
    kernels = []
    for _ in range(num):
        length = KERNEL_LENGTHS[rng.integers(0, len(KERNEL_LENGTHS))]
        n_ch = min(int(2.0 ** rng.uniform(0.0, max_ch_exp)), num_channels)
        channels = np.sort(rng.permutation(num_channels)[:n_ch])
        weights = rng.standard_normal((n_ch, length))
        weights -= weights.mean(axis=1, keepdims=True)
        bias = float(rng.uniform(-1.0, 1.0))
        max_dil_exp = math.log2((input_length - 1) / (length - 1))
        dilation = int(2.0 ** rng.uniform(0.0, max_dil_exp))
        padding = bool(rng.integers(0, 2))
        kernels.append(
            Kernel(
                weights=weights,
                channel_indices=channels,
                bias=bias,
                dilation=dilation,
                padding=padding,
            )
        )
    return KernelBank(
        kernels=tuple(kernels),
        seed=int(seed),
        input_length=input_length,
        num_channels=num_channels,
    )


# ---------------------------------------------------------------------------
# Convolution core

@njit(cache=True, parallel=True, fastmath=True)
def _apply_bank(X, lengths, dilations, paddings, biases,
                n_channels, ch_offsets, ch_flat, w_offsets, w_flat):
    n_trials = X.shape[0]
    n_time = X.shape[2]
    n_kernels = lengths.shape[0]
    out = np.empty((n_trials, 2 * n_kernels))
    for t in prange(n_trials):
        # feature-map buffer reused across kernels; padded maps never exceed n_time
        buf = np.empty(n_time)
        for k in range(n_kernels):
            length = lengths[k]
            dilation = dilations[k]
            nc = n_channels[k]
            c0 = ch_offsets[k]
            w0 = w_offsets[k]
            span = (length - 1) * dilation
            pad = (span // 2) if paddings[k] == 1 else 0
            out_len = n_time + 2 * pad - span
            acc = buf[:out_len]
            acc[:] = biases[k]
            # accumulate tap by tap over contiguous input slices
            for c in range(nc):
                ch = ch_flat[c0 + c]
                wb = w0 + c * length
                x = X[t, ch]
                for j in range(length):
                    w = w_flat[wb + j]
                    src = j * dilation - pad
                    i_lo = -src if src < 0 else 0
                    i_hi = n_time - src if src + out_len > n_time else out_len
                    for i in range(i_lo, i_hi):
                        acc[i] += w * x[src + i]
            npos = 0
            mx = acc[0]
            for i in range(out_len):
                v = acc[i]
                if v > 0.0:
                    npos += 1
                if v > mx:
                    mx = v
            out[t, 2 * k] = npos / out_len
            out[t, 2 * k + 1] = mx
    return out


def _pack_bank(bank: KernelBank):
    n = len(bank.kernels)
    lengths = np.empty(n, dtype=np.int64)
    dilations = np.empty(n, dtype=np.int64)
    paddings = np.empty(n, dtype=np.int64)
    biases = np.empty(n, dtype=np.float64)
    n_channels = np.empty(n, dtype=np.int64)
    ch_offsets = np.empty(n, dtype=np.int64)
    w_offsets = np.empty(n, dtype=np.int64)
    ch_parts = []
    w_parts = []
    c_off = 0
    w_off = 0
    for k, kern in enumerate(bank.kernels):
        lengths[k] = kern.length
        dilations[k] = kern.dilation
        paddings[k] = 1 if kern.padding else 0
        biases[k] = kern.bias
        n_channels[k] = kern.channel_indices.size
        ch_offsets[k] = c_off
        w_offsets[k] = w_off
        ch_parts.append(kern.channel_indices)
        w_parts.append(kern.weights.ravel())
        c_off += kern.channel_indices.size
        w_off += kern.weights.size
    ch_flat = np.concatenate(ch_parts)
    w_flat = np.concatenate(w_parts)
    return (lengths, dilations, paddings, biases,
            n_channels, ch_offsets, ch_flat, w_offsets, w_flat)


def _validate_kernel_fit(kernel: Kernel, n_channels: int, n_time: int) -> None:
    if kernel.channel_indices.size and kernel.channel_indices.max() >= n_channels:
        raise ShapeError("kernel references a channel beyond the input")
    out_len = n_time + (2 * (kernel.span // 2) if kernel.padding else 0) - kernel.span
    if out_len < 1:
        raise DegenerateDataError(
            "kernel span exceeds the input length; feature map would be empty"
        )


def apply_kernel(channels: np.ndarray, kernel: Kernel) -> tuple[float, float]:
    """Pooled features (ppv, max) of one kernel over one trial's channels."""
    x = np.ascontiguousarray(channels, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError("expected (channels, time) input")
    _validate_kernel_fit(kernel, x.shape[0], x.shape[1])
    bank = KernelBank(
        kernels=(kernel,), seed=-1, input_length=x.shape[1], num_channels=x.shape[0]
    )
    out = _apply_bank(x[None, :, :], *_pack_bank(bank))
    return float(out[0, 0]), float(out[0, 1])


@dataclass(frozen=True)
class FeatureMatrix:
    """Trial-by-feature matrix with row metadata; columns alternate
    (ppv_k, max_k) per kernel."""

    values: np.ndarray
    subject_ids: tuple[str, ...]
    conditions: tuple[str, ...]
    tasks: tuple[str, ...]
    session_ids: tuple[str, ...]
    trial_indices: tuple[int, ...]
    bank_seed: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        n = v.shape[0]
        if not (
            len(self.subject_ids) == len(self.conditions) == len(self.tasks)
            == len(self.session_ids) == len(self.trial_indices) == n
        ):
            raise ShapeError("row metadata length must match the matrix")
        if n and not np.isfinite(v).all():
            raise DataError("feature matrix contains non-finite values")
        if n and v.size:
            ppv = v[:, 0::2]
            if ppv.min() < 0.0 or ppv.max() > 1.0:
                raise DataError("ppv columns must lie in [0, 1]")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def labels(self) -> np.ndarray:
        return np.array(
            [1.0 if condition_label(c) == "PD" else -1.0 for c in self.conditions]
        )

    def take_rows(self, indices) -> "FeatureMatrix":
        idx = np.asarray(indices, dtype=np.int64)
        return FeatureMatrix(
            values=self.values[idx],
            subject_ids=tuple(self.subject_ids[i] for i in idx),
            conditions=tuple(self.conditions[i] for i in idx),
            tasks=tuple(self.tasks[i] for i in idx),
            session_ids=tuple(self.session_ids[i] for i in idx),
            trial_indices=tuple(self.trial_indices[i] for i in idx),
            bank_seed=self.bank_seed,
        )


def transform(dataset: TrialDataset, bank: KernelBank) -> FeatureMatrix:
    """Apply every kernel to every trial; row order follows the dataset."""
    if len(dataset) == 0:
        return FeatureMatrix(
            values=np.zeros((0, bank.n_features)),
            subject_ids=(), conditions=(), tasks=(), session_ids=(),
            trial_indices=(), bank_seed=bank.seed,
        )
    first = dataset.trials[0].channels
    if first.shape != (bank.num_channels, bank.input_length):
        raise ShapeError(
            f"trials are {first.shape}, bank expects "
            f"({bank.num_channels}, {bank.input_length})"
        )
    X = np.stack([t.channels for t in dataset.trials]).astype(np.float64)
    values = _apply_bank(np.ascontiguousarray(X), *_pack_bank(bank))
    return FeatureMatrix(
        values=values,
        subject_ids=tuple(t.subject_id for t in dataset.trials),
        conditions=tuple(t.condition for t in dataset.trials),
        tasks=tuple(t.task for t in dataset.trials),
        session_ids=tuple(t.session_id for t in dataset.trials),
        trial_indices=tuple(t.trial_index for t in dataset.trials),
        bank_seed=bank.seed,
    )


# ---------------------------------------------------------------------------
# Feature normalization

@dataclass(frozen=True)
class Normalizer:
    """Per-column standardization statistics learned on training rows only."""

    means: np.ndarray
    stds: np.ndarray
    epsilon: float = 1e-8


def fit_normalizer(train_rows: np.ndarray, epsilon: float = 1e-8) -> Normalizer:
    rows = np.asarray(train_rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise InsufficientDataError("need at least 2 training rows to normalize")
    return Normalizer(
        means=rows.mean(axis=0), stds=rows.std(axis=0), epsilon=epsilon
    )


def apply_normalizer(norm: Normalizer, rows: np.ndarray) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.shape[-1] != norm.means.shape[0]:
        raise ShapeError("column count does not match the normalizer")
    return (rows - norm.means) / (norm.stds + norm.epsilon)


# ---------------------------------------------------------------------------
# Bank serialization (audit path; regeneration from seed is canonical)

def save_bank(bank: KernelBank, sink: IO[str] | str | Path) -> None:
    if isinstance(sink, (str, Path)):
        with open(sink, "w", encoding="utf-8", newline="\n") as fh:
            save_bank(bank, fh)
        return
    sink.write(BANK_MAGIC + "\n")
    sink.write(f"seed={bank.seed}\n")
    sink.write(f"num_kernels={len(bank)}\n")
    sink.write(f"input_length={bank.input_length}\n")
    sink.write(f"num_channels={bank.num_channels}\n")
    for k in bank.kernels:
        chans = "|".join(str(int(c)) for c in k.channel_indices)
        weights = " ".join(f"{w:.17g}" for w in k.weights.ravel())
        sink.write(
            f"{k.length},{k.dilation},{int(k.padding)},{k.bias:.17g},"
            f"{chans},{weights}\n"
        )


def load_bank(source: IO[str] | str | Path) -> KernelBank:
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return load_bank(fh)
    magic = source.readline().rstrip("\n")
    if magic != BANK_MAGIC:
        raise FormatError(f"expected {BANK_MAGIC!r}, got {magic!r}")
    header = {}
    for key in ("seed", "num_kernels", "input_length", "num_channels"):
        line = source.readline().rstrip("\n")
        if not line.startswith(key + "="):
            raise FormatError(f"expected {key}= header line")
        header[key] = int(line.split("=", 1)[1])
    kernels = []
    for line in source:
        line = line.rstrip("\n")
        if not line:
            continue
        length_s, dil_s, pad_s, bias_s, chans_s, weights_s = line.split(",", 5)
        channels = np.array([int(c) for c in chans_s.split("|")], dtype=np.int64)
        weights = np.array(weights_s.split(" "), dtype=np.float64)
        kernels.append(
            Kernel(
                weights=weights.reshape(channels.size, int(length_s)),
                channel_indices=channels,
                bias=float(bias_s),
                dilation=int(dil_s),
                padding=bool(int(pad_s)),
            )
        )
    if len(kernels) != header["num_kernels"]:
        raise FormatError(
            f"bank declares {header['num_kernels']} kernels, found {len(kernels)}"
        )
    return KernelBank(
        kernels=tuple(kernels),
        seed=header["seed"],
        input_length=header["input_length"],
        num_channels=header["num_channels"],
    )
