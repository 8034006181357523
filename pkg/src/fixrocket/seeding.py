"""Named, derived random streams.

Every run hangs off one global seed; each consumer (split assignment, kernel
bank, resampling, cohort synthesis) draws from its own derived stream so that
adding a consumer never shifts another one's values.
"""
from __future__ import annotations

import numpy as np

STREAMS = {
    "split": 1,
    "kernels": 2,
    "sampling": 3,
    "cohort": 4,
}


def derived_seed(base_seed: int, stream: str, *extra: int) -> int:
    """Deterministic integer seed for a named stream under a base seed."""
    if stream not in STREAMS:
        raise KeyError(f"unknown stream {stream!r}; known: {sorted(STREAMS)}")
    seq = np.random.SeedSequence([int(base_seed), STREAMS[stream], *map(int, extra)])
    return int(seq.generate_state(1, dtype=np.uint64)[0] % (2**63))


def stream_rng(base_seed: int, stream: str, *extra: int) -> np.random.Generator:
    return np.random.default_rng(derived_seed(base_seed, stream, *extra))
