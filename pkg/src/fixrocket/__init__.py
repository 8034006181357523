"""fixrocket: gaze-fixation time-series classification toolkit.

Pipeline: raw binocular gaze recordings -> preprocessed 4-channel fixation
trials -> random-kernel features -> ridge classifier -> optional sequential
feature detachment -> subject-level soft voting, with a synthetic cohort
generator and an experiment harness around it.
"""

__version__ = "0.1.0"

from .data import (
    RawSession,
    Trial,
    TrialDataset,
    load_dataset,
    load_raw_session,
    save_dataset,
    save_raw_session,
)
from .preprocess import FilterSpec, preprocess_pipeline
from .ridge import RidgeModel, fit_ridge
from .rocket import KernelBank, generate_kernels, transform

__all__ = [
    "__version__",
    "RawSession",
    "Trial",
    "TrialDataset",
    "load_dataset",
    "load_raw_session",
    "save_dataset",
    "save_raw_session",
    "FilterSpec",
    "preprocess_pipeline",
    "RidgeModel",
    "fit_ridge",
    "KernelBank",
    "generate_kernels",
    "transform",
]
