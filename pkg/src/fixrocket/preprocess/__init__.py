"""Signal preprocessing: filtering and the session-to-trial pipeline."""

from .filters import (
    FilterSpec,
    design_highpass_sos,
    highpass_filter,
    sos_response,
    sosfilt,
)
from .pipeline import (
    PipelineReport,
    PreprocessedSession,
    SanitizeReport,
    angular_to_positional,
    combine_and_calibrate,
    differentiate,
    preprocess_pipeline,
    replace_outliers,
    sanitize_sessions,
    segment_trials,
    session_statistics,
)

__all__ = [
    "FilterSpec",
    "design_highpass_sos",
    "highpass_filter",
    "sos_response",
    "sosfilt",
    "PipelineReport",
    "PreprocessedSession",
    "SanitizeReport",
    "angular_to_positional",
    "combine_and_calibrate",
    "differentiate",
    "preprocess_pipeline",
    "replace_outliers",
    "sanitize_sessions",
    "segment_trials",
    "session_statistics",
]
