"""Typed exceptions shared across the toolkit.

Every operation raises one of these instead of a bare built-in, so callers
(and the CLI exit-code mapping) can distinguish usage mistakes from bad data.
"""


class FixrocketError(Exception):
    """Base class for all toolkit errors."""


class FormatError(FixrocketError):
    """File does not conform to the documented grammar (malformed header etc.)."""


class SchemaError(FixrocketError):
    """A required column or field is missing."""


class SequencingError(FixrocketError):
    """Timestamps or indices are out of order."""


class IncompatibilityError(FixrocketError):
    """File schema version is not supported."""


class IntegrityError(FixrocketError):
    """File is truncated or its payload is inconsistent with its header."""


class DomainError(FixrocketError):
    """Argument lies outside the mathematical domain of the operation."""


class DataError(FixrocketError):
    """Numeric data is non-finite or otherwise invalid."""


class InsufficientDataError(FixrocketError):
    """Not enough samples, rows, or cohort members to proceed."""


class DegenerateDataError(FixrocketError):
    """Input collapses to a degenerate case (all outliers, one class, ...)."""


class DesignError(FixrocketError):
    """Filter specification cannot be realized."""


class ShapeError(FixrocketError):
    """Array shapes do not match the expected layout."""


class SplitError(FixrocketError):
    """A subject split or fold plan cannot be constructed."""


class AggregationError(FixrocketError):
    """Subject-level aggregation received an empty group."""


class ConfigError(FixrocketError):
    """Configuration value is invalid."""


class UsageError(FixrocketError):
    """Command line was invoked incorrectly."""
