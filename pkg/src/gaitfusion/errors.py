"""Exception hierarchy for the toolkit.

Every error raised on purpose derives from ToolkitError so the CLI can map
failures to exit codes and name the pipeline stage that produced them.
"""


class ToolkitError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(ToolkitError):
    """Bad configuration file or option value."""


class ParseError(ToolkitError):
    """Malformed input file; carries the offending line number when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(ToolkitError):
    """Input parsed but violates a structural requirement."""


class QualityError(ToolkitError):
    """Signal quality too poor to continue (e.g. an uninterpolatable gap)."""


class AnalysisError(ToolkitError):
    """A pipeline stage could not produce a result (e.g. too few strides)."""


class NumericError(ToolkitError):
    """Numerical failure; carries the sample index when known."""

    def __init__(self, message, index=None):
        self.index = index
        if index is not None:
            message = f"sample {index}: {message}"
        super().__init__(message)
