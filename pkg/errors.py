"""Exception hierarchy for FlowGuard.  Each class carries the CLI exit code."""


class FlowGuardError(Exception):
    """Base class for every error the CLI knows how to report."""

    exit_code = 1


class ConfigError(FlowGuardError, ValueError):
    """A configuration value or file is invalid."""

    exit_code = 2


class DataError(FlowGuardError, ValueError):
    """Input data (trace, feature file, labels) cannot be used."""

    exit_code = 3


class TraceFormatError(DataError):
    """A trace file is not in a format we can read."""


class UnsupportedVariantError(TraceFormatError):
    """A recognised capture variant that is deliberately not supported."""


class MalformedTraceError(DataError):
    """Too many malformed rows/records in an otherwise readable trace."""

    def __init__(self, message: str, row_errors: list[str] | None = None):
        super().__init__(message)
        self.row_errors = row_errors or []


class MetricUndefinedError(DataError):
    """A metric has a zero denominator for the given counts."""


class ConvergenceError(FlowGuardError):
    """An iterative solver hit its iteration cap.  ``best`` holds the last iterate."""

    exit_code = 4

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class DegenerateModelError(FlowGuardError):
    """The trained model admits no R value (zero bias or zero kernel energy)."""

    exit_code = 5
