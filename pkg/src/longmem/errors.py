"""Exception hierarchy. Each family maps onto one CLI exit code."""


class LongMemError(Exception):
    exit_code = 1


class InputError(LongMemError, ValueError):
    """Malformed or invalid input data (bad CSV, non-positive prices, ...)."""

    exit_code = 1


class DegenerateDataError(LongMemError, ArithmeticError):
    """Numerically degenerate data, e.g. a zero-variance subperiod."""

    exit_code = 2


class ConfigError(LongMemError, ValueError):
    """Invalid parameters or configuration."""

    exit_code = 3


class PipelineError(LongMemError):
    """Wraps a failure with the name of the pipeline stage that raised it."""

    def __init__(self, stage: str, cause: LongMemError):
        self.stage = stage
        self.cause = cause
        self.exit_code = cause.exit_code
        super().__init__(f"stage '{stage}' failed: {cause}")
