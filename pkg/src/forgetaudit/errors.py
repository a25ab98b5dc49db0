"""Exception hierarchy.

Every error raised on purpose by this package derives from
:class:`ForgetAuditError`. The CLI maps each family to an exit code.
"""


class ForgetAuditError(Exception):
    """Base class for all package errors."""

    exit_code = 3


class InputError(ForgetAuditError, ValueError):
    """Malformed or inconsistent input data."""

    exit_code = 2


class ConfigError(ForgetAuditError, ValueError):
    """Invalid configuration value."""

    exit_code = 2


class ParseError(InputError):
    """A file could not be parsed.

    ``line`` (text formats) or ``offset`` (binary formats) locate the problem
    when known.
    """

    def __init__(self, message, *, path=None, line=None, offset=None):
        self.path = None if path is None else str(path)
        self.line = line
        self.offset = offset
        where = []
        if self.path is not None:
            where.append(self.path)
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"byte offset {offset}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class TrainingError(ForgetAuditError, RuntimeError):
    """Optimisation produced a non-finite loss or gradient."""

    exit_code = 3

    def __init__(self, message, *, epoch=None, step=None):
        self.epoch = epoch
        self.step = step
        if epoch is not None or step is not None:
            message = f"{message} (epoch {epoch}, step {step})"
        super().__init__(message)


class SamplingError(ForgetAuditError, RuntimeError):
    """Rejection sampling ran out of its draw budget."""

    exit_code = 3


class DegenerateCalibrationError(ForgetAuditError):
    """The calibration K-S distance is zero, so no verdict can be given."""

    exit_code = 1
