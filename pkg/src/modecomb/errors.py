"""Exception hierarchy shared across the package."""


class ValidationError(ValueError):
    """Invalid argument, parameter out of range, or malformed input."""


class DimensionError(ValidationError):
    """Array shapes or lengths that do not fit together."""


class FormatError(ValidationError):
    """A weight archive or permutation file that cannot be decoded."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(ValidationError):
    """Problem in an experiment config; carries the offending line when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, loss):
        super().__init__(f"non-finite training loss {loss!r} in epoch {epoch}")
        self.epoch = epoch
        self.loss = loss
