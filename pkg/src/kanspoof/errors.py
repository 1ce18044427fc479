"""Exception hierarchy shared by every kanspoof module."""


class KanSpoofError(Exception):
    """Base class for all library errors."""


class DimensionError(KanSpoofError, ValueError):
    """Raised when tensor or parameter shapes are incompatible."""


class ContractError(KanSpoofError, ValueError):
    """Raised when an operation's precondition is violated."""


class InitializationError(KanSpoofError, ValueError):
    pass


class FittingError(KanSpoofError, ValueError):
    pass


class MetricError(KanSpoofError, ValueError):
    """Raised when a metric cannot be computed from the given trials."""


class ParseError(KanSpoofError, ValueError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where = f"{where}{line}: "
        elif where:
            where += " "
        super().__init__(f"{where}{message}")


class InputError(KanSpoofError, ValueError):
    pass


class TrainingError(KanSpoofError, RuntimeError):
    def __init__(self, message, epoch=None):
        self.epoch = epoch
        if epoch is not None:
            message = f"epoch {epoch}: {message}"
        super().__init__(message)


class CheckpointError(KanSpoofError, ValueError):
    """Raised when a checkpoint file cannot be decoded; ``field`` names the culprit."""

    def __init__(self, message, field=None):
        self.field = field
        super().__init__(message if field is None else f"{field}: {message}")
