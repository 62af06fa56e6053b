"""
Exception hierarchy for signflow
"""


class SignflowError(Exception):
    """Base class for every error raised by the package"""


class DimensionError(SignflowError, ValueError):
    """Raised when tensor shapes do not conform"""

    def __init__(self, message: str, *shapes: tuple[int, ...]):
        if shapes:
            message = f"{message} (shapes: {', '.join(str(tuple(s)) for s in shapes)})"
        super().__init__(message)
        self.shapes = shapes


class ContractError(SignflowError, ValueError):
    """Raised when a pre-condition of an operation is violated"""


class GenerationError(SignflowError):
    """Raised when sequence generation cannot proceed"""


class TrainingError(SignflowError):
    """Raised when a training step produces an unusable loss"""

    def __init__(self, message: str, component: str | None = None):
        super().__init__(message)
        self.component = component


class FormatError(SignflowError):
    """Raised when an on-disk file is malformed"""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class CheckpointError(SignflowError):
    """Raised when a checkpoint cannot be written or restored"""

    def __init__(self, message: str, entry: str | None = None):
        if entry:
            message = f"{message} (entry: {entry})"
        super().__init__(message)
        self.entry = entry


class EvaluationError(SignflowError):
    """Raised when evaluation artifacts are missing or inconsistent"""


class ConfigError(SignflowError, ValueError):
    """Raised for unknown or invalid configuration keys"""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key
