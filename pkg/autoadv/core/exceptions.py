"""Exception hierarchy shared by every autoadv module."""


class AutoAdvError(Exception):
    """Base class for all errors raised by autoadv."""


class DimensionError(AutoAdvError, ValueError):
    """Operand shapes are incompatible."""


class ContractError(AutoAdvError, ValueError):
    """A documented precondition was violated by the caller."""


class ConfigError(AutoAdvError, ValueError):
    """A configuration key or value is invalid."""


class NumericError(AutoAdvError, ArithmeticError):
    """An operation produced a NaN or an infinity."""


class TrainingError(NumericError):
    """Classifier training diverged."""

    def __init__(self, epoch: int, message: str):
        super().__init__(f"training diverged at epoch {epoch}: {message}")
        self.epoch = epoch


class OptimizationError(NumericError):
    """An optimizer received non-finite gradients."""


class DegenerateGradientError(AutoAdvError):
    """The perturbation gradient vanished (l1 norm below tolerance)."""

    def __init__(self, norm: float):
        super().__init__(f"degenerate gradient: l1 norm {norm:.3e}")
        self.norm = norm


class FormatError(AutoAdvError, ValueError):
    """A container file or report could not be parsed."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ShortfallError(AutoAdvError):
    """Fewer usable images exist than were requested."""

    def __init__(self, requested: int, available: int):
        super().__init__(
            f"requested {requested} correctly classified images but only {available} are available"
        )
        self.requested = requested
        self.available = available
