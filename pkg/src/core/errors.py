from typing import Optional


class ForecasterError(Exception):
    """Base class for every error raised on purpose by this package."""


class ParseError(ForecasterError, ValueError):
    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        prefix = f"line {line_number}: " if line_number is not None else ""
        super().__init__(f"{prefix}{message}")


class ConfigurationError(ForecasterError, ValueError):
    pass


class DataError(ForecasterError, ValueError):
    pass


class TrainingDivergedError(ForecasterError, RuntimeError):
    def __init__(self, epoch: int, step: int, lr: float, last_finite_loss: Optional[float]):
        self.epoch = epoch
        self.step = step
        self.lr = lr
        self.last_finite_loss = last_finite_loss
        super().__init__(
            f"Loss became NaN at epoch {epoch}, step {step} (lr={lr:.3e}, "
            f"last finite loss={last_finite_loss})"
        )


class CheckpointError(ForecasterError):
    pass
