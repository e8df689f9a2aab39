"""Exception hierarchy shared by the library and the command-line front end."""


class DataError(ValueError):
    """Malformed, missing, or incompatible input data."""


class CheckpointError(DataError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


class NumericalError(ArithmeticError):
    """A computation produced non-finite values or failed to make progress."""


class TrainingDiverged(NumericalError):
    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"training diverged at step {step}")


class IntegrationError(NumericalError):
    def __init__(self, t, message):
        self.t = t
        super().__init__(f"{message} (t={t:.10g})")
