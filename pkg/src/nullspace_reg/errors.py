"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """Raised when a caller breaks a documented precondition (shapes, signs)."""


class RejectedInput(ValueError):
    """Input data that cannot be processed, e.g. non-finite matrix entries."""


class ParameterError(ValueError):
    """A regularization parameter is incompatible with the operator."""


class ConfigError(ValueError):
    """An experiment or problem configuration is invalid."""


class IntegrityError(RuntimeError):
    """A serialized artifact does not belong to the operator it is used with."""


class NumericalError(RuntimeError):
    """An iterative routine did not converge; ``estimate`` holds the best value found."""

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class TrainingStalled(RuntimeError):
    """Backtracking could not find a non-increasing step.

    ``history`` carries the loss breakdowns recorded before the stall.
    """

    def __init__(self, message, history):
        super().__init__(message)
        self.history = history
