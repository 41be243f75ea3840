"""Exception types raised across the package."""


class AtstError(Exception):
    """Base class for all package errors."""


class ModelValidationError(AtstError, ValueError):
    """A model, dataset or config failed validation.

    ``cell`` carries the offending index (state, action, ...) when known.
    """

    def __init__(self, message, cell=None):
        self.cell = cell
        if cell is not None:
            message = f"{message} at {cell}"
        super().__init__(message)


class NonStochasticKernel(ModelValidationError):
    pass


class NormBoundViolated(ModelValidationError):
    pass


class CostOutOfRange(ModelValidationError):
    pass


class NonStochasticReset(ModelValidationError):
    pass


class DegenerateDistribution(ModelValidationError):
    pass


class EmptyTail(AtstError, ValueError):
    """Extended features and beliefs need at least one pending action."""


class DepthExhausted(AtstError, ValueError):
    pass


class PlanningTooLarge(AtstError, ValueError):
    """The truncated augmented tree would exceed the node budget."""


class EpsilonTooLarge(AtstError, ValueError):
    pass


class OptimizerBudgetExceeded(AtstError, RuntimeError):
    pass


class ConfigError(ModelValidationError):
    pass
