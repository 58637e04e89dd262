"""Exception types shared across the package."""


class QSampleFlowError(Exception):
    """Base class for all package errors."""


class InvalidIndexError(QSampleFlowError, IndexError):
    pass


class ParameterError(QSampleFlowError, ValueError):
    """An argument is outside the range where the computation is defined."""


class ConfigurationError(ParameterError):
    pass


class DomainError(ParameterError):
    """Time or position outside the model's horizon/domain."""


class EvaluationError(QSampleFlowError, ArithmeticError):
    """A model produced non-finite values."""


class SizeError(QSampleFlowError, MemoryError):
    """Dense materialization requested above the configured cap."""


class ShapeError(QSampleFlowError, ValueError):
    pass


class InsufficientSamplesError(ParameterError):
    pass


class DegenerateDistributionError(QSampleFlowError, ValueError):
    pass


class NormalizationError(QSampleFlowError, ValueError):
    pass


class ToleranceError(QSampleFlowError, RuntimeError):
    """An iterative reference computation did not reach its tolerance."""


class StiffnessError(ToleranceError):
    pass


class BudgetError(QSampleFlowError, RuntimeError):
    pass


class OracleError(ToleranceError):
    pass
