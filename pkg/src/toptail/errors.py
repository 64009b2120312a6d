"""Exception and warning types shared across the package."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class ContractError(ValueError):
    """Inputs violate a precondition linking several arguments."""


class DegenerateSampleError(ValueError):
    """Sample carries no information about the parameter being estimated."""


class FormatError(ValueError):
    """Malformed rating-list input."""


class NumericalError(ArithmeticError):
    """Base class for numerical failures (CLI exit code 3)."""


class SingularInformationError(NumericalError):
    """Observed information matrix is not positive definite."""


class PropagationError(NumericalError):
    """Focus function is not finite at the estimate."""


class BoundaryFitWarning(UserWarning):
    """Optimum found on the edge of the search box."""


class AsymptoticRegimeWarning(UserWarning):
    """Tail approximation evaluated outside its asymptotic regime."""
