"""Stretched-exponential models for scores above a high threshold."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AsymptoticRegimeWarning,
    BoundaryFitWarning,
    ContractError,
    DegenerateSampleError,
    DomainError,
    FormatError,
    NumericalError,
    PropagationError,
    SingularInformationError,
)
from .estimation import (  # noqa: E402
    FitResult,
    RatingSample,
    SharedFitResult,
    TopKSample,
    delta_method,
    fit_full,
    fit_shared_tail,
    fit_topk,
    loglik_full,
    loglik_topk,
    profile_theta,
)
from .model import MomentSummary, ThresholdModel, cdf, density, moments, quantile, sample  # noqa: E402
