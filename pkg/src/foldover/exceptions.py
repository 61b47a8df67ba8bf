"""Exception types shared across the package."""

import numpy as np


class DesignError(ValueError):
    """A design matrix or its metadata violates a structural requirement."""


class ConfigurationError(ValueError):
    """Requested settings are infeasible."""


class DomainError(ValueError):
    """An argument is outside the domain of a numerical function."""


class DimensionError(ValueError):
    """A matrix has an unusable shape."""


class SingularMatrixError(np.linalg.LinAlgError):
    """A matrix that must be inverted is numerically singular."""

    def __init__(self, message, rank=None):
        super().__init__(message)
        self.rank = rank


class DofMismatchError(ArithmeticError):
    """Group-count and rank-based degrees of freedom disagree."""
