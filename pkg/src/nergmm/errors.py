"""Exception and warning types shared across the package."""


class ValidationError(ValueError):
    """Raised when input data violates a documented contract.

    Examples: non-finite flatfile values, magnitudes outside the supported
    range, a station id mapped to two different coordinate pairs.
    """


class ConstraintError(ValueError):
    """Raised when a model constraint cannot be honored.

    Example: requesting the full-saturation tie c5 = -c2/ln(c6) with c6 <= 1,
    where the logarithm is zero or undefined.
    """


class HyperparameterError(ValueError):
    """Raised for hyperparameter values outside their admissible domain.

    Example: negative kernel variance, zero or negative length scale,
    bounds whose lower edge exceeds the upper edge.
    """


class OutOfGridError(ValueError):
    """Raised when a source-station ray leaves the attenuation cell grid."""


class NumericalError(RuntimeError):
    """Raised when a linear-algebra operation fails beyond repair.

    Example: a covariance matrix that is not positive definite even after
    the maximum number of jitter escalations.
    """


class ConvergenceError(RuntimeError):
    """Raised when an optimizer exhausts its budget without converging."""


class ModelQualityWarning(UserWarning):
    """Warning for fitted models that are usable but suspect.

    Example: more than 5% of cell attenuation coefficients required clamping
    to the non-positive half-line.
    """
