"""Exception types shared across the package."""


class NoiseIdError(Exception):
    """Base class for all package errors."""


class ValidationError(NoiseIdError):
    """Input failed a type or invariant check."""


class DimensionError(ValidationError):
    """Shapes of the inputs do not agree."""


class CapabilityError(NoiseIdError):
    """The request is valid but outside the documented operating limits."""


class SearchExhaustedError(NoiseIdError):
    """A randomized search used up its budget without finding a solution."""


class SingularConversionError(NoiseIdError):
    """A closed-form conversion hit a singular denominator."""


class DegenerateClassError(NoiseIdError):
    """A class has zero probability mass where positive mass is required."""


class ConvergenceWarning(UserWarning):
    """The solver stopped without reaching its target residual."""
