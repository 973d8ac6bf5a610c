"""Exception and warning types shared across the package."""


class InvalidSpecError(ValueError):
    """A source or detector description has out-of-range parameters."""


class UndefinedCorrelationError(ValueError):
    """A correlation function was requested where its denominator vanishes."""


class DegenerateFitError(ArithmeticError):
    """The weighted normal matrix of a fit is singular."""


class ConfigError(ValueError):
    """A run configuration or input file is malformed."""


class ModelValidityWarning(UserWarning):
    """Simulation left the regime where the linear crosstalk model is valid."""


class UnphysicalCorrectionWarning(UserWarning):
    """Crosstalk correction produced a negative correlation value."""
