"""Exception types shared across the package."""


class MudichotomyError(Exception):
    """Base class for all package errors."""


class DomainError(MudichotomyError, ValueError):
    """An argument lies outside the mathematical domain (e.g. a non-finite time)."""


class ParameterError(MudichotomyError, ValueError):
    """A numerical parameter (window, grid, tolerance) is unusable."""


class EvolutionOverflowError(MudichotomyError, ArithmeticError):
    """Matrix-mode evolution left the floating point range."""


class UnsupportedCapabilityError(MudichotomyError, NotImplementedError):
    """The requested operation is outside the documented capability of the estimator."""


class ConfigError(MudichotomyError, ValueError):
    """An experiment configuration failed validation.

    ``path`` names the offending field, e.g. ``inputs.rate``.
    """

    def __init__(self, message, path=""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
