"""Exception types raised by the estimation pipeline."""


class DoaError(Exception):
    """Base class for all package errors."""

    kind = "doa_error"


class DegenerateDirections(DoaError, ValueError):
    kind = "degenerate_directions"


class BadNoiseCovariance(DoaError, ValueError):
    kind = "bad_noise_covariance"


class InsufficientElements(DoaError, ValueError):
    kind = "insufficient_elements"


class SingularBlock(DoaError, ArithmeticError):
    """A block that must be inverted is (numerically) singular.

    Typical causes are coherent sources or a misspecified source count.
    """

    kind = "singular_block"


class NumericalFailure(DoaError, ArithmeticError):
    kind = "numerical_failure"


class ScenarioError(DoaError, ValueError):
    kind = "scenario_error"
