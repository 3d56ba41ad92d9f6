"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, NumericalError
(and subclasses) -> 3, validation failures -> 1.
"""


class ConfigError(Exception):
    """Malformed or inconsistent experiment configuration."""


class NumericalError(RuntimeError):
    """A numerical routine failed beyond its tolerance guards."""


class QuadratureError(NumericalError):
    """Adaptive quadrature did not converge; message carries the achieved error."""


class GridResolutionError(NumericalError):
    """A density is not representable on the configured convolution grid."""


class TailFitError(NumericalError):
    """Kernel values admit no power-law tail fit on the requested range."""
