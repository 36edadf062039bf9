"""Exception types raised across the package."""


class MidCLTError(Exception):
    """Base class for all package errors."""


class InvalidParameters(MidCLTError, ValueError):
    pass


class QuadratureFailure(MidCLTError, ArithmeticError):
    """Adaptive quadrature did not reach the requested tolerance."""


class RootNotBracketed(MidCLTError, ArithmeticError):
    pass


class InvalidPartition(MidCLTError, ValueError):
    pass


class NotPositiveDefinite(MidCLTError, ArithmeticError):
    """Cholesky factorisation failed for every jitter level tried."""


class GridMismatch(MidCLTError, ValueError):
    pass


class NonConvergentSeries(MidCLTError, ArithmeticError):
    pass


class InsufficientData(MidCLTError, ValueError):
    pass


class SampleTooSmall(MidCLTError, ValueError):
    pass


class EmptySample(MidCLTError, ValueError):
    pass


class UnsupportedFunction(MidCLTError, ValueError):
    pass


class ConfigError(MidCLTError, ValueError):
    """Malformed configuration file; message carries line and field."""


class UnsupportedKernel(MidCLTError, ValueError):
    """Kernel parameters outside the range with a known eta model."""


class NonMonotoneEta(MidCLTError, ValueError):
    pass


class NonPositiveVariance(MidCLTError, ValueError):
    pass
