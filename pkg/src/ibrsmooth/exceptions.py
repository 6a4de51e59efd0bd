"""Error and warning types shared across the package.

The CLI maps :class:`InputError` and :class:`CalibrationError` to exit code 2
(bad inputs) and :class:`NumericalError` subclasses to exit code 3 (numerical
failure or refused divergence).
"""


class SmootherError(Exception):
    """Base class for all errors raised by this package."""


class InputError(SmootherError, ValueError):
    """Invalid arguments, shapes, or file schemas."""


class CalibrationError(SmootherError):
    """A degrees-of-freedom target cannot be reached by any tuning value."""


class NumericalError(SmootherError):
    """Linear-algebra failure: singular system, failed eigendecomposition."""


class DivergenceError(NumericalError):
    """The requested base smoother would make the iteration diverge."""


class ExtrapolationError(SmootherError):
    """A compact-support kernel has no training point near the query."""


class UndefinedScoreError(SmootherError):
    """GCV is undefined at this point of the path (df = n or zero residual)."""


class SmootherWarning(UserWarning):
    """Base class for warnings emitted by this package."""


class DuplicateRowsWarning(SmootherWarning):
    """The design matrix contains exactly repeated rows."""


class CalibrationWarning(SmootherWarning):
    """A df target was matched only approximately (discrete trace jumps)."""


class ConditioningWarning(SmootherWarning):
    """A ridge was added to an ill-conditioned radial block."""


class BoundaryWarning(SmootherWarning):
    """GCV selected the last point of the iteration grid."""


class DivergenceWarning(SmootherWarning):
    """Iterating with a spectrum outside [0, 1]; results may diverge."""
