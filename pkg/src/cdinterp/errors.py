"""Exception hierarchy.

Every error raised by the library derives from :class:`CdiError`. Errors that
stem from bad user input also derive from :class:`ValueError`; errors that stem
from a numerical breakdown derive from :class:`ArithmeticError`. The CLI maps
the first family to exit code 2 and the second to exit code 3.
"""


class CdiError(Exception):
    """Base class for all library errors."""


class ConfigError(CdiError, ValueError):
    """Invalid user configuration."""


class NumericalError(CdiError, ArithmeticError):
    """A numerical procedure could not produce a valid result."""


# linear algebra / Gaussian OT
class InvalidMatrix(ConfigError):
    pass


class NotPositiveDefinite(NumericalError):
    pass


class DimensionError(ConfigError):
    pass


class SingularMap(NumericalError):
    pass


# detection
class EmptySelection(NumericalError):
    pass


class InvalidFraction(ConfigError):
    pass


class InvalidField(ConfigError):
    pass


# fields
class OutOfDomain(NumericalError):
    pass


class GridTooCoarse(ConfigError):
    pass


class ZeroReference(NumericalError):
    pass


class FormatError(ConfigError):
    """Malformed snapshot or marker file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


# interpolation
class NonMonotoneRescaling(NumericalError):
    def __init__(self, message: str, indices: list[int]):
        self.indices = list(indices)
        super().__init__(f"{message} (offending indices: {self.indices})")


# analytic benchmarks
class InvalidTime(ConfigError):
    pass


class InvalidExponent(ConfigError):
    pass


class CharacteristicsCrossed(NumericalError):
    pass


class VacuumError(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class DetachedShock(ConfigError):
    pass


class MapSingular(NumericalError):
    pass


# registration
class InvalidPatch(ConfigError):
    pass


class InversionFailed(NumericalError):
    pass


class OutOfPatch(NumericalError):
    pass
