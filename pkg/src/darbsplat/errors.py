"""Exception hierarchy shared by every module in the package."""


class DarbsError(Exception):
    """Base class for all errors raised by darbsplat."""

    #: short machine-parsable class name, used by the CLI error line
    kind = "error"


class InvalidParameterError(DarbsError, ValueError):
    kind = "invalid-parameter"


class DomainError(DarbsError, ValueError):
    kind = "domain"


class DegenerateCovarianceError(DarbsError, ArithmeticError):
    kind = "degenerate-covariance"


class DegenerateDensityError(DarbsError, ArithmeticError):
    kind = "degenerate-density"


class TruncationError(DarbsError, ValueError):
    """Density grid does not cover the kernel's support."""

    kind = "truncation"


class CalibrationError(DarbsError, ArithmeticError):
    kind = "calibration-failure"


class DivergenceError(DarbsError, ArithmeticError):
    kind = "divergence"


class ContractError(DarbsError, RuntimeError):
    """Inputs of a backward pass do not match the forward pass that produced them."""

    kind = "contract-violation"


class CulledError(DarbsError, ArithmeticError):
    kind = "all-culled"


class FormatError(DarbsError, ValueError):
    """A scene, camera, image or config file could not be parsed."""

    kind = "format"


class UsageError(DarbsError, ValueError):
    """Bad command line or config file."""

    kind = "usage"


# CLI exit status per error class; anything unlisted is a numeric failure
EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 1, 2, 3


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, (UsageError, InvalidParameterError)):
        return EXIT_USAGE
    if isinstance(exc, (FormatError, OSError)):
        return EXIT_IO
    return EXIT_NUMERIC
