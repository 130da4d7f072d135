"""Exception types shared across the package."""


class CarfacError(Exception):
    """Base class for all errors raised by carfac_rt."""


class ConfigError(CarfacError, ValueError):
    """Invalid parameters or inconsistent configuration."""


class ContractError(CarfacError, ValueError):
    """A caller violated an operation precondition."""


class NumericFault(CarfacError, ArithmeticError):
    """Non-finite values appeared in the signal path."""

    def __init__(self, message, channel=None):
        super().__init__(message)
        self.channel = channel


class SingularityError(CarfacError, ZeroDivisionError):
    """A guarded denominator fell below its threshold."""


class FitError(CarfacError, ArithmeticError):
    """The gain quadratic could not be fitted."""


class DatapathError(CarfacError, ValueError):
    """A fixed-point operand violated the hardware width contract."""


class ParseError(CarfacError, ValueError):
    """Malformed input file."""

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


class UnsupportedFormat(CarfacError, ValueError):
    """The input uses an encoding this reader does not handle."""


class FramingError(CarfacError, ValueError):
    """A raw stream length is not a whole number of frames."""


class LayoutError(CarfacError, ValueError):
    """A block shape does not match the sink layout."""
