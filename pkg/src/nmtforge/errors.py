"""Exception types shared across the toolkit."""


class NmtForgeError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(NmtForgeError, ValueError):
    """Operand shapes are incompatible with the requested operation."""


class ConfigError(NmtForgeError, ValueError):
    """A configuration value is invalid or missing."""


class ContractError(NmtForgeError, RuntimeError):
    """An operation was invoked outside its stated preconditions."""


class AlignmentError(NmtForgeError, ValueError):
    """Parallel inputs (files, sentence lists) are not aligned."""


class UnsupportedArchitectureError(NmtForgeError, ValueError):
    """The requested operation does not exist for this architecture."""


class NonFiniteError(NmtForgeError, RuntimeError):
    """A loss or gradient became NaN or infinite. Carries the culprit's name."""
