"""Exception types shared across the package."""


class ConvergenceError(RuntimeError):
    """An iterative factorization failed to converge."""


class CapacityError(RuntimeError):
    """A requested allocation exceeds the configured memory cap."""


class ProtocolError(RuntimeError):
    """A wire frame or handshake violated the protocol."""


class CollectiveTimeout(TimeoutError):
    """A collective operation missed its deadline."""


class DegenerateModeError(RuntimeError):
    """A requested mode has a zero singular value and cannot be normalized."""


class MatrixFormatError(ValueError):
    """A matrix file or buffer does not match the expected layout."""


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""
