"""Exception hierarchy and process exit codes shared across the package."""

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_NO_ROOT = 4


class QtailError(Exception):
    """Base class for all package errors."""

    exit_code = EXIT_NUMERIC


class ConfigError(QtailError):
    """Invalid configuration: bad units, non-lattice quantities, schema violations."""

    exit_code = EXIT_CONFIG


class DomainError(QtailError, ValueError):
    """An operation was called outside its mathematical domain."""

    exit_code = EXIT_CONFIG


class NumericError(QtailError):
    """Numerical-integrity violation: mass accounting, row sums, NaNs."""

    exit_code = EXIT_NUMERIC


class SolverError(NumericError):
    """A linear solve failed or did not reach its residual target."""


class OrderingViolation(NumericError):
    """Upper/lower curves crossed beyond tolerance; signals an upstream bug."""


class NoRootError(QtailError):
    """A root-finding bracket contained no sign change."""

    exit_code = EXIT_NO_ROOT


class UnstableError(NoRootError):
    """Mean service does not exceed mean arrivals; no QoS exponent exists."""


class SpliceError(NoRootError):
    """No Monte-Carlo point reaches the requested hybrid splice level."""
