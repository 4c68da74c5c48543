"""Exception types shared across the package.

Every failure the command-line tool maps to an exit code is rooted here:
configuration problems, bad input data, incompatible persisted artifacts,
and numerical breakdown.
"""


class FadelError(Exception):
    """Base class for package-specific failures."""


class ConfigError(FadelError, ValueError):
    """A configuration value, manifest field, or schema is invalid."""


class InputError(FadelError, ValueError):
    """A structurally valid call received data violating a precondition."""


class VersionError(ConfigError):
    """A persisted artifact is incompatible with the running code."""


class NumericError(FadelError, ArithmeticError):
    """A computation produced non-finite values or otherwise broke down."""
