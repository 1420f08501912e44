"""Exception types shared across the package.

ConfigError maps to CLI exit code 2 (bad configuration or usage),
InvariantViolation to exit code 3 (a runtime check that should never fire
tripped mid-run).
"""


class ConfigError(ValueError):
    """Invalid configuration file, option, or hypothesis precondition."""


class InvariantViolation(RuntimeError):
    """A runtime invariant broke during simulation or verification."""
