"""Exception hierarchy. The CLI maps each class onto an exit code."""


class ZshError(Exception):
    """Base class for all package errors."""


class ConfigError(ZshError, ValueError):
    """Invalid parameters or configuration (usage problem)."""


class DataError(ZshError, ValueError):
    """Malformed or inconsistent input data."""


class NumericError(ZshError, ArithmeticError):
    """A numerical procedure could not produce a valid result."""
