"""Exception types shared across the package.

The CLI maps InputError to exit code 2 and DomainError to exit code 1.
"""


class FragnetError(Exception):
    """Base class for all package errors."""


class InputError(FragnetError):
    """Malformed files, schema violations, or inconsistent configuration."""


class DomainError(FragnetError):
    """Valid input that violates a mathematical precondition."""
