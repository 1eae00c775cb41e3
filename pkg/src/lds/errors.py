"""Exception hierarchy.

Every error raised deliberately by the package derives from :class:`LDSError`,
so callers (and the CLI, which maps them to exit codes) can catch one base.
"""


class LDSError(Exception):
    """Base class for all package errors."""


class StructuralError(LDSError, ValueError):
    """Inputs are structurally incompatible (alphabet mismatch, unknown label, empty basis)."""


class DomainError(LDSError, ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class NumericalError(LDSError, ArithmeticError):
    """An iterative solver failed to converge."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics

    def __str__(self):
        base = super().__str__()
        if not self.diagnostics:
            return base
        details = ", ".join(f"{k}={v!r}" for k, v in self.diagnostics.items())
        return f"{base} ({details})"


class CapacityError(LDSError, RuntimeError):
    """An exact computation would exceed its table or enumeration cap."""


class InferenceError(LDSError, ValueError):
    """The posterior has zero total mass."""


class ConfigurationError(LDSError, ValueError):
    """A quantity was requested without the inputs it needs."""


class DegenerateModelError(LDSError, ValueError):
    """Standard-form exponents carry no vanishing direction."""


class ParseError(LDSError, ValueError):
    """A sample file could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SchemaError(LDSError, ValueError):
    """An experiment configuration failed validation."""
