"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Raised for invalid parameters, sizes or configuration files.

    The CLI maps this to exit code 2.
    """

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class InvariantViolation(RuntimeError):
    """An internal consistency check failed (CLI exit code 3)."""
